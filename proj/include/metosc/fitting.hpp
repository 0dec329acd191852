#pragma once

// Bifurcation boundaries from stability grids and their polynomial fits.

#include <ostream>
#include <vector>

#include "metosc/spectral.hpp"

namespace metosc {

enum class BoundaryCriterion {
  // |dominant multiplier| - 1 changes sign between neighbouring cells
  ModulusCrossing,
  // number of equilibria changes between neighbouring cells
  CountChange,
};

struct BoundaryPoint {
  double tau = 0.0;
  double R_T = 0.0;
  int index = 0;  // crossing number within its tau column, from low R_T
};

/// Scans each tau column in ascending R_T. Modulus crossings are linearly
/// interpolated between two Ok cells; count changes are placed midway.
/// Pairs involving a failed cell are skipped, as are columns without a
/// crossing.
std::vector<BoundaryPoint> extract_boundary(const StabilityGrid& grid, BoundaryCriterion criterion);

/// Points with tau_min <= tau <= tau_max.
std::vector<BoundaryPoint> restrict_domain(const std::vector<BoundaryPoint>& pts, double tau_min,
                                           double tau_max);

struct BoundaryCurve {
  std::vector<BoundaryPoint> points;
  std::vector<double> coeffs;  // ascending degree
  double r2 = 0.0;
  double tau_min = 0.0, tau_max = 0.0;

  int degree() const { return static_cast<int>(coeffs.size()) - 1; }
  double operator()(double tau) const;
};

/// Ordinary least squares R_T = sum_k c_k tau^k. Needs degree + 2 points;
/// throws std::invalid_argument when the design matrix is rank deficient.
BoundaryCurve fit_polynomial(const std::vector<BoundaryPoint>& pts, int degree);

/// 1 - SS_res / SS_tot of a curve on its points, computed directly.
double coefficient_of_determination(const BoundaryCurve& c);

void write_json(std::ostream& os, const BoundaryCurve& c);

}  // namespace metosc
