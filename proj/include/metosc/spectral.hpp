#pragma once

// Spectral-element discretization of the monodromy operator of a linear DDE
// and stability classification of equilibria from its multipliers.

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "metosc/cheb.hpp"
#include "metosc/grid.hpp"
#include "metosc/model.hpp"

namespace metosc {

using Complex = std::complex<double>;

class MeshError : public std::runtime_error {
 public:
  MeshError(const std::string& what, int element) : std::runtime_error(what), element_(element) {}
  int element() const { return element_; }

 private:
  int element_;
};

struct MonodromyOptions {
  double trivial_tol = 1e-5;
  bool exclude_trivial = true;
};

struct MonodromyResult {
  Eigen::MatrixXd U;
  std::vector<Complex> multipliers;  // descending modulus
  Complex dominant{0.0, 0.0};
  bool trivial_found = false;
};

enum class Stability { Stable, Unstable, Marginal };
std::string to_string(Stability s);

struct StabilityVerdict {
  Stability kind = Stability::Marginal;
  double dominant_modulus = 0.0;
  Complex dominant{0.0, 0.0};
  bool trivial_found = false;
};

/// Maps the solution on [t - period, t], sampled on the mesh nodes, one period
/// forward. Requires every delay <= period. The state has
/// dim * mesh.node_count() entries.
MonodromyResult build_monodromy(const LinearDDE& sys, double period, const SpectralMesh& mesh,
                                const MonodromyOptions& opt = {});

/// Sets dominant/trivial_found from multipliers. Excludes the single
/// multiplier closest to +1 when it lies within trivial_tol.
void select_dominant(MonodromyResult& res, const MonodromyOptions& opt);

StabilityVerdict classify(const MonodromyResult& res, double marg_tol = 1e-4,
                          const MonodromyOptions& opt = {});

/// Convenience: equilibrium -> linearization -> monodromy with period equal
/// to the largest delay.
MonodromyResult equilibrium_monodromy(const Equilibrium& eq, const ModelParams& prm,
                                      const SpectralMesh& mesh, const MonodromyOptions& opt = {});

// ---------------------------------------------------------------------------
// Parameter-plane sweeps

enum class CellStatus { Ok, Absent, Failed };
std::string to_string(CellStatus s);

struct StabilityCell {
  double tau = 0.0;
  double R_T = 0.0;
  Complex dominant{0.0, 0.0};
  double modulus = 0.0;
  int n_equilibria = 0;
  bool incomplete = false;  // equilibrium search could not certify completeness
  CellStatus status = CellStatus::Absent;
  Stability verdict = Stability::Marginal;
  std::string message;
};

struct StabilityGridSpec {
  ModelParams base;  // constants; delay and total resource are overwritten per cell
  Axis tau;
  Axis rt;
  EquilibriumKind kind = EquilibriumKind::Top;
  SpectralMesh mesh;
  double marg_tol = 1e-4;
  MonodromyOptions monodromy;
  // Equilibrium counts only: cells with the equilibrium get status Ok and a
  // NaN modulus.
  bool count_only = false;
};

struct StabilityGrid {
  StabilityGridSpec spec;
  std::vector<StabilityCell> cells;  // row-major, tau fastest

  const StabilityCell& at(std::size_t i_tau, std::size_t j_rt) const {
    return cells[j_rt * spec.tau.size() + i_tau];
  }
};

/// One independent cell per (tau, R_T); the result does not depend on jobs.
StabilityGrid stability_grid(const StabilityGridSpec& spec, unsigned jobs = 1);

/// Single cell of stability_grid.
StabilityCell stability_cell(const StabilityGridSpec& spec, double tau, double rt);

}  // namespace metosc
