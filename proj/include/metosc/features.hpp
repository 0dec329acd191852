#pragma once

// Scalar features of asymptotic responses and parameter-plane feature maps.

#include <stdexcept>
#include <string>
#include <vector>

#include "metosc/ddesim.hpp"
#include "metosc/grid.hpp"

namespace metosc {

/// Sum over protein components of (max - min) / 2 across the samples in
/// [t0, t1]. R is excluded. Throws std::domain_error if no sample lies in the
/// window.
double amplitude_feature(const Trajectory& traj, double t0, double t1);

class NotPeriodicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PhaseOffsets {
  double period = 0.0;
  std::vector<double> offsets;  // per protein, fraction of the period in [0, 1)
};

/// Period from the autocorrelation of p1 over [t0, t1], then the peak time of
/// each protein within the last period; offsets are (t_i - t_1) / T mod 1.
/// Throws NotPeriodicError when the autocorrelation peak is below 0.5.
PhaseOffsets peak_phase_offsets(const Trajectory& traj, double t0, double t1);

/// Distance of a cyclic offset from 0, in [0, 0.5].
double circular_offset(double offset);

// ---------------------------------------------------------------------------
// Grids

enum class FeatureAxes { P0_RT, Tau_RT };

struct FeatureGridSpec {
  ModelParams base;  // constants; the swept quantities are overwritten per cell
  FeatureAxes axes = FeatureAxes::Tau_RT;
  Axis axis1;         // p0 or tau
  Axis rt;            // total resource
  double p0 = 10.0;   // used when axis1 is tau
  double horizon_delays = 1000.0;
  double window_delays = 100.0;
  SimOptions sim;
};

enum class FeatureStatus { Ok, Failed };
std::string to_string(FeatureStatus s);

struct FeatureCell {
  double a1 = 0.0;
  double R_T = 0.0;
  double value = 0.0;
  FeatureStatus status = FeatureStatus::Ok;
  State final_state;
  std::string message;
};

struct FeatureGrid {
  FeatureGridSpec spec;
  std::vector<FeatureCell> cells;  // row-major, axis1 fastest

  const FeatureCell& at(std::size_t i1, std::size_t j_rt) const { return cells[j_rt * spec.axis1.size() + i1]; }
};

FeatureCell feature_cell(const FeatureGridSpec& spec, double a1, double rt);
FeatureGrid feature_grid(const FeatureGridSpec& spec, unsigned jobs = 1);

}  // namespace metosc
