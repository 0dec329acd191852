#pragma once

// Fixed-step method-of-steps integration of the nonlinear delay models.

#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "metosc/model.hpp"

namespace metosc {

enum class HistoryKind {
  // Zero state for t < 0, then (p0, R_T) at t = 0.
  StarvationJump,
  // The given state for all t <= 0.
  Constant,
};

struct HistorySpec {
  HistoryKind kind = HistoryKind::StarvationJump;
  std::vector<double> p0;  // StarvationJump: one entry per protein
  State constant;          // Constant

  static HistorySpec starvation(std::vector<double> p0);
  static HistorySpec at_state(State s);
  void validate(const Model& model) const;
};

/// History for theta < 0.
State history_value(const HistorySpec& spec, const ModelParams& prm, double theta);
/// State at t = 0.
State initial_state(const HistorySpec& spec, const ModelParams& prm);

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimOptions {
  int steps_per_delay = 100;
  // Upper bound on the step. The production transients decay at rate D, so
  // D * h must stay small for stability and for the conservation residual.
  double max_step = 0.005;
  // The step is also capped at pulse_fraction * kappa / (B_max * R_T), the
  // time a production pulse needs to cross the Hill threshold. 0 disables.
  double pulse_fraction = 0.5;
  // Samples with t < record_from are not stored.
  double record_from = 0.0;
  int record_stride = 1;
};

/// Samples of one simulation plus the derivatives needed for cubic Hermite
/// evaluation between them. dplus is the derivative leaving a sample,
/// dminus the one arriving; they differ only where a delayed argument crosses
/// the jump at t = 0.
struct Trajectory {
  int dim = 0;
  double step = 0.0;  // integrator step
  std::vector<double> times;
  std::vector<double> y, dplus, dminus;  // row-major, dim per sample

  std::size_t size() const { return times.size(); }
  std::span<const double> row(std::size_t i) const { return {y.data() + i * dim, std::size_t(dim)}; }
  State state(std::size_t i) const { return State::from_flat(row(i)); }
  std::vector<double> component(int c) const;

  /// Dense output; throws std::out_of_range outside [times.front(), times.back()].
  void eval(double t, std::span<double> out) const;
  State at(double t) const;
};

/// Integration step and per-delay step counts. commensurate is false when a
/// delay ratio could not be rationalized.
struct StepPlan {
  double h = 0.0;
  std::vector<long> delay_steps;
  bool commensurate = true;
};
StepPlan plan_steps(std::span<const double> delays, const SimOptions& opt);
/// max_step after the pulse cap for these parameters.
double effective_max_step(const ModelParams& prm, const SimOptions& opt);

Trajectory simulate(const ModelParams& prm, const HistorySpec& hist, double t_end,
                    const SimOptions& opt = {});

/// R_T - R(t) - A * sum_i int_{t - tau_i}^{t} mu_i, for every sample with
/// t - tau_max >= max(0, times.front()); other samples get NaN.
std::vector<double> resource_residual(const Trajectory& traj, const ModelParams& prm);

/// CSV with header t,p1[,p2,p3],R.
void write_csv(std::ostream& os, const Trajectory& traj);

}  // namespace metosc
