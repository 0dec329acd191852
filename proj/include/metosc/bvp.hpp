#pragma once

// Periodic orbits of the delay models by Newton iteration on a periodic
// spectral-element collocation of x' = T g(x(s), x(s - tau/T)), s in [0, 1].
//
// The total resource is a first integral of the models and does not appear
// in g, so orbits come in a one-parameter family. The solver closes it with
// the constraint R(0) + A T sum_i int_{-tau_i/T}^0 mu_i = R_T and an
// unfolding parameter added to the resource equation, which vanishes on
// every periodic solution.

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "metosc/cheb.hpp"
#include "metosc/ddesim.hpp"
#include "metosc/model.hpp"

namespace metosc {

enum class PhaseCondition {
  // <x_guess'(0), x(0) - x_guess(0)> = 0
  Anchor,
  // <x(0), x'(0)> = 0
  Literal,
};

struct BvpOptions {
  SpectralMesh mesh{256, 16};
  double tol = 1e-9;
  int max_iters = 50;
  int max_halvings = 8;
  PhaseCondition phase = PhaseCondition::Anchor;
  // false keeps T at the guess and drops the phase condition.
  bool solve_period = true;
};

class SingularJacobianError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PeriodicSolution {
  SpectralMesh mesh;
  std::vector<double> nodes;  // normalized times, node_count() entries, 0 .. 1
  std::vector<double> x;      // row-major states at nodes; last row equals the first
  int dim = 0;
  double period = 0.0;
  double unfolding = 0.0;
  double residual_norm = 0.0;
  bool converged = false;
  // Constant guess: no phase information, T held at the guess.
  bool degenerate = false;
  int iterations = 0;
  std::vector<double> residual_history;
  PhaseCondition phase = PhaseCondition::Anchor;
  std::vector<double> anchor_state, anchor_direction;

  State state(std::size_t node) const;
  /// Solution at normalized time s, wrapped into [0, 1).
  void eval(double s, std::span<double> out) const;
  /// Fraction of the period with protein 1 below level, over `samples`
  /// uniform points.
  double dwell_fraction(double level, int samples = 4096) const;
};

/// Start of a guess window inside [t0, t1]: the sample where |x'| is largest.
double guess_start(const Trajectory& traj, double t0, double t1);

struct PeriodicGuess {
  Trajectory trajectory;
  double t_start = 0.0;
  double T_guess = 0.0;
  // False when the tail has no detectable period; T_guess is then the delay.
  bool periodic = false;
};

/// Simulates from starvation history with p0 for horizon_delays delays and
/// takes the last few delays as the guess. T_guess is the autocorrelation
/// period of the tail.
PeriodicGuess simulation_guess(const ModelParams& prm, double p0 = 10.0, double horizon_delays = 1000.0,
                               const SimOptions& sim = {});

/// Newton solve from traj(t_start + s T_guess). Returns a non-converged
/// solution when max_iters is exhausted; throws SingularJacobianError when the
/// linearized system cannot be factored.
PeriodicSolution solve_periodic(const ModelParams& prm, const Trajectory& guess, double t_start,
                                double T_guess, const BvpOptions& opt = {});

/// Max norm of the collocation, periodicity, phase and resource residuals of
/// a candidate, assembled independently of the solver.
double bvp_residual(const PeriodicSolution& sol, const ModelParams& prm);

/// The candidate's piecewise polynomial sampled on another mesh.
PeriodicSolution resample(const PeriodicSolution& sol, const SpectralMesh& mesh);

/// JSON with mesh, nodes, states, period and residual information.
void write_json(std::ostream& os, const PeriodicSolution& sol);
/// One period at `points` uniform samples: t,p1[,p2,p3],R with t in time units.
void write_csv(std::ostream& os, const PeriodicSolution& sol, int points = 512);

}  // namespace metosc
