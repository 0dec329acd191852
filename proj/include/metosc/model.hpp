#pragma once

// Resource-limited protein synthesis models: the single-protein and the
// three-protein delay systems sharing a ribosome pool, their equilibria and
// their linearizations.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace metosc {

/// Hill activation f(x) = x^n / (kappa^n + x^n).
struct HillParams {
  double kappa = 0.5;
  int n = 2;

  void validate() const;
};

/// Throws std::domain_error for x < 0.
double hill(double x, const HillParams& h);
/// n kappa^n x^(n-1) / (kappa^n + x^n)^2. Throws std::domain_error for x < 0.
double hill_derivative(double x, const HillParams& h);

/// p' = B f(p(t-tau)) R(t-tau) - D p,  R' = A (mu(t-tau) - mu(t)),  mu = f(p) R.
struct SingleProteinParams {
  HillParams hill;
  double A = 1.0;
  double B = 2.0;
  double D = 10.0;
  double tau = 1.0;
  double R_T = 0.0;

  void validate() const;
};

/// Protein 1 is activated by proteins 2 and 3, which are both activated by
/// protein 1. All three draw on the same resource R.
struct ThreeProteinParams {
  HillParams hill;
  double A = 1.0;
  std::array<double, 3> B{2.0, 2.0, 2.0};
  std::array<double, 3> D{10.0, 10.0, 10.0};
  std::array<double, 3> tau{1.0, 1.0, 1.0};
  double R_T = 0.0;

  void validate() const;
  /// B2 == B3, D2 == D3 and tau2 == tau3, so that p2* == p3* at equilibrium.
  bool symmetric() const;
  void set_equal_delays(double t) { tau = {t, t, t}; }
};

using ModelParams = std::variant<SingleProteinParams, ThreeProteinParams>;

/// Production rates and free resource.
struct State {
  std::vector<double> p;
  double R = 0.0;

  std::size_t dim() const { return p.size() + 1; }
  std::vector<double> flat() const;
  static State from_flat(std::span<const double> x);
};

enum class EquilibriumKind { Trivial, Middle, Top };

std::string to_string(EquilibriumKind k);

struct Equilibrium {
  State state;
  EquilibriumKind kind = EquilibriumKind::Trivial;
  // Middle and top coincide (fold); reported once as Top.
  bool degenerate = false;
};

struct EquilibriumSet {
  std::vector<Equilibrium> points;
  // Root search could not certify that every nonnegative solution was found.
  bool incomplete = false;

  const Equilibrium* find(EquilibriumKind k) const;
};

/// Linear system y' = G0 y(t) + sum_i G_i y(t - delay_i).
struct DelayedTerm {
  double delay = 0.0;
  Eigen::MatrixXd G;
};

struct LinearDDE {
  Eigen::MatrixXd G0;
  std::vector<DelayedTerm> delayed;  // strictly increasing delays

  static constexpr double kMergeTol = 1e-12;

  int dim() const { return static_cast<int>(G0.rows()); }
  double max_delay() const { return delayed.empty() ? 0.0 : delayed.back().delay; }
  /// Inserts keeping delays sorted; a delay within kMergeTol of an existing one
  /// is summed into it.
  void add_delayed(double delay, const Eigen::MatrixXd& G);
  void validate() const;
};

// ---------------------------------------------------------------------------
// Right-hand sides

State rhs_single(const State& now, const State& delayed, const SingleProteinParams& prm);
State rhs_three(const State& now, const State& d1, const State& d2, const State& d3,
                const ThreeProteinParams& prm);

/// Uniform view over either model variant used by the integrator and the
/// periodic-orbit solver. Delayed slot i reads the state at t - delays()[i].
class Model {
 public:
  explicit Model(ModelParams params);

  const ModelParams& params() const { return params_; }
  bool is_single() const { return std::holds_alternative<SingleProteinParams>(params_); }
  int dim() const { return is_single() ? 2 : 4; }
  int num_proteins() const { return dim() - 1; }
  double total_resource() const;
  std::span<const double> delays() const { return delays_; }
  double max_delay() const;

  /// out = g(now, delayed[0], ...). Negative production rates are read as 0.
  void eval(std::span<const double> now, std::span<const double* const> delayed,
            std::span<double> out) const;

  /// Jacobian of g with respect to the current state and to each delayed slot.
  void jacobians(std::span<const double> now, std::span<const double* const> delayed,
                 Eigen::MatrixXd& J_now, std::vector<Eigen::MatrixXd>& J_delayed) const;

  /// Resource sequestered at rate A * (sequestration flux of slot i).
  /// For the single model this is mu = f(p) R; for the three-protein model
  /// slot 0 is mu1 = f(p2) f(p3) R and slots 1, 2 are mu2 = f(p1) R.
  double sequestration_flux(std::size_t slot, std::span<const double> x) const;
  /// Gradient of sequestration_flux with respect to the state.
  void sequestration_gradient(std::size_t slot, std::span<const double> x, std::span<double> grad) const;

  std::string name() const { return is_single() ? "single" : "three"; }

 private:
  ModelParams params_;
  std::vector<double> delays_;
};

// ---------------------------------------------------------------------------
// Equilibria

/// Nonzero production roots of (1 + A tau) p^n - (B R_T / D) p^(n-1) + kappa^n
/// by Sturm-sequence isolation and Newton polishing. Ascending.
std::vector<double> positive_roots_equilibrium_poly(const SingleProteinParams& prm);

/// Trivial point plus, when they exist, middle and top. Closed form for n = 2.
EquilibriumSet equilibria_single(const SingleProteinParams& prm);

/// R_T below which only the trivial equilibrium exists.
double saddle_node_boundary_single(double tau, const SingleProteinParams& prm);

/// Residuals of D_i p_i = B_i (...) R* with R* eliminated through the
/// total-resource constraint; length 3.
std::array<double, 3> equilibrium_residual_three(const std::array<double, 3>& p,
                                                 const ThreeProteinParams& prm);
/// R* for given production rates.
double resource_at_equilibrium_three(const std::array<double, 3>& p,
                                     const ThreeProteinParams& prm);

EquilibriumSet equilibria_three(const ThreeProteinParams& prm);

EquilibriumSet equilibria(const ModelParams& prm);

/// Max-norm residual of the equilibrium conditions (rate balance and total
/// resource) at s.
double equilibrium_residual(const State& s, const ModelParams& prm);

// ---------------------------------------------------------------------------
// Linearization

LinearDDE linearize_single(const Equilibrium& eq, const SingleProteinParams& prm);
LinearDDE linearize_three(const Equilibrium& eq, const ThreeProteinParams& prm);
LinearDDE linearize(const Equilibrium& eq, const ModelParams& prm);

}  // namespace metosc
