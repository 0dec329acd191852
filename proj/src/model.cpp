#include "metosc/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "metosc/poly.hpp"

namespace metosc {
namespace {

double ipow(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

// Hill function and derivative for the integrator; negative arguments are
// read as zero production.
double f_clamped(double x, const HillParams& h) {
  if (!(x > 0.0)) return 0.0;
  const double xn = ipow(x, h.n);
  return xn / (ipow(h.kappa, h.n) + xn);
}

double df_clamped(double x, const HillParams& h) {
  if (x < 0.0) return 0.0;
  if (x == 0.0) return h.n == 1 ? 1.0 / h.kappa : 0.0;
  const double kn = ipow(h.kappa, h.n);
  const double xn = ipow(x, h.n);
  const double den = kn + xn;
  return h.n * kn * ipow(x, h.n - 1) / (den * den);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }
bool nonneg_finite(double v) { return std::isfinite(v) && v >= 0.0; }

Equilibrium make_point(std::vector<double> p, double R, EquilibriumKind k) {
  Equilibrium e;
  e.state.p = std::move(p);
  e.state.R = R;
  e.kind = k;
  return e;
}

}  // namespace

// ---------------------------------------------------------------------------

void HillParams::validate() const {
  require(positive_finite(kappa), "kappa must be > 0");
  require(n >= 1, "n must be a positive integer");
}

double hill(double x, const HillParams& h) {
  if (x < 0.0 || std::isnan(x)) throw std::domain_error("hill: argument must be >= 0");
  return f_clamped(x, h);
}

double hill_derivative(double x, const HillParams& h) {
  if (x < 0.0 || std::isnan(x)) throw std::domain_error("hill_derivative: argument must be >= 0");
  return df_clamped(x, h);
}

void SingleProteinParams::validate() const {
  hill.validate();
  require(positive_finite(A), "A must be > 0");
  require(positive_finite(B), "B must be > 0");
  require(positive_finite(D), "D must be > 0");
  require(nonneg_finite(tau), "tau must be >= 0");
  require(nonneg_finite(R_T), "R_T must be >= 0");
}

void ThreeProteinParams::validate() const {
  hill.validate();
  require(positive_finite(A), "A must be > 0");
  for (int i = 0; i < 3; ++i) {
    const std::string idx = std::to_string(i + 1);
    require(positive_finite(B[i]), "B" + idx + " must be > 0");
    require(positive_finite(D[i]), "D" + idx + " must be > 0");
    require(nonneg_finite(tau[i]), "tau" + idx + " must be >= 0");
  }
  require(nonneg_finite(R_T), "R_T must be >= 0");
}

bool ThreeProteinParams::symmetric() const {
  return B[1] == B[2] && D[1] == D[2] && tau[1] == tau[2];
}

std::vector<double> State::flat() const {
  std::vector<double> x(p);
  x.push_back(R);
  return x;
}

State State::from_flat(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("State::from_flat: empty");
  State s;
  s.p.assign(x.begin(), x.end() - 1);
  s.R = x.back();
  return s;
}

std::string to_string(EquilibriumKind k) {
  switch (k) {
    case EquilibriumKind::Trivial:
      return "trivial";
    case EquilibriumKind::Middle:
      return "middle";
    case EquilibriumKind::Top:
      return "top";
  }
  return "unknown";
}

const Equilibrium* EquilibriumSet::find(EquilibriumKind k) const {
  for (const auto& e : points)
    if (e.kind == k) return &e;
  return nullptr;
}

void LinearDDE::add_delayed(double delay, const Eigen::MatrixXd& G) {
  for (auto& term : delayed) {
    if (std::abs(term.delay - delay) <= kMergeTol) {
      term.G += G;
      return;
    }
  }
  auto it = std::find_if(delayed.begin(), delayed.end(),
                         [&](const DelayedTerm& t) { return t.delay > delay; });
  delayed.insert(it, DelayedTerm{delay, G});
}

void LinearDDE::validate() const {
  if (G0.rows() == 0 || G0.rows() != G0.cols())
    throw std::invalid_argument("LinearDDE: G0 must be square and nonempty");
  double last = 0.0;
  for (const auto& t : delayed) {
    if (t.G.rows() != G0.rows() || t.G.cols() != G0.cols())
      throw std::invalid_argument("LinearDDE: delayed matrix dimension mismatch");
    if (!(t.delay > last)) throw std::invalid_argument("LinearDDE: delays must be positive and increasing");
    last = t.delay;
  }
}

// ---------------------------------------------------------------------------

State rhs_single(const State& now, const State& delayed, const SingleProteinParams& prm) {
  if (now.p.size() != 1 || delayed.p.size() != 1)
    throw std::invalid_argument("rhs_single: expected one protein");
  const double mu_d = f_clamped(delayed.p[0], prm.hill) * delayed.R;
  const double mu = f_clamped(now.p[0], prm.hill) * now.R;
  State out;
  out.p = {prm.B * mu_d - prm.D * now.p[0]};
  out.R = prm.A * (mu_d - mu);
  return out;
}

State rhs_three(const State& now, const State& d1, const State& d2, const State& d3,
                const ThreeProteinParams& prm) {
  for (const State* s : {&now, &d1, &d2, &d3})
    if (s->p.size() != 3) throw std::invalid_argument("rhs_three: expected three proteins");
  const auto& h = prm.hill;
  auto mu1 = [&](const State& s) { return f_clamped(s.p[1], h) * f_clamped(s.p[2], h) * s.R; };
  auto mu2 = [&](const State& s) { return f_clamped(s.p[0], h) * s.R; };
  State out;
  out.p = {prm.B[0] * mu1(d1) - prm.D[0] * now.p[0], prm.B[1] * mu2(d2) - prm.D[1] * now.p[1],
           prm.B[2] * mu2(d3) - prm.D[2] * now.p[2]};
  out.R = prm.A * (mu1(d1) + mu2(d2) + mu2(d3) - mu1(now) - 2.0 * mu2(now));
  return out;
}

Model::Model(ModelParams params) : params_(std::move(params)) {
  std::visit([](const auto& p) { p.validate(); }, params_);
  if (const auto* s = std::get_if<SingleProteinParams>(&params_)) {
    delays_ = {s->tau};
  } else {
    const auto& t = std::get<ThreeProteinParams>(params_);
    delays_.assign(t.tau.begin(), t.tau.end());
  }
}

double Model::total_resource() const {
  return std::visit([](const auto& p) { return p.R_T; }, params_);
}

double Model::max_delay() const { return *std::max_element(delays_.begin(), delays_.end()); }

void Model::eval(std::span<const double> x, std::span<const double* const> d,
                 std::span<double> out) const {
  if (const auto* s = std::get_if<SingleProteinParams>(&params_)) {
    const double mu_d = f_clamped(d[0][0], s->hill) * d[0][1];
    const double mu = f_clamped(x[0], s->hill) * x[1];
    out[0] = s->B * mu_d - s->D * x[0];
    out[1] = s->A * (mu_d - mu);
    return;
  }
  const auto& t = std::get<ThreeProteinParams>(params_);
  const auto& h = t.hill;
  const double mu1_d = f_clamped(d[0][1], h) * f_clamped(d[0][2], h) * d[0][3];
  const double mu2_d2 = f_clamped(d[1][0], h) * d[1][3];
  const double mu2_d3 = f_clamped(d[2][0], h) * d[2][3];
  const double mu1 = f_clamped(x[1], h) * f_clamped(x[2], h) * x[3];
  const double mu2 = f_clamped(x[0], h) * x[3];
  out[0] = t.B[0] * mu1_d - t.D[0] * x[0];
  out[1] = t.B[1] * mu2_d2 - t.D[1] * x[1];
  out[2] = t.B[2] * mu2_d3 - t.D[2] * x[2];
  out[3] = t.A * (mu1_d + mu2_d2 + mu2_d3 - mu1 - 2.0 * mu2);
}

void Model::jacobians(std::span<const double> x, std::span<const double* const> d,
                      Eigen::MatrixXd& J, std::vector<Eigen::MatrixXd>& Jd) const {
  const int n = dim();
  J.setZero(n, n);
  Jd.assign(delays_.size(), Eigen::MatrixXd::Zero(n, n));
  if (const auto* s = std::get_if<SingleProteinParams>(&params_)) {
    const auto& h = s->hill;
    J(0, 0) = -s->D;
    J(1, 0) = -s->A * df_clamped(x[0], h) * x[1];
    J(1, 1) = -s->A * f_clamped(x[0], h);
    const double fd = f_clamped(d[0][0], h), dfd = df_clamped(d[0][0], h);
    Jd[0] << s->B * dfd * d[0][1], s->B * fd, s->A * dfd * d[0][1], s->A * fd;
    return;
  }
  const auto& t = std::get<ThreeProteinParams>(params_);
  const auto& h = t.hill;
  // d mu1 / d(p2, p3, R) and d mu2 / d(p1, R) at a state.
  auto dmu1 = [&](const double* y) {
    const double f2 = f_clamped(y[1], h), f3 = f_clamped(y[2], h);
    return std::array<double, 3>{df_clamped(y[1], h) * f3 * y[3], f2 * df_clamped(y[2], h) * y[3],
                                 f2 * f3};
  };
  auto dmu2 = [&](const double* y) {
    return std::array<double, 2>{df_clamped(y[0], h) * y[3], f_clamped(y[0], h)};
  };
  for (int i = 0; i < 3; ++i) J(i, i) = -t.D[i];
  const auto m1 = dmu1(x.data());
  const auto m2 = dmu2(x.data());
  J(3, 0) = -2.0 * t.A * m2[0];
  J(3, 1) = -t.A * m1[0];
  J(3, 2) = -t.A * m1[1];
  J(3, 3) = -t.A * (m1[2] + 2.0 * m2[1]);

  const auto a = dmu1(d[0]);
  Jd[0](0, 1) = t.B[0] * a[0];
  Jd[0](0, 2) = t.B[0] * a[1];
  Jd[0](0, 3) = t.B[0] * a[2];
  Jd[0](3, 1) = t.A * a[0];
  Jd[0](3, 2) = t.A * a[1];
  Jd[0](3, 3) = t.A * a[2];
  for (int slot = 1; slot <= 2; ++slot) {
    const auto b = dmu2(d[slot]);
    Jd[slot](slot, 0) = t.B[slot] * b[0];
    Jd[slot](slot, 3) = t.B[slot] * b[1];
    Jd[slot](3, 0) = t.A * b[0];
    Jd[slot](3, 3) = t.A * b[1];
  }
}

double Model::sequestration_flux(std::size_t slot, std::span<const double> x) const {
  if (const auto* s = std::get_if<SingleProteinParams>(&params_))
    return f_clamped(x[0], s->hill) * x[1];
  const auto& h = std::get<ThreeProteinParams>(params_).hill;
  if (slot == 0) return f_clamped(x[1], h) * f_clamped(x[2], h) * x[3];
  return f_clamped(x[0], h) * x[3];
}

void Model::sequestration_gradient(std::size_t slot, std::span<const double> x, std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
  if (const auto* s = std::get_if<SingleProteinParams>(&params_)) {
    grad[0] = df_clamped(x[0], s->hill) * x[1];
    grad[1] = f_clamped(x[0], s->hill);
    return;
  }
  const auto& h = std::get<ThreeProteinParams>(params_).hill;
  if (slot == 0) {
    const double f2 = f_clamped(x[1], h), f3 = f_clamped(x[2], h);
    grad[1] = df_clamped(x[1], h) * f3 * x[3];
    grad[2] = f2 * df_clamped(x[2], h) * x[3];
    grad[3] = f2 * f3;
  } else {
    grad[0] = df_clamped(x[0], h) * x[3];
    grad[3] = f_clamped(x[0], h);
  }
}

// ---------------------------------------------------------------------------
// Single-protein equilibria

std::vector<double> positive_roots_equilibrium_poly(const SingleProteinParams& prm) {
  prm.validate();
  const int n = prm.hill.n;
  poly::Coeffs c(static_cast<std::size_t>(n) + 1, 0.0);
  c[0] += ipow(prm.hill.kappa, n);
  c[n - 1] += -prm.B * prm.R_T / prm.D;
  c[n] += 1.0 + prm.A * prm.tau;
  const double hi = poly::root_bound(c);
  if (hi <= 0.0) return {};
  return poly::real_roots(c, 0.0, hi);
}

double saddle_node_boundary_single(double tau, const SingleProteinParams& prm) {
  if (prm.hill.n != 2) throw std::invalid_argument("saddle_node_boundary_single: closed form needs n = 2");
  if (!(tau >= 0.0)) throw std::domain_error("saddle_node_boundary_single: tau must be >= 0");
  const double k = prm.hill.kappa;
  return std::sqrt(4.0 * prm.D * prm.D * k * k * (1.0 + prm.A * tau) / (prm.B * prm.B));
}

EquilibriumSet equilibria_single(const SingleProteinParams& prm) {
  prm.validate();
  EquilibriumSet out;
  out.points.push_back(make_point({0.0}, prm.R_T, EquilibriumKind::Trivial));

  const double a = 1.0 + prm.A * prm.tau;
  const double c = prm.B * prm.R_T / prm.D;
  std::vector<double> roots;
  if (prm.hill.n == 2) {
    const double k2 = prm.hill.kappa * prm.hill.kappa;
    double disc = c * c - 4.0 * a * k2;
    if (disc < 0.0 && disc >= -1e-12 * c * c) disc = 0.0;
    if (disc >= 0.0 && c > 0.0) {
      const double top = (c + std::sqrt(disc)) / (2.0 * a);
      const double middle = k2 / (a * top);  // product of the roots
      roots = {middle, top};
    }
  } else {
    roots = positive_roots_equilibrium_poly(prm);
  }

  auto resource = [&](double p) { return prm.R_T / (1.0 + prm.A * prm.tau * f_clamped(p, prm.hill)); };
  // Newton on D p - B f(p) R*(p) to remove rounding left by the closed form.
  auto polish = [&](double p) {
    for (int it = 0; it < 3; ++it) {
      const double f = f_clamped(p, prm.hill), df = df_clamped(p, prm.hill);
      const double den = 1.0 + prm.A * prm.tau * f;
      const double g = prm.D * p - prm.B * f * prm.R_T / den;
      const double dg = prm.D - prm.B * prm.R_T * df / (den * den);
      if (dg == 0.0 || !std::isfinite(dg)) break;
      const double next = p - g / dg;
      if (!(next > 0.0) || std::abs(next - p) > 1e-6 * p) break;
      p = next;
    }
    return p;
  };

  if (roots.size() == 2 && roots[1] - roots[0] < 1e-8) {
    const double p = 0.5 * (roots[0] + roots[1]);
    auto e = make_point({p}, resource(p), EquilibriumKind::Top);
    e.degenerate = true;
    out.points.push_back(std::move(e));
  } else if (roots.size() == 2) {
    const double pm = polish(roots[0]), pt = polish(roots[1]);
    out.points.push_back(make_point({pm}, resource(pm), EquilibriumKind::Middle));
    out.points.push_back(make_point({pt}, resource(pt), EquilibriumKind::Top));
  } else if (roots.size() == 1) {
    const double p = polish(roots[0]);
    auto e = make_point({p}, resource(p), EquilibriumKind::Top);
    // One positive root is a double root for n >= 2 (sign pattern allows 0 or 2).
    e.degenerate = prm.hill.n >= 2;
    out.points.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Three-protein equilibria

double resource_at_equilibrium_three(const std::array<double, 3>& p, const ThreeProteinParams& prm) {
  const auto& h = prm.hill;
  const double f1 = f_clamped(p[0], h), f2 = f_clamped(p[1], h), f3 = f_clamped(p[2], h);
  return prm.R_T / (1.0 + prm.A * (f2 * f3 * prm.tau[0] + f1 * (prm.tau[1] + prm.tau[2])));
}

std::array<double, 3> equilibrium_residual_three(const std::array<double, 3>& p,
                                                 const ThreeProteinParams& prm) {
  const auto& h = prm.hill;
  const double f1 = f_clamped(p[0], h), f2 = f_clamped(p[1], h), f3 = f_clamped(p[2], h);
  const double R = resource_at_equilibrium_three(p, prm);
  return {prm.D[0] * p[0] - prm.B[0] * f2 * f3 * R, prm.D[1] * p[1] - prm.B[1] * f1 * R,
          prm.D[2] * p[2] - prm.B[2] * f1 * R};
}

namespace {

// Residual and Jacobian (with respect to p) of equilibrium_residual_three.
void residual_jacobian_three(const std::array<double, 3>& p, const ThreeProteinParams& prm,
                             Eigen::Vector3d& F, Eigen::Matrix3d& J) {
  const auto& h = prm.hill;
  const double f1 = f_clamped(p[0], h), f2 = f_clamped(p[1], h), f3 = f_clamped(p[2], h);
  const double d1 = df_clamped(p[0], h), d2 = df_clamped(p[1], h), d3 = df_clamped(p[2], h);
  const double s = 1.0 + prm.A * (f2 * f3 * prm.tau[0] + f1 * (prm.tau[1] + prm.tau[2]));
  const double R = prm.R_T / s;
  // dR/dp_j = -R / s * ds/dp_j
  const Eigen::Vector3d ds{prm.A * d1 * (prm.tau[1] + prm.tau[2]), prm.A * d2 * f3 * prm.tau[0],
                           prm.A * f2 * d3 * prm.tau[0]};
  const Eigen::Vector3d dR = -R / s * ds;
  F << prm.D[0] * p[0] - prm.B[0] * f2 * f3 * R, prm.D[1] * p[1] - prm.B[1] * f1 * R,
      prm.D[2] * p[2] - prm.B[2] * f1 * R;
  J.setZero();
  J(0, 0) = prm.D[0];
  J(1, 1) = prm.D[1];
  J(2, 2) = prm.D[2];
  J(0, 1) -= prm.B[0] * d2 * f3 * R;
  J(0, 2) -= prm.B[0] * f2 * d3 * R;
  J(1, 0) -= prm.B[1] * d1 * R;
  J(2, 0) -= prm.B[2] * d1 * R;
  for (int j = 0; j < 3; ++j) {
    J(0, j) -= prm.B[0] * f2 * f3 * dR(j);
    J(1, j) -= prm.B[1] * f1 * dR(j);
    J(2, j) -= prm.B[2] * f1 * dR(j);
  }
}

enum class NewtonOutcome { Root, Trivial, Failed };

struct NewtonRun {
  NewtonOutcome outcome = NewtonOutcome::Failed;
  std::array<double, 3> p{};
};

// Newton in log coordinates (keeps iterates positive). When `reduced`, p3 is
// tied to p2 and only the first two equations are solved.
NewtonRun newton_three(std::array<double, 3> p, const ThreeProteinParams& prm, bool reduced) {
  const int m = reduced ? 2 : 3;
  double scale = 0.0;
  for (int i = 0; i < 3; ++i) scale = std::max(scale, prm.B[i] * prm.R_T);
  const double ftol = 1e-12 * std::max(1.0, scale);
  NewtonRun run;
  for (int it = 0; it < 100; ++it) {
    if (reduced) p[2] = p[1];
    Eigen::Vector3d F;
    Eigen::Matrix3d J;
    residual_jacobian_three(p, prm, F, J);
    Eigen::VectorXd Fr = F.head(m);
    Eigen::MatrixXd Jr = J.topLeftCorner(m, m);
    if (reduced) Jr.col(1) += J.col(2).head(2);
    if (Fr.cwiseAbs().maxCoeff() < ftol) {
      run.outcome = NewtonOutcome::Root;
      run.p = p;
      return run;
    }
    // Chain rule for p = exp(u).
    for (int j = 0; j < m; ++j) Jr.col(j) *= p[j];
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Jr);
    if (!lu.isInvertible()) return run;
    Eigen::VectorXd du = lu.solve(-Fr);
    const double big = du.cwiseAbs().maxCoeff();
    if (!std::isfinite(big)) return run;
    if (big > 1.5) du *= 1.5 / big;
    for (int j = 0; j < m; ++j) p[j] *= std::exp(du(j));
    if (*std::max_element(p.begin(), p.begin() + m) < 1e-9) {
      run.outcome = NewtonOutcome::Trivial;
      return run;
    }
  }
  return run;
}

// A few plain Newton steps on the full system.
std::array<double, 3> polish_three(std::array<double, 3> p, const ThreeProteinParams& prm) {
  for (int it = 0; it < 4; ++it) {
    Eigen::Vector3d F;
    Eigen::Matrix3d J;
    residual_jacobian_three(p, prm, F, J);
    Eigen::FullPivLU<Eigen::Matrix3d> lu(J);
    if (!lu.isInvertible()) break;
    const Eigen::Vector3d dp = lu.solve(-F);
    bool ok = true;
    for (int j = 0; j < 3; ++j) ok = ok && p[j] + dp(j) > 0.0;
    if (!ok) break;
    for (int j = 0; j < 3; ++j) p[j] += dp(j);
    if (dp.cwiseAbs().maxCoeff() < 1e-15) break;
  }
  return p;
}

double l2(const std::array<double, 3>& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

}  // namespace

EquilibriumSet equilibria_three(const ThreeProteinParams& prm) {
  prm.validate();
  EquilibriumSet out;
  out.points.push_back(make_point({0.0, 0.0, 0.0}, prm.R_T, EquilibriumKind::Trivial));
  if (prm.R_T == 0.0) return out;

  // p_i <= B_i R_T / D_i at any equilibrium since f <= 1 and R* <= R_T.
  double hi = 0.0;
  for (int i = 0; i < 3; ++i) hi = std::max(hi, prm.B[i] * prm.R_T / prm.D[i]);
  const double lo = std::min(1e-3, 1e-3 * hi);

  const bool reduced = prm.symmetric();
  const int per_axis = reduced ? 16 : 12;
  auto grid_value = [&](int i) {
    return lo * std::pow(hi / lo, static_cast<double>(i) / (per_axis - 1));
  };

  std::vector<std::array<double, 3>> roots;
  int converged = 0;
  auto consider = [&](const std::array<double, 3>& start) {
    const NewtonRun run = newton_three(start, prm, reduced);
    if (run.outcome == NewtonOutcome::Failed) return;
    ++converged;
    if (run.outcome == NewtonOutcome::Trivial) return;
    std::array<double, 3> p = polish_three(run.p, prm);
    if (reduced) p[2] = p[1];
    for (const auto& r : roots)
      if (std::max({std::abs(r[0] - p[0]), std::abs(r[1] - p[1]), std::abs(r[2] - p[2])}) < 1e-7) return;
    const auto res = equilibrium_residual_three(p, prm);
    if (std::max({std::abs(res[0]), std::abs(res[1]), std::abs(res[2])}) > 1e-9) return;
    roots.push_back(p);
  };

  if (reduced) {
    for (int i = 0; i < per_axis; ++i)
      for (int j = 0; j < per_axis; ++j) consider({grid_value(i), grid_value(j), grid_value(j)});
  } else {
    for (int i = 0; i < per_axis; ++i)
      for (int j = 0; j < per_axis; ++j)
        for (int k = 0; k < per_axis; ++k) consider({grid_value(i), grid_value(j), grid_value(k)});
  }

  std::sort(roots.begin(), roots.end(), [](const auto& a, const auto& b) { return l2(a) < l2(b); });
  auto push = [&](const std::array<double, 3>& p, EquilibriumKind k, bool degenerate) {
    auto e = make_point({p[0], p[1], p[2]}, resource_at_equilibrium_three(p, prm), k);
    e.degenerate = degenerate;
    out.points.push_back(std::move(e));
  };

  if (roots.size() == 1) {
    // A lone nonzero root is either a fold (singular Jacobian) or a sign that
    // its partner was missed.
    Eigen::Vector3d F;
    Eigen::Matrix3d J;
    residual_jacobian_three(roots[0], prm, F, J);
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(J, 0);
    const auto& sv = svd.singularValues();
    const bool fold = sv(2) < 1e-6 * sv(0);
    push(roots[0], EquilibriumKind::Top, fold);
    out.incomplete = !fold;
  } else {
    for (std::size_t i = 0; i < roots.size(); ++i)
      push(roots[i], i + 1 == roots.size() ? EquilibriumKind::Top : EquilibriumKind::Middle, false);
    out.incomplete = roots.size() % 2 == 1;
  }
  if (converged == 0) out.incomplete = true;
  return out;
}

EquilibriumSet equilibria(const ModelParams& prm) {
  if (const auto* s = std::get_if<SingleProteinParams>(&prm)) return equilibria_single(*s);
  return equilibria_three(std::get<ThreeProteinParams>(prm));
}

double equilibrium_residual(const State& s, const ModelParams& prm) {
  if (const auto* sp = std::get_if<SingleProteinParams>(&prm)) {
    if (s.p.size() != 1) throw std::invalid_argument("equilibrium_residual: dimension mismatch");
    const double f = f_clamped(s.p[0], sp->hill);
    return std::max(std::abs(sp->D * s.p[0] - sp->B * f * s.R),
                    std::abs(sp->R_T - s.R - sp->A * sp->tau * f * s.R));
  }
  const auto& t = std::get<ThreeProteinParams>(prm);
  if (s.p.size() != 3) throw std::invalid_argument("equilibrium_residual: dimension mismatch");
  const auto& h = t.hill;
  const double f1 = f_clamped(s.p[0], h), f2 = f_clamped(s.p[1], h), f3 = f_clamped(s.p[2], h);
  const double r0 = t.D[0] * s.p[0] - t.B[0] * f2 * f3 * s.R;
  const double r1 = t.D[1] * s.p[1] - t.B[1] * f1 * s.R;
  const double r2 = t.D[2] * s.p[2] - t.B[2] * f1 * s.R;
  const double r3 = t.R_T - s.R - t.A * (f2 * f3 * s.R * t.tau[0] + f1 * s.R * (t.tau[1] + t.tau[2]));
  return std::max({std::abs(r0), std::abs(r1), std::abs(r2), std::abs(r3)});
}

// ---------------------------------------------------------------------------
// Linearization

LinearDDE linearize_single(const Equilibrium& eq, const SingleProteinParams& prm) {
  prm.validate();
  if (eq.state.p.size() != 1) throw std::invalid_argument("linearize_single: dimension mismatch");
  if (!(prm.tau > 0.0)) throw std::invalid_argument("linearize_single: tau must be > 0");
  const double p = eq.state.p[0], R = eq.state.R;
  const double f = hill(p, prm.hill), df = hill_derivative(p, prm.hill);
  LinearDDE sys;
  sys.G0.resize(2, 2);
  sys.G0 << -prm.D, 0.0, -prm.A * df * R, -prm.A * f;
  Eigen::MatrixXd G(2, 2);
  G << prm.B * df * R, prm.B * f, prm.A * df * R, prm.A * f;
  sys.add_delayed(prm.tau, G);
  return sys;
}

LinearDDE linearize_three(const Equilibrium& eq, const ThreeProteinParams& prm) {
  prm.validate();
  if (eq.state.p.size() != 3) throw std::invalid_argument("linearize_three: dimension mismatch");
  for (double t : prm.tau)
    if (!(t > 0.0)) throw std::invalid_argument("linearize_three: delays must be > 0");
  const auto& h = prm.hill;
  const double p1 = eq.state.p[0], p2 = eq.state.p[1], p3 = eq.state.p[2], R = eq.state.R;
  const double f1 = hill(p1, h), f2 = hill(p2, h), f3 = hill(p3, h);
  const double d1 = hill_derivative(p1, h), d2 = hill_derivative(p2, h), d3 = hill_derivative(p3, h);
  const double A = prm.A;
  const auto& B = prm.B;

  LinearDDE sys;
  sys.G0 = Eigen::MatrixXd::Zero(4, 4);
  sys.G0(0, 0) = -prm.D[0];
  sys.G0(1, 1) = -prm.D[1];
  sys.G0(2, 2) = -prm.D[2];
  sys.G0.row(3) << -2.0 * A * d1 * R, -A * d2 * f3 * R, -A * f2 * d3 * R, -2.0 * A * f1 - A * f2 * f3;

  Eigen::MatrixXd G2 = Eigen::MatrixXd::Zero(4, 4);
  G2.row(0) << 0.0, B[0] * d2 * f3 * R, B[0] * f2 * d3 * R, B[0] * f2 * f3;
  G2.row(3) << 0.0, A * d2 * f3 * R, A * f2 * d3 * R, A * f2 * f3;

  Eigen::MatrixXd G3 = Eigen::MatrixXd::Zero(4, 4);
  G3.row(1) << B[1] * d1 * R, 0.0, 0.0, B[1] * f1;
  G3.row(3) << A * d1 * R, 0.0, 0.0, A * f1;

  Eigen::MatrixXd G4 = Eigen::MatrixXd::Zero(4, 4);
  G4.row(2) << B[2] * d1 * R, 0.0, 0.0, B[2] * f1;
  G4.row(3) << A * d1 * R, 0.0, 0.0, A * f1;

  sys.add_delayed(prm.tau[0], G2);
  sys.add_delayed(prm.tau[1], G3);
  sys.add_delayed(prm.tau[2], G4);
  return sys;
}

LinearDDE linearize(const Equilibrium& eq, const ModelParams& prm) {
  if (const auto* s = std::get_if<SingleProteinParams>(&prm)) return linearize_single(eq, *s);
  return linearize_three(eq, std::get<ThreeProteinParams>(prm));
}

}  // namespace metosc
