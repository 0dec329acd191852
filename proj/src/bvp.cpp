#include "metosc/bvp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Sparse>
#include <json.hpp>

#include "metosc/features.hpp"
#include "metosc/io.hpp"

namespace metosc {

namespace {

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int q, std::vector<double>& x, std::vector<double>& w) {
  x.assign(q, 0.0);
  w.assign(q, 0.0);
  for (int i = 0; i < q; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (q + 0.5)), dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= q; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (q == 1) p0 = 1.0, p1 = z;
      dp = q * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[q - 1 - i] = z;
    w[q - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

double wrap01(double s) {
  double r = s - std::floor(s);
  return r >= 1.0 ? 0.0 : r;
}

// Periodic spectral-element mesh on [0, 1]: global node M is node 0.
struct Layout {
  SpectralMesh mesh;
  int E = 0, N = 0, M = 0;
  double h = 0.0;
  std::vector<double> ref, w, nodes;
  Eigen::MatrixXd D;  // scaled to element length

  explicit Layout(const SpectralMesh& m) : mesh(m) {
    mesh.validate();
    E = mesh.num_elements;
    N = mesh.order;
    M = E * N;
    h = 1.0 / E;
    ref = cheb::lobatto_nodes(N);
    w = cheb::barycentric_weights(N);
    nodes = mesh.nodes(1.0);
    D = cheb::differentiation_matrix(N) * (2.0 / h);
  }
  int gidx(int e, int j) const {
    const int g = e * N + j;
    return g == M ? 0 : g;
  }
  // Element holding s (wrapped) and the Lagrange row there.
  int locate(double s, std::vector<double>& row) const {
    s = wrap01(s);
    const int e = mesh.element_of(s, 1.0);
    row.resize(N + 1);
    cheb::interpolation_row(ref, w, 2.0 * (s - e * h) / h - 1.0, row);
    return e;
  }
};

constexpr double kClamp = 1e-12;

// Everything Newton needs from one evaluation of the discretized system.
struct System {
  const Model& model;
  const Layout& L;
  int d;
  std::size_t slots;
  PhaseCondition phase;
  bool fix_period;
  double T_fixed;
  std::vector<double> anchor, direction;
  double R_T;
  std::vector<double> gx, gw;  // quadrature

  int n() const { return L.M * d + 2; }
  int iT() const { return L.M * d; }
  int iE() const { return L.M * d + 1; }

  // x at s from unknowns z, with optional Lagrange row and element.
  void value(const Eigen::VectorXd& z, int e, const std::vector<double>& row, double* out) const {
    std::fill(out, out + d, 0.0);
    for (int l = 0; l <= L.N; ++l) {
      const double r = row[l];
      if (r == 0.0) continue;
      const int g = L.gidx(e, l);
      for (int c = 0; c < d; ++c) out[c] += r * z[g * d + c];
    }
  }
  void slope(const Eigen::VectorXd& z, int e, const std::vector<double>& row, double* out) const {
    std::fill(out, out + d, 0.0);
    for (int l = 0; l <= L.N; ++l) {
      double r = 0.0;
      for (int m = 0; m <= L.N; ++m) r += row[m] * L.D(m, l);
      const int g = L.gidx(e, l);
      for (int c = 0; c < d; ++c) out[c] += r * z[g * d + c];
    }
  }

  // int_lo^hi mu_slot ds for 0 <= lo <= hi <= 1; gradient added into grad * scale.
  double integrate(const Eigen::VectorXd& z, std::size_t slot, double lo, double hi, double scale,
                   Eigen::VectorXd* grad) const {
    double total = 0.0;
    std::vector<double> row(L.N + 1), x(d), gm(d);
    for (int e = 0; e < L.E; ++e) {
      const double a = std::max(lo, e * L.h), b = std::min(hi, (e + 1) * L.h);
      if (!(b > a)) continue;
      for (std::size_t q = 0; q < gx.size(); ++q) {
        const double s = 0.5 * (a + b) + 0.5 * (b - a) * gx[q];
        const double wq = 0.5 * (b - a) * gw[q];
        cheb::interpolation_row(L.ref, L.w, 2.0 * (s - e * L.h) / L.h - 1.0, row);
        value(z, e, row, x.data());
        total += wq * model.sequestration_flux(slot, x);
        if (grad) {
          model.sequestration_gradient(slot, x, gm);
          for (int l = 0; l <= L.N; ++l) {
            const int g = L.gidx(e, l);
            for (int c = 0; c < d; ++c) (*grad)[g * d + c] += scale * wq * row[l] * gm[c];
          }
        }
      }
    }
    return total;
  }

  // int_{-a}^0 mu over the periodic extension.
  double lag_integral(const Eigen::VectorXd& z, std::size_t slot, double a, double scale,
                      Eigen::VectorXd* grad) const {
    const double q = std::floor(a), r = a - q;
    double v = 0.0;
    if (q > 0.0) v += q * integrate(z, slot, 0.0, 1.0, scale * q, grad);
    if (r > 0.0) v += integrate(z, slot, 1.0 - r, 1.0, scale, grad);
    return v;
  }

  // Residual, and the Jacobian when J is non-null.
  Eigen::VectorXd assemble(const Eigen::VectorXd& z, Eigen::SparseMatrix<double>* J) const {
    const int nn = n();
    const double T = z[iT()], eps = z[iE()];
    Eigen::VectorXd F(nn);
    std::vector<Eigen::Triplet<double>> trip;
    const auto delays = model.delays();

    std::vector<double> xk(d), g(d), xdot(d);
    std::vector<std::vector<double>> xd(slots, std::vector<double>(d)), rows(slots);
    std::vector<int> elems(slots);
    std::vector<const double*> ptr(slots);
    Eigen::MatrixXd Jn;
    std::vector<Eigen::MatrixXd> Jd;

    for (int k = 1; k <= L.M; ++k) {
      const int e = (k - 1) / L.N, j = k - e * L.N;
      const int gk = k == L.M ? 0 : k;
      for (int c = 0; c < d; ++c) xk[c] = z[gk * d + c];
      const double s = L.nodes[k];
      for (std::size_t i = 0; i < slots; ++i) {
        elems[i] = L.locate(s - delays[i] / T, rows[i]);
        value(z, elems[i], rows[i], xd[i].data());
        ptr[i] = xd[i].data();
      }
      model.eval(xk, ptr, g);
      const int r0 = (k - 1) * d;
      for (int c = 0; c < d; ++c) {
        double dx = 0.0;
        for (int l = 0; l <= L.N; ++l) dx += L.D(j, l) * z[L.gidx(e, l) * d + c];
        F[r0 + c] = dx - T * g[c] - (c == d - 1 ? eps : 0.0);
      }
      if (!J) continue;
      model.jacobians(xk, ptr, Jn, Jd);
      for (int c = 0; c < d; ++c) {
        for (int l = 0; l <= L.N; ++l) trip.emplace_back(r0 + c, L.gidx(e, l) * d + c, L.D(j, l));
        for (int cc = 0; cc < d; ++cc)
          if (Jn(c, cc) != 0.0) trip.emplace_back(r0 + c, gk * d + cc, -T * Jn(c, cc));
      }
      Eigen::VectorXd dT = -Eigen::Map<Eigen::VectorXd>(g.data(), d);
      for (std::size_t i = 0; i < slots; ++i) {
        for (int l = 0; l <= L.N; ++l) {
          const double r = rows[i][l];
          if (r == 0.0) continue;
          const int gl = L.gidx(elems[i], l);
          for (int c = 0; c < d; ++c)
            for (int cc = 0; cc < d; ++cc)
              if (Jd[i](c, cc) != 0.0) trip.emplace_back(r0 + c, gl * d + cc, -T * r * Jd[i](c, cc));
        }
        // s_delayed = s - tau/T moves with T.
        slope(z, elems[i], rows[i], xdot.data());
        dT -= T * (delays[i] / (T * T)) * (Jd[i] * Eigen::Map<Eigen::VectorXd>(xdot.data(), d));
      }
      for (int c = 0; c < d; ++c) trip.emplace_back(r0 + c, iT(), dT[c]);
      trip.emplace_back(r0 + d - 1, iE(), -1.0);
    }

    // Phase row.
    const int rp = L.M * d;
    if (fix_period) {
      F[rp] = T - T_fixed;
      if (J) trip.emplace_back(rp, iT(), 1.0);
    } else if (phase == PhaseCondition::Anchor) {
      double v = 0.0;
      for (int c = 0; c < d; ++c) {
        v += direction[c] * (z[c] - anchor[c]);
        if (J) trip.emplace_back(rp, c, direction[c]);
      }
      F[rp] = v;
    } else {
      std::vector<double> dx0(d, 0.0);
      for (int l = 0; l <= L.N; ++l)
        for (int c = 0; c < d; ++c) dx0[c] += L.D(0, l) * z[L.gidx(0, l) * d + c];
      double v = 0.0;
      for (int c = 0; c < d; ++c) {
        v += z[c] * dx0[c];
        if (J) {
          trip.emplace_back(rp, c, dx0[c]);
          for (int l = 0; l <= L.N; ++l) trip.emplace_back(rp, L.gidx(0, l) * d + c, z[c] * L.D(0, l));
        }
      }
      F[rp] = v;
    }

    // Resource row: R(0) + A T sum_i int_{-tau_i/T}^0 mu_i - R_T.
    const int rr = rp + 1;
    const double A = std::visit([](const auto& p) { return p.A; }, model.params());
    Eigen::VectorXd grad;
    if (J) grad = Eigen::VectorXd::Zero(L.M * d);
    double sum = 0.0, dsum = 0.0;
    std::vector<double> row, x(d);
    for (std::size_t i = 0; i < slots; ++i) {
      const double a = delays[i] / T;
      const double I = lag_integral(z, i, a, A * T, J ? &grad : nullptr);
      sum += I;
      if (J) {
        const int e = L.locate(-a, row);
        value(z, e, row, x.data());
        dsum += I - model.sequestration_flux(i, x) * a;
      }
    }
    F[rr] = z[d - 1] + A * T * sum - R_T;
    if (J) {
      grad[d - 1] += 1.0;
      for (int c = 0; c < L.M * d; ++c)
        if (grad[c] != 0.0) trip.emplace_back(rr, c, grad[c]);
      trip.emplace_back(rr, iT(), A * dsum);
      J->resize(nn, nn);
      J->setFromTriplets(trip.begin(), trip.end());
    }
    return F;
  }
};

double max_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

PeriodicSolution pack(const Layout& L, int d, const Eigen::VectorXd& z) {
  PeriodicSolution sol;
  sol.mesh = L.mesh;
  sol.nodes = L.nodes;
  sol.dim = d;
  sol.x.resize(static_cast<std::size_t>(L.M + 1) * d);
  for (int k = 0; k <= L.M; ++k)
    for (int c = 0; c < d; ++c) sol.x[k * d + c] = z[(k == L.M ? 0 : k) * d + c];
  sol.period = z[L.M * d];
  sol.unfolding = z[L.M * d + 1];
  return sol;
}

}  // namespace

State PeriodicSolution::state(std::size_t node) const {
  return State::from_flat(std::span<const double>(x).subspan(node * dim, dim));
}

void PeriodicSolution::eval(double s, std::span<double> out) const {
  s = wrap01(s);
  const int N = mesh.order, e = mesh.element_of(s, 1.0);
  const double h = 1.0 / mesh.num_elements;
  const auto ref = cheb::lobatto_nodes(N);
  const auto w = cheb::barycentric_weights(N);
  std::vector<double> row(N + 1);
  cheb::interpolation_row(ref, w, 2.0 * (s - e * h) / h - 1.0, row);
  std::fill(out.begin(), out.end(), 0.0);
  for (int l = 0; l <= N; ++l)
    for (int c = 0; c < dim; ++c) out[c] += row[l] * x[(e * N + l) * dim + c];
}

double PeriodicSolution::dwell_fraction(double level, int samples) const {
  if (samples < 1) throw std::invalid_argument("dwell_fraction: samples must be positive");
  std::vector<double> v(dim);
  int below = 0;
  for (int i = 0; i < samples; ++i) {
    eval(double(i) / samples, v);
    if (v[0] < level) ++below;
  }
  return double(below) / samples;
}

double guess_start(const Trajectory& traj, double t0, double t1) {
  double best = t0, top = -1.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double t = traj.times[i];
    if (t < t0 || t > t1) continue;
    double n2 = 0.0;
    for (int c = 0; c < traj.dim; ++c) n2 += traj.dplus[i * traj.dim + c] * traj.dplus[i * traj.dim + c];
    if (n2 > top) top = n2, best = t;
  }
  if (top < 0.0) throw std::domain_error("guess_start: no sample in window");
  return best;
}

PeriodicGuess simulation_guess(const ModelParams& prm, double p0, double horizon_delays, const SimOptions& sim) {
  const Model model(prm);
  const double tau = model.max_delay();
  if (!(horizon_delays >= 8.0)) throw std::invalid_argument("simulation_guess: horizon must be >= 8 delays");
  const double t_end = horizon_delays * tau;
  SimOptions opt = sim;
  opt.record_from = t_end - 6.0 * tau;
  PeriodicGuess g;
  g.trajectory = simulate(prm, HistorySpec::starvation({p0}), t_end, opt);
  g.T_guess = tau;
  try {
    g.T_guess = peak_phase_offsets(g.trajectory, t_end - 6.0 * tau, t_end).period;
    g.periodic = true;
  } catch (const std::exception&) {
  }
  const double t1 = t_end - std::max(g.T_guess, tau) - 1e-9;
  g.t_start = guess_start(g.trajectory, t1 - g.T_guess, t1);
  return g;
}

PeriodicSolution solve_periodic(const ModelParams& prm, const Trajectory& guess, double t_start,
                                double T_guess, const BvpOptions& opt) {
  const Model model(prm);
  if (opt.mesh.order < 8) throw std::invalid_argument("solve_periodic: mesh order must be >= 8");
  if (!(T_guess > 0.0)) throw std::invalid_argument("solve_periodic: T_guess must be positive");
  if (guess.dim != model.dim()) throw std::invalid_argument("solve_periodic: guess dimension mismatch");
  if (guess.size() == 0 || t_start < guess.times.front() - 1e-12 ||
      t_start + T_guess > guess.times.back() + 1e-9)
    throw std::invalid_argument("solve_periodic: guess must span one T_guess from t_start");
  if (!(opt.tol > 0.0) || opt.max_iters < 1 || opt.max_halvings < 0)
    throw std::invalid_argument("solve_periodic: bad Newton options");

  const Layout L(opt.mesh);
  const int d = model.dim();
  System sys{model, L, d, model.delays().size(), opt.phase, !opt.solve_period, T_guess, {}, {}, model.total_resource(), {}, {}};
  gauss_legendre(L.N + 4, sys.gx, sys.gw);

  Eigen::VectorXd z(sys.n());
  std::vector<double> v(d);
  for (int k = 0; k < L.M; ++k) {
    guess.eval(std::min(t_start + L.nodes[k] * T_guess, guess.times.back()), v);
    for (int c = 0; c < d; ++c) z[k * d + c] = std::abs(v[c]) < kClamp ? 0.0 : v[c];
  }
  z[sys.iT()] = T_guess;
  z[sys.iE()] = 0.0;

  // Phase anchor from the guess: its state and time-derivative at t_start.
  sys.anchor.assign(z.data(), z.data() + d);
  {
    const double dt = std::max(guess.step, 1e-9 * T_guess);
    std::vector<double> a(d), b(d);
    const double lo = std::max(guess.times.front(), t_start - dt), hi = std::min(guess.times.back(), t_start + dt);
    guess.eval(lo, a);
    guess.eval(hi, b);
    double norm = 0.0, scale = 0.0;
    sys.direction.resize(d);
    for (int c = 0; c < d; ++c) {
      sys.direction[c] = hi > lo ? (b[c] - a[c]) / (hi - lo) : 0.0;
      norm += sys.direction[c] * sys.direction[c];
      scale += sys.anchor[c] * sys.anchor[c];
    }
    norm = std::sqrt(norm);
    if (norm <= 1e-8 * (1.0 + std::sqrt(scale))) {
      sys.fix_period = true;
    } else {
      for (double& e : sys.direction) e /= norm;
    }
  }
  const bool degenerate = sys.fix_period && opt.solve_period;

  Eigen::SparseMatrix<double> J;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  Eigen::VectorXd F = sys.assemble(z, &J);
  double r = max_norm(F);
  std::vector<double> history{r};
  int it = 0;
  for (; it < opt.max_iters && !(r < opt.tol); ++it) {
    lu.compute(J);
    if (lu.info() != Eigen::Success)
      throw SingularJacobianError("solve_periodic: singular Jacobian (fold or symmetry)");
    const Eigen::VectorXd dz = lu.solve(-F);
    if (lu.info() != Eigen::Success || !dz.allFinite())
      throw SingularJacobianError("solve_periodic: singular Jacobian (fold or symmetry)");
    // Step halving on the 2-norm, along which the Newton step descends.
    const double r2 = F.norm();
    double lambda = 1.0, rn = 0.0;
    Eigen::VectorXd zn;
    for (int hv = 0; hv <= opt.max_halvings; ++hv, lambda *= 0.5) {
      zn = z + lambda * dz;
      if (!(zn[sys.iT()] > 0.0)) continue;
      rn = sys.assemble(zn, nullptr).norm();
      if (rn < r2) break;
    }
    if (!(zn[sys.iT()] > 0.0) || !std::isfinite(rn)) break;
    z = zn;
    F = sys.assemble(z, &J);
    r = max_norm(F);
    history.push_back(r);
  }

  PeriodicSolution sol = pack(L, d, z);
  sol.residual_norm = r;
  sol.converged = r < opt.tol;
  sol.degenerate = degenerate;
  sol.iterations = it;
  sol.residual_history = std::move(history);
  sol.phase = opt.phase;
  if (!sys.fix_period) {
    sol.anchor_state = sys.anchor;
    sol.anchor_direction = sys.direction;
  }
  return sol;
}

double bvp_residual(const PeriodicSolution& sol, const ModelParams& prm) {
  const Model model(prm);
  const int d = sol.dim, N = sol.mesh.order, E = sol.mesh.num_elements;
  if (d != model.dim() || sol.x.size() != static_cast<std::size_t>(sol.mesh.node_count() * d))
    throw std::invalid_argument("bvp_residual: candidate does not match the model or mesh");
  const double T = sol.period, h = 1.0 / E;
  const auto Dref = cheb::differentiation_matrix(N);
  const auto delays = model.delays();
  double worst = 0.0;

  // Collocation at nodes 1..M; a node shared by two elements is collocated
  // with the derivative of the element on its left.
  std::vector<double> now(d), g(d);
  std::vector<std::vector<double>> del(delays.size(), std::vector<double>(d));
  std::vector<const double*> ptr(delays.size());
  for (int e = 0; e < E; ++e) {
    for (int j = 1; j <= N; ++j) {
      const int k = e * N + j;
      for (int c = 0; c < d; ++c) now[c] = sol.x[k * d + c];
      for (std::size_t i = 0; i < delays.size(); ++i) {
        sol.eval(sol.nodes[k] - delays[i] / T, del[i]);
        ptr[i] = del[i].data();
      }
      model.eval(now, ptr, g);
      for (int c = 0; c < d; ++c) {
        double dx = 0.0;
        for (int l = 0; l <= N; ++l) dx += Dref(j, l) * sol.x[(e * N + l) * d + c];
        dx *= 2.0 / h;
        const double extra = c == d - 1 ? sol.unfolding : 0.0;
        worst = std::max(worst, std::abs(dx - T * g[c] - extra));
      }
    }
  }
  // Periodicity: the last node repeats the first.
  const std::size_t last = static_cast<std::size_t>(sol.mesh.node_count() - 1) * d;
  for (int c = 0; c < d; ++c) worst = std::max(worst, std::abs(sol.x[last + c] - sol.x[c]));
  worst = std::max(worst, std::abs(sol.unfolding));
  // Phase.
  if (sol.phase == PhaseCondition::Anchor && !sol.anchor_direction.empty()) {
    double v = 0.0;
    for (int c = 0; c < d; ++c) v += sol.anchor_direction[c] * (sol.x[c] - sol.anchor_state[c]);
    worst = std::max(worst, std::abs(v));
  } else if (sol.phase == PhaseCondition::Literal && !sol.degenerate) {
    double v = 0.0;
    for (int c = 0; c < d; ++c) {
      double dx = 0.0;
      for (int l = 0; l <= N; ++l) dx += Dref(0, l) * sol.x[l * d + c];
      v += sol.x[c] * dx * (2.0 / h);
    }
    worst = std::max(worst, std::abs(v));
  }
  // Resource, by Gauss-Legendre on each element piece of [-tau/T, 0].
  const double A = std::visit([](const auto& p) { return p.A; }, prm);
  std::vector<double> gx, gw, xs(d);
  gauss_legendre(2 * N + 8, gx, gw);
  double sum = 0.0;
  for (std::size_t i = 0; i < delays.size(); ++i) {
    const double a = delays[i] / T;
    const double lo = -a;
    for (int m = static_cast<int>(std::floor(lo / h)); m * h < 0.0; ++m) {
      const double p = std::max(lo, m * h), q = std::min(0.0, (m + 1) * h);
      if (!(q > p)) continue;
      for (std::size_t n = 0; n < gx.size(); ++n) {
        sol.eval(0.5 * (p + q) + 0.5 * (q - p) * gx[n], xs);
        sum += 0.5 * (q - p) * gw[n] * model.sequestration_flux(i, xs);
      }
    }
  }
  worst = std::max(worst, std::abs(sol.x[d - 1] + A * T * sum - model.total_resource()));
  return worst;
}

PeriodicSolution resample(const PeriodicSolution& sol, const SpectralMesh& mesh) {
  mesh.validate();
  PeriodicSolution out = sol;
  out.mesh = mesh;
  out.nodes = mesh.nodes(1.0);
  out.x.assign(out.nodes.size() * sol.dim, 0.0);
  std::vector<double> v(sol.dim);
  for (std::size_t k = 0; k < out.nodes.size(); ++k) {
    sol.eval(k + 1 == out.nodes.size() ? 0.0 : out.nodes[k], v);
    std::copy(v.begin(), v.end(), out.x.begin() + k * sol.dim);
  }
  return out;
}

void write_json(std::ostream& os, const PeriodicSolution& sol) {
  nlohmann::json j;
  j["mesh"] = {{"num_elements", sol.mesh.num_elements}, {"order", sol.mesh.order}};
  j["nodes"] = sol.nodes;
  std::vector<std::vector<double>> states;
  for (std::size_t k = 0; k < sol.nodes.size(); ++k)
    states.emplace_back(sol.x.begin() + k * sol.dim, sol.x.begin() + (k + 1) * sol.dim);
  j["states"] = states;
  j["period"] = sol.period;
  j["unfolding"] = sol.unfolding;
  j["residual_norm"] = sol.residual_norm;
  j["converged"] = sol.converged;
  j["degenerate"] = sol.degenerate;
  j["iterations"] = sol.iterations;
  j["residual_history"] = sol.residual_history;
  j["phase_condition"] = sol.phase == PhaseCondition::Anchor ? "anchor" : "literal";
  os << j.dump(2) << '\n';
}

void write_csv(std::ostream& os, const PeriodicSolution& sol, int points) {
  if (points < 2) throw std::invalid_argument("write_csv: need at least two points");
  os << "t";
  for (int c = 1; c < sol.dim; ++c) os << ",p" << c;
  os << ",R\n";
  std::vector<double> v(sol.dim);
  for (int i = 0; i < points; ++i) {
    const double s = double(i) / points;
    sol.eval(s, v);
    std::vector<double> row{s * sol.period};
    row.insert(row.end(), v.begin(), v.end());
    io::write_row(os, row);
  }
}

}  // namespace metosc
