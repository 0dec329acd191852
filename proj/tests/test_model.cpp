#include <doctest.h>

#include <cmath>
#include <random>

#include "metosc/model.hpp"

using namespace metosc;

namespace {

SingleProteinParams single(double tau, double rt) {
  SingleProteinParams p;
  p.tau = tau;
  p.R_T = rt;
  return p;
}

ThreeProteinParams three(double tau, double rt) {
  ThreeProteinParams p;
  p.set_equal_delays(tau);
  p.R_T = rt;
  return p;
}

// Central-difference Jacobians of Model::eval at (x, delayed copies of y).
void fd_jacobians(const Model& m, const std::vector<double>& x, const std::vector<double>& y,
                  Eigen::MatrixXd& J, std::vector<Eigen::MatrixXd>& Jd) {
  const int n = m.dim();
  const std::size_t slots = m.delays().size();
  // One-sided at zero production, where negative arguments are clamped.
  auto step = [](double v) { return v == 0.0 ? 1e-9 : 1e-6; };
  auto eval = [&](const std::vector<double>& now, const std::vector<std::vector<double>>& d) {
    std::vector<const double*> ptr;
    for (const auto& v : d) ptr.push_back(v.data());
    std::vector<double> out(n);
    m.eval(now, ptr, out);
    return out;
  };
  std::vector<std::vector<double>> d(slots, y);
  J.resize(n, n);
  for (int j = 0; j < n; ++j) {
    auto xp = x, xm = x;
    const double eps = step(x[j]);
    xp[j] += eps;
    if (x[j] != 0.0) xm[j] -= eps;
    const auto fp = eval(xp, d), fm = eval(xm, d);
    for (int i = 0; i < n; ++i) J(i, j) = (fp[i] - fm[i]) / (xp[j] - xm[j]);
  }
  Jd.assign(slots, Eigen::MatrixXd(n, n));
  for (std::size_t s = 0; s < slots; ++s)
    for (int j = 0; j < n; ++j) {
      auto dp = d, dm = d;
      const double eps = step(y[j]);
      dp[s][j] += eps;
      if (y[j] != 0.0) dm[s][j] -= eps;
      const auto fp = eval(x, dp), fm = eval(x, dm);
      for (int i = 0; i < n; ++i) Jd[s](i, j) = (fp[i] - fm[i]) / (dp[s][j] - dm[s][j]);
    }
}

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("hill function values") {
  const HillParams h{0.5, 2};
  CHECK(hill(0.0, h) == 0.0);
  CHECK(hill(0.5, h) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(hill(0.7434, h) == doctest::Approx(0.688529239554354).epsilon(1e-13));
  CHECK_THROWS_AS(hill(-0.1, h), std::domain_error);
  CHECK_THROWS_AS(hill_derivative(-0.1, h), std::domain_error);
}

TEST_CASE("hill derivative matches central differences") {
  const HillParams h{0.5, 2};
  CHECK(hill_derivative(0.0, h) == 0.0);
  CHECK(hill_derivative(0.5, h) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(hill_derivative(0.0, HillParams{0.5, 1}) == doctest::Approx(2.0));
  for (int n = 1; n <= 4; ++n) {
    const HillParams hn{0.5, n};
    for (double x = 0.01; x < 5.0; x *= 1.3) {
      const double eps = 1e-5;
      const double fd = (hill(x + eps, hn) - hill(x - eps, hn)) / (2 * eps);
      CHECK(std::abs(hill_derivative(x, hn) - fd) < 1e-6);
    }
  }
}

TEST_CASE("single-protein right-hand side") {
  const auto prm = single(12, 50);
  SUBCASE("trivial equilibrium is a fixed point") {
    const State x{{0.0}, 50.0};
    const State d = rhs_single(x, x, prm);
    CHECK(d.p[0] == 0.0);
    CHECK(d.R == 0.0);
  }
  SUBCASE("top equilibrium at (12, 50)") {
    const State x{{0.7434}, 5.3982};
    const State d = rhs_single(x, x, prm);
    CHECK(std::abs(d.p[0]) < 1e-3);
    CHECK(std::abs(d.R) < 1e-15);
  }
  SUBCASE("hand-evaluated point") {
    const State d = rhs_single(State{{1.0}, 1.0}, State{{0.0}, 0.0}, prm);
    CHECK(d.p[0] == doctest::Approx(-10.0));
    CHECK(d.R == doctest::Approx(-0.8));
  }
}

TEST_CASE("three-protein right-hand side") {
  const auto prm = three(5.7, 100);
  const State zero{{0, 0, 0}, 100};
  const State z = rhs_three(zero, zero, zero, zero, prm);
  for (double v : z.p) CHECK(v == 0.0);
  CHECK(z.R == 0.0);

  const State top{{0.9942, 1.1328, 1.1328}, 7.0965};
  const State t = rhs_three(top, top, top, top, prm);
  for (double v : t.p) CHECK(std::abs(v) < 1e-3);
  CHECK(std::abs(t.R) < 1e-3);
}

TEST_CASE("resource derivative vanishes on constant states") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  ThreeProteinParams tp = three(2.0, 40.0);
  tp.tau = {1.0, 2.5, 4.0};
  for (int i = 0; i < 200; ++i) {
    const State s1{{u(rng)}, 10 * u(rng)};
    CHECK(std::abs(rhs_single(s1, s1, single(3.0, 20.0)).R) < 1e-14);
    const State s3{{u(rng), u(rng), u(rng)}, 10 * u(rng)};
    CHECK(std::abs(rhs_three(s3, s3, s3, s3, tp).R) < 1e-13);
  }
}

TEST_CASE("single-protein equilibria match reported values") {
  SUBCASE("tau = 12, R_T = 50") {
    const auto set = equilibria_single(single(12, 50));
    REQUIRE(set.points.size() == 3);
    const auto* top = set.find(EquilibriumKind::Top);
    REQUIRE(top);
    CHECK(top->state.p[0] == doctest::Approx(0.743360732811108).epsilon(1e-12));
    CHECK(top->state.R == doctest::Approx(5.398356031333504).epsilon(1e-12));
    CHECK(std::abs(top->state.p[0] - 0.7434) < 5e-4);
    CHECK(std::abs(top->state.R - 5.3982) < 5e-4);
  }
  SUBCASE("tau = 5, R_T = 50") {
    const auto set = equilibria_single(single(5, 50));
    const auto* top = set.find(EquilibriumKind::Top);
    REQUIRE(top);
    CHECK(std::abs(top->state.p[0] - 1.6412) < 5e-3);
    CHECK(std::abs(top->state.R - 8.968) < 5e-3);
  }
  SUBCASE("tau = 45, R_T = 5 only trivial") {
    const auto set = equilibria_single(single(45, 5));
    REQUIRE(set.points.size() == 1);
    CHECK(set.points[0].kind == EquilibriumKind::Trivial);
    CHECK(set.points[0].state.R == 5.0);
  }
}

TEST_CASE("single-protein equilibria properties over a parameter sweep") {
  for (double tau = 0.25; tau < 50; tau += 1.7) {
    for (double rt = 0.5; rt < 60; rt += 2.3) {
      const auto prm = single(tau, rt);
      const auto set = equilibria_single(prm);
      const double sn = saddle_node_boundary_single(tau, prm);
      // Descartes: 1 or 3 points away from the fold.
      CHECK(set.points.size() == (rt > sn ? 3u : 1u));
      for (const auto& e : set.points) {
        CHECK(equilibrium_residual(e.state, prm) < 1e-10);
        const State d = rhs_single(e.state, e.state, prm);
        CHECK(std::abs(d.p[0]) < 1e-10);
        if (e.kind != EquilibriumKind::Trivial) CHECK(e.state.p[0] > 0.0);
      }
      if (set.points.size() == 3) {
        CHECK(set.points[2].state.p[0] > set.points[1].state.p[0]);
        // Closed form and Sturm isolation agree.
        const auto roots = positive_roots_equilibrium_poly(prm);
        REQUIRE(roots.size() == 2);
        CHECK(std::abs(roots[0] - set.points[1].state.p[0]) < 1e-10);
        CHECK(std::abs(roots[1] - set.points[2].state.p[0]) < 1e-10);
      }
    }
  }
}

TEST_CASE("general Hill exponent uses root isolation") {
  auto prm = single(3.0, 40.0);
  prm.hill.n = 3;
  const auto set = equilibria_single(prm);
  REQUIRE(set.points.size() == 3);
  for (const auto& e : set.points) CHECK(equilibrium_residual(e.state, prm) < 1e-10);

  prm.hill.n = 1;
  const auto one = equilibria_single(prm);
  REQUIRE(one.points.size() == 2);
  CHECK(one.points[1].kind == EquilibriumKind::Top);
  CHECK(equilibrium_residual(one.points[1].state, prm) < 1e-10);
}

TEST_CASE("saddle-node boundary") {
  const SingleProteinParams base;
  CHECK(saddle_node_boundary_single(0.0, base) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(saddle_node_boundary_single(0.75, base) == doctest::Approx(6.614378277661476).epsilon(1e-14));
  CHECK(std::abs(saddle_node_boundary_single(0.75, base) - 6.614) < 1e-3);
  CHECK(saddle_node_boundary_single(3.0, base) == doctest::Approx(10.0).epsilon(1e-15));

  for (double tau : {0.0, 0.75, 3.0, 7.3, 20.0}) {
    const double sn = saddle_node_boundary_single(tau, base);
    const auto at = equilibria_single(single(tau, sn));
    REQUIRE(at.points.size() == 2);
    CHECK(at.points[1].degenerate);
    CHECK(equilibria_single(single(tau, sn * (1 + 1e-9))).points.size() == 3);
    CHECK(equilibria_single(single(tau, sn * (1 - 1e-9))).points.size() == 1);
  }
}

TEST_CASE("three-protein equilibria") {
  SUBCASE("reported top point at tau = 5.7, R_T = 100") {
    const auto prm = three(5.7, 100);
    const auto set = equilibria_three(prm);
    CHECK_FALSE(set.incomplete);
    REQUIRE(set.points.size() == 3);
    const auto* top = set.find(EquilibriumKind::Top);
    REQUIRE(top);
    const double expected[] = {0.9942, 1.1328, 1.1328};
    for (int i = 0; i < 3; ++i) CHECK(std::abs(top->state.p[i] - expected[i]) < 5e-3);
    CHECK(std::abs(top->state.R - 7.0965) < 5e-3);
    CHECK(top->state.p[0] == doctest::Approx(0.994189690323843).epsilon(1e-10));
    CHECK(top->state.R == doctest::Approx(7.096539368786593).epsilon(1e-10));
  }
  SUBCASE("trivial always present and labeling by norm") {
    for (double tau : {0.5, 3.0, 12.0, 30.0})
      for (double rt : {2.0, 15.0, 40.0, 90.0}) {
        const auto prm = three(tau, rt);
        const auto set = equilibria_three(prm);
        CHECK_FALSE(set.incomplete);
        REQUIRE(set.points[0].kind == EquilibriumKind::Trivial);
        CHECK(set.points[0].state.R == rt);
        CHECK((set.points.size() == 1 || set.points.size() == 3));
        for (const auto& e : set.points) {
          CHECK(equilibrium_residual(e.state, prm) < 1e-9);
          CHECK(std::abs(e.state.p[1] - e.state.p[2]) < 1e-9);
        }
        if (set.points.size() == 3) {
          auto norm = [](const State& s) { return std::hypot(s.p[0], s.p[1], s.p[2]); };
          CHECK(norm(set.points[2].state) > norm(set.points[1].state));
        }
      }
  }
  SUBCASE("asymmetric parameters use the full start grid") {
    auto prm = three(2.0, 60);
    prm.B[2] = 2.5;
    prm.tau = {2.0, 1.5, 2.5};
    const auto set = equilibria_three(prm);
    CHECK_FALSE(set.incomplete);
    REQUIRE(set.points.size() == 3);
    for (const auto& e : set.points) CHECK(equilibrium_residual(e.state, prm) < 1e-9);
  }
}

TEST_CASE("single-protein linearization") {
  const auto prm = single(12, 50);
  const auto set = equilibria_single(prm);
  SUBCASE("trivial point gives the elementary ODE") {
    const auto sys = linearize_single(set.points[0], prm);
    CHECK(sys.G0(0, 0) == -10.0);
    CHECK(sys.G0(0, 1) == 0.0);
    CHECK(sys.G0(1, 0) == 0.0);
    CHECK(sys.G0(1, 1) == 0.0);
    REQUIRE(sys.delayed.size() == 1);
    CHECK(sys.delayed[0].G.isZero(0.0));
  }
  SUBCASE("structure at the top point") {
    const auto& top = *set.find(EquilibriumKind::Top);
    const auto sys = linearize_single(top, prm);
    CHECK(sys.G0(0, 0) == -prm.D);
    CHECK(sys.G0(0, 1) == 0.0);
    const auto& G = sys.delayed[0].G;
    for (int j = 0; j < 2; ++j) CHECK(G(1, j) == doctest::Approx(prm.A / prm.B * G(0, j)).epsilon(1e-14));
  }
  SUBCASE("matches finite differences at every equilibrium") {
    const Model m{prm};
    for (const auto& e : set.points) {
      const auto sys = linearize_single(e, prm);
      Eigen::MatrixXd J;
      std::vector<Eigen::MatrixXd> Jd;
      fd_jacobians(m, e.state.flat(), e.state.flat(), J, Jd);
      CHECK(rel_err(sys.G0, J) < 1e-6);
      CHECK(rel_err(sys.delayed[0].G, Jd[0]) < 1e-6);
    }
  }
}

TEST_CASE("three-protein linearization") {
  auto prm = three(5.7, 100);
  const auto set = equilibria_three(prm);
  SUBCASE("trivial point") {
    const auto sys = linearize_three(set.points[0], prm);
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(4, 4);
    expected.diagonal() << -10, -10, -10, 0;
    CHECK(sys.G0.isApprox(expected));
    for (const auto& t : sys.delayed) CHECK(t.G.isZero(0.0));
  }
  SUBCASE("equal delays merge into one term") {
    const auto& top = *set.find(EquilibriumKind::Top);
    const auto merged = linearize_three(top, prm);
    REQUIRE(merged.delayed.size() == 1);
    auto split = prm;
    split.tau = {5.7, 6.0, 6.3};
    const auto sys = linearize_three(top, split);
    REQUIRE(sys.delayed.size() == 3);
    const Eigen::MatrixXd sum = sys.delayed[0].G + sys.delayed[1].G + sys.delayed[2].G;
    CHECK((merged.delayed[0].G - sum).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("matches finite differences with distinct delays") {
    prm.tau = {2.0, 3.0, 4.0};
    const auto eqs = equilibria_three(prm);
    const Model m{prm};
    for (const auto& e : eqs.points) {
      const auto sys = linearize_three(e, prm);
      Eigen::MatrixXd J;
      std::vector<Eigen::MatrixXd> Jd;
      fd_jacobians(m, e.state.flat(), e.state.flat(), J, Jd);
      CHECK(rel_err(sys.G0, J) < 1e-6);
      if (e.kind == EquilibriumKind::Trivial) continue;
      REQUIRE(sys.delayed.size() == 3);
      for (int s = 0; s < 3; ++s) CHECK(rel_err(sys.delayed[s].G, Jd[s]) < 1e-6);
    }
  }
  SUBCASE("Model::jacobians agree with finite differences off equilibrium") {
    prm.tau = {2.0, 3.0, 4.0};
    const Model m{prm};
    const std::vector<double> x{0.7, 1.3, 0.4, 12.0}, y{1.1, 0.2, 0.9, 30.0};
    Eigen::MatrixXd J, Jfd;
    std::vector<Eigen::MatrixXd> Jd, Jdfd;
    const double* d[3] = {y.data(), y.data(), y.data()};
    m.jacobians(x, d, J, Jd);
    fd_jacobians(m, x, y, Jfd, Jdfd);
    CHECK(rel_err(J, Jfd) < 1e-6);
    for (int s = 0; s < 3; ++s) CHECK(rel_err(Jd[s], Jdfd[s]) < 1e-6);
  }
}

TEST_CASE("parameter validation") {
  auto p = single(1, 1);
  p.D = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = single(-1, 1);
  CHECK_THROWS_AS(equilibria_single(p), std::invalid_argument);
  p = single(1, 1);
  p.hill.n = 0;
  CHECK_THROWS_AS(Model{p}, std::invalid_argument);
}
