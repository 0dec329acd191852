#include <doctest.h>

#include <cmath>
#include <complex>

#include "metosc/spectral.hpp"

using namespace metosc;

namespace {

LinearDDE scalar_dde(double a, double b, double delay) {
  LinearDDE sys;
  sys.G0 = Eigen::MatrixXd::Constant(1, 1, a);
  sys.add_delayed(delay, Eigen::MatrixXd::Constant(1, 1, b));
  return sys;
}

// Principal characteristic root of s + exp(-s) = 0 by Newton from a nearby
// complex start.
Complex lambert_root() {
  Complex s{-0.3, 1.3};
  for (int i = 0; i < 50; ++i) s -= (s + std::exp(-s)) / (1.0 - std::exp(-s));
  return s;
}

SingleProteinParams single(double tau, double rt) {
  SingleProteinParams p;
  p.tau = tau;
  p.R_T = rt;
  return p;
}

MonodromyResult top_monodromy(double tau, double rt, SpectralMesh mesh = {}) {
  const auto prm = single(tau, rt);
  const auto set = equilibria_single(prm);
  const auto* top = set.find(EquilibriumKind::Top);
  REQUIRE(top != nullptr);
  return equilibrium_monodromy(*top, prm, mesh);
}

}  // namespace

TEST_CASE("chebyshev differentiation is exact for polynomials") {
  const int n = 8;
  const auto x = cheb::lobatto_nodes(n);
  const auto D = cheb::differentiation_matrix(n);
  Eigen::VectorXd f(n + 1), df(n + 1);
  for (int i = 0; i <= n; ++i) {
    f(i) = std::pow(x[i], 5) - 2 * x[i];
    df(i) = 5 * std::pow(x[i], 4) - 2;
  }
  CHECK((D * f - df).cwiseAbs().maxCoeff() < 1e-12);

  const auto w = cheb::barycentric_weights(n);
  std::vector<double> row(n + 1);
  cheb::interpolation_row(x, w, 0.3, row);
  double v = 0.0;
  for (int i = 0; i <= n; ++i) v += row[i] * f(i);
  CHECK(v == doctest::Approx(std::pow(0.3, 5) - 0.6).epsilon(1e-13));
}

TEST_CASE("mesh nodes") {
  SpectralMesh m{3, 5};
  const auto s = m.nodes(2.0);
  REQUIRE(static_cast<int>(s.size()) == m.node_count());
  CHECK(s.front() == 0.0);
  CHECK(s.back() == doctest::Approx(2.0));
  for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] > s[i - 1]);
  CHECK_THROWS((SpectralMesh{0, 8}.validate()));
  CHECK_THROWS((SpectralMesh{2, 3}.validate()));
}

TEST_CASE("lambert-w oracle for y' = -y(t-1)") {
  const Complex s = lambert_root();
  CHECK(s.real() == doctest::Approx(-0.31813150520476413).epsilon(1e-14));
  CHECK(s.imag() == doctest::Approx(1.3372357014306895).epsilon(1e-14));
  const double exact = std::exp(s.real());
  CHECK(exact == doctest::Approx(0.727507111152085).epsilon(1e-14));

  MonodromyOptions opt;
  opt.exclude_trivial = false;
  const auto res = build_monodromy(scalar_dde(0.0, -1.0, 1.0), 1.0, SpectralMesh{2, 24}, opt);
  CHECK(std::abs(std::abs(res.dominant) - exact) < 1e-8);
  CHECK(std::abs(std::arg(res.dominant)) == doctest::Approx(s.imag()).epsilon(1e-8));
}

TEST_CASE("spectral convergence on the lambert-w problem") {
  const double exact = std::exp(lambert_root().real());
  MonodromyOptions opt;
  opt.exclude_trivial = false;
  double prev = 1.0;
  for (int order : {8, 16, 24}) {
    const auto res = build_monodromy(scalar_dde(0.0, -1.0, 1.0), 1.0, SpectralMesh{2, order}, opt);
    const double err = std::abs(std::abs(res.dominant) - exact);
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 1e-8);
}

TEST_CASE("ode embedded with a zero delayed matrix") {
  MonodromyOptions opt;
  opt.exclude_trivial = false;
  const auto res = build_monodromy(scalar_dde(-2.0, 0.0, 1.0), 1.0, SpectralMesh{}, opt);
  CHECK(std::abs(res.dominant - Complex{std::exp(-2.0), 0.0}) < 1e-10);
}

TEST_CASE("trivial equilibrium spectrum") {
  const auto prm = single(1.0, 20.0);
  const auto set = equilibria_single(prm);
  const auto* triv = set.find(EquilibriumKind::Trivial);
  REQUIRE(triv != nullptr);
  const auto res = equilibrium_monodromy(*triv, prm, SpectralMesh{});
  REQUIRE(res.multipliers.size() >= 2);
  CHECK(std::abs(res.multipliers[0] - 1.0) < 1e-6);
  CHECK(std::abs(res.multipliers[1] - std::exp(-10.0)) < 1e-6);
  for (std::size_t i = 2; i < res.multipliers.size(); ++i)
    CHECK(std::abs(res.multipliers[i]) <= std::abs(res.multipliers[1]) + 1e-12);
  CHECK(res.trivial_found);
}

TEST_CASE("classify exclusion rule") {
  MonodromyResult r;
  r.multipliers = {Complex{1.0000002, 0.0}, Complex{0.93, 0.0}};
  auto v = classify(r);
  CHECK(v.kind == Stability::Stable);
  CHECK(v.dominant.real() == doctest::Approx(0.93));
  CHECK(v.trivial_found);

  r.multipliers = {Complex{1.2, 0.0}, Complex{0.5, 0.0}};
  v = classify(r);
  CHECK_FALSE(v.trivial_found);
  CHECK(v.kind == Stability::Unstable);
  CHECK(v.dominant_modulus == doctest::Approx(1.2));

  r.multipliers = {Complex{1.0, 0.0}, Complex{1.00005, 0.0}};
  CHECK(classify(r).kind == Stability::Marginal);
  CHECK_THROWS(classify(MonodromyResult{}));
}

TEST_CASE("top equilibrium stability at cited points") {
  CHECK(classify(top_monodromy(5.0, 50.0)).kind == Stability::Stable);
  // Above the Hopf line R_T ~ 2.645 tau + 4.63 the top point is stable.
  CHECK(classify(top_monodromy(12.0, 50.0)).kind == Stability::Stable);
  const auto v = classify(top_monodromy(20.0, 50.0));
  CHECK(v.kind == Stability::Unstable);
  CHECK(std::abs(v.dominant.imag()) > 1e-3);
}

TEST_CASE("multipliers come in conjugate pairs") {
  const auto res = top_monodromy(12.0, 50.0);
  double worst = 0.0;
  for (const auto& z : res.multipliers) {
    double best = 1e300;
    for (const auto& w : res.multipliers) best = std::min(best, std::abs(w - std::conj(z)));
    worst = std::max(worst, best);
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("trivial multiplier present for both models") {
  for (double tau : {3.0, 12.0}) {
    const auto res = top_monodromy(tau, 50.0);
    CHECK(res.trivial_found);
    double best = 1.0;
    for (const auto& z : res.multipliers) best = std::min(best, std::abs(z - 1.0));
    CHECK(best < 1e-6);
  }
  ThreeProteinParams p3;
  p3.set_equal_delays(5.7);
  p3.R_T = 100.0;
  const ModelParams prm = p3;
  const auto set = equilibria(prm);
  for (const auto& eq : set.points) {
    const auto res = equilibrium_monodromy(eq, prm, SpectralMesh{});
    double best = 1.0;
    for (const auto& z : res.multipliers) best = std::min(best, std::abs(z - 1.0));
    CHECK(best < 1e-6);
  }
}

TEST_CASE("mesh invariance and no ghost roots") {
  const double a = std::abs(top_monodromy(12.0, 50.0, SpectralMesh{2, 12}).dominant);
  const double b = std::abs(top_monodromy(12.0, 50.0, SpectralMesh{3, 8}).dominant);
  CHECK(std::abs(a - b) < 1e-6);

  const auto lo = top_monodromy(12.0, 50.0, SpectralMesh{2, 20});
  const auto hi = top_monodromy(12.0, 50.0, SpectralMesh{2, 28});
  for (std::size_t i = 0; i < 5; ++i) {
    double best = 1e300;
    for (const auto& z : hi.multipliers) best = std::min(best, std::abs(z - lo.multipliers[i]));
    CHECK(best < 1e-6);
  }
}

TEST_CASE("delay longer than the period is rejected") {
  CHECK_THROWS_AS(build_monodromy(scalar_dde(0.0, -1.0, 2.0), 1.0, SpectralMesh{}), std::invalid_argument);
  CHECK_THROWS_AS(build_monodromy(scalar_dde(0.0, -1.0, 1.0), 0.0, SpectralMesh{}), std::invalid_argument);
}

TEST_CASE("stability grid cells and determinism") {
  StabilityGridSpec spec;
  spec.base = SingleProteinParams{};
  spec.tau = Axis{"tau", {2.0, 10.0}};
  spec.rt = Axis{"R_T", {1.0, 20.0}};
  const auto g1 = stability_grid(spec, 1);
  CHECK(g1.at(0, 0).status == CellStatus::Absent);
  CHECK(g1.at(1, 0).status == CellStatus::Absent);
  REQUIRE(g1.at(0, 1).status == CellStatus::Ok);
  CHECK(g1.at(0, 1).verdict == Stability::Stable);
  REQUIRE(g1.at(1, 1).status == CellStatus::Ok);
  CHECK(g1.at(1, 1).verdict == Stability::Unstable);

  const auto g3 = stability_grid(spec, 3);
  for (std::size_t i = 0; i < g1.cells.size(); ++i) {
    CHECK(g1.cells[i].status == g3.cells[i].status);
    CHECK(g1.cells[i].dominant == g3.cells[i].dominant);
  }
}

TEST_CASE("middle equilibrium is unstable wherever present") {
  StabilityGridSpec spec;
  spec.base = SingleProteinParams{};
  spec.kind = EquilibriumKind::Middle;
  spec.tau = cell_centers("tau", 0.0, 50.0, 8);
  spec.rt = cell_centers("R_T", 0.0, 50.0, 8);
  const auto g = stability_grid(spec, 1);
  int present = 0;
  for (const auto& c : g.cells) {
    if (c.status == CellStatus::Absent) continue;
    REQUIRE(c.status == CellStatus::Ok);
    CHECK(c.verdict == Stability::Unstable);
    ++present;
  }
  CHECK(present > 0);
}
