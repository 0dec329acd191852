#include <doctest.h>

#include <cmath>
#include <sstream>

#include "metosc/fitting.hpp"

using namespace metosc;

namespace {

// Grid with |lambda| = R_T / (2 tau + 5) and one equilibrium more above that line.
StabilityGrid synthetic_grid() {
  StabilityGrid g;
  g.spec.tau = linspace("tau", 1.0, 10.0, 10);
  g.spec.rt = linspace("R_T", 0.0, 40.0, 41);
  for (double rt : g.spec.rt.values) {
    for (double tau : g.spec.tau.values) {
      StabilityCell c;
      c.tau = tau;
      c.R_T = rt;
      c.status = CellStatus::Ok;
      c.modulus = rt / (2.0 * tau + 5.0);
      c.n_equilibria = rt > 2.0 * tau + 5.0 ? 3 : 1;
      g.cells.push_back(c);
    }
  }
  return g;
}

std::vector<BoundaryPoint> on_poly(const std::vector<double>& c, std::vector<double> taus) {
  BoundaryCurve curve;
  curve.coeffs = c;
  std::vector<BoundaryPoint> pts;
  for (double t : taus) pts.push_back({t, curve(t), 0});
  return pts;
}

const StabilityGrid& single_top_grid() {
  static const StabilityGrid g = [] {
    StabilityGridSpec s;
    s.base = SingleProteinParams{};
    s.tau = cell_centers("tau", 0.0, 20.0, 80);
    s.rt = cell_centers("R_T", 0.0, 60.0, 80);
    return stability_grid(s, 2);
  }();
  return g;
}

}  // namespace

TEST_CASE("crossings of a linear modulus are exact") {
  const auto g = synthetic_grid();
  const auto pts = extract_boundary(g, BoundaryCriterion::ModulusCrossing);
  REQUIRE(pts.size() == 10);
  for (const auto& p : pts) {
    CHECK(p.R_T == doctest::Approx(2.0 * p.tau + 5.0).epsilon(1e-12));
    CHECK(p.index == 0);
  }
  const auto cnt = extract_boundary(g, BoundaryCriterion::CountChange);
  REQUIRE(cnt.size() == 10);
  for (const auto& p : cnt) CHECK(std::abs(p.R_T - (2.0 * p.tau + 5.0)) <= 0.5 + 1e-12);
}

TEST_CASE("columns without a crossing, failed cells and multiple crossings") {
  auto g = synthetic_grid();
  const std::size_t nt = g.spec.tau.size();
  // Column 0: constant sign.
  for (std::size_t j = 0; j < g.spec.rt.size(); ++j) g.cells[j * nt].modulus = 0.5;
  // Column 1: a failed cell right at the crossing.
  g.cells[9 * nt + 1].status = CellStatus::Failed;
  // Column 2 (tau = 3, crossing at 11): dips below 1 again from R_T = 30.
  for (std::size_t j = 30; j < g.spec.rt.size(); ++j) g.cells[j * nt + 2].modulus = 0.9;
  const auto pts = extract_boundary(g, BoundaryCriterion::ModulusCrossing);
  int col0 = 0, col1 = 0, col2 = 0;
  for (const auto& p : pts) {
    if (p.tau == 1.0) ++col0;
    if (p.tau == 2.0) ++col1;
    if (p.tau == 3.0) {
      ++col2;
      if (p.index == 1) CHECK(p.R_T > 29.0);
    }
  }
  CHECK(col0 == 0);
  CHECK(col1 == 0);
  CHECK(col2 == 2);
  // Absent cells have no modulus.
  g.cells[13 * nt + 3].status = CellStatus::Absent;
  for (const auto& p : extract_boundary(g, BoundaryCriterion::ModulusCrossing)) CHECK(p.tau != 4.0);
}

TEST_CASE("polynomial fits") {
  const auto line = fit_polynomial(on_poly({1.0, 2.0}, {0, 1, 2, 3, 4}), 1);
  CHECK(line.coeffs[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(line.coeffs[1] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(line.r2 == 1.0);
  CHECK(line.degree() == 1);
  CHECK(line.tau_min == 0.0);
  CHECK(line.tau_max == 4.0);

  const std::vector<double> c{10.3749, 4.8855, -0.1118, 0.0016};
  const auto cub = fit_polynomial(on_poly(c, {1, 3, 5, 8, 12, 17, 21, 25, 30}), 3);
  for (int k = 0; k < 4; ++k) CHECK(cub.coeffs[k] == doctest::Approx(c[k]).epsilon(1e-10));

  CHECK_THROWS_AS(fit_polynomial(on_poly({1.0, 2.0}, {0, 1}), 1), std::invalid_argument);
  CHECK_THROWS_AS(fit_polynomial(on_poly({1.0, 2.0}, {2, 2, 2, 2}), 1), std::invalid_argument);
}

TEST_CASE("r2 agrees with a direct recomputation") {
  std::vector<BoundaryPoint> pts;
  for (int i = 0; i < 20; ++i) pts.push_back({double(i), 3.0 * i + 1.0 + ((i % 3) - 1) * 0.7, 0});
  const auto f = fit_polynomial(pts, 1);
  CHECK(f.r2 > 0.0);
  CHECK(f.r2 < 1.0);
  CHECK(f.r2 == doctest::Approx(coefficient_of_determination(f)).epsilon(1e-12));
}

TEST_CASE("single-protein Hopf boundary") {
  const auto& g = single_top_grid();
  const auto pts = extract_boundary(g, BoundaryCriterion::ModulusCrossing);
  const double cell = 60.0 / 80.0;
  for (const auto& p : restrict_domain(pts, 1.0, 18.0)) CHECK(std::abs(p.R_T - (2.6449 * p.tau + 4.6323)) < cell);

  // Each reported crossing is bracketed by moduli on opposite sides of 1.
  for (const auto& p : pts) {
    std::size_t i = 0;
    while (g.spec.tau.values[i] != p.tau) ++i;
    std::size_t j = 0;
    while (j + 1 < g.spec.rt.size() && g.at(i, j + 1).R_T < p.R_T) ++j;
    CHECK((g.at(i, j).modulus - 1.0) * (g.at(i, j + 1).modulus - 1.0) <= 0.0);
  }

  const auto fit = fit_polynomial(restrict_domain(pts, 0.75, 1e9), 1);
  CHECK(std::abs(fit.coeffs[1] - 2.6449) < 0.05);
  CHECK(std::abs(fit.coeffs[0] - 4.6323) < 0.3);
  CHECK(fit.r2 >= 0.999);
}

TEST_CASE("single-protein saddle-node boundary") {
  const auto& g = single_top_grid();
  const SingleProteinParams prm;
  const auto pts = extract_boundary(g, BoundaryCriterion::CountChange);
  CHECK(pts.size() == g.spec.tau.size());
  for (const auto& p : pts) CHECK(std::abs(p.R_T - saddle_node_boundary_single(p.tau, prm)) < 60.0 / 80.0);
  CHECK(saddle_node_boundary_single(0.75, prm) == doctest::Approx(6.614).epsilon(1e-4));
}

TEST_CASE("boundary curve JSON") {
  const auto f = fit_polynomial(on_poly({1.0, 2.0}, {0, 1, 2}), 1);
  std::ostringstream os;
  write_json(os, f);
  const auto s = os.str();
  for (const char* key : {"\"coefficients\"", "\"r2\"", "\"domain\"", "\"points\""})
    CHECK(s.find(key) != std::string::npos);
}
