#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "metosc/ddesim.hpp"

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

State final_state(const Trajectory& t) { return t.state(t.size() - 1); }

// Mean spacing of successive maxima of component c above level over [t0, end].
double peak_spacing(const Trajectory& t, int c, double t0, double level) {
  const auto x = t.component(c);
  std::vector<double> peaks;
  for (std::size_t i = 1; i + 1 < x.size(); ++i)
    if (t.times[i] >= t0 && x[i] > level && x[i] > x[i - 1] && x[i] >= x[i + 1]) peaks.push_back(t.times[i]);
  REQUIRE(peaks.size() >= 3);
  return (peaks.back() - peaks.front()) / double(peaks.size() - 1);
}

}  // namespace

TEST_CASE("starvation history") {
  const ModelParams p = single(2.0, 20.0);
  const auto h = HistorySpec::starvation({10.0});
  const auto s = history_value(h, p, -1.0);
  CHECK(s.p == std::vector<double>{0.0});
  CHECK(s.R == 0.0);
  const auto s0 = initial_state(h, p);
  CHECK(s0.p[0] == 10.0);
  CHECK(s0.R == 20.0);
  CHECK_THROWS_AS(history_value(h, p, 0.0), std::domain_error);

  const ModelParams p3 = three(4.0, 30.0);
  const auto s3 = history_value(HistorySpec::starvation({1.0, 2.0, 3.0}), p3, -2.0);
  CHECK(s3.p == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(s3.R == 0.0);
  CHECK_THROWS(simulate(p, HistorySpec::starvation({-1.0}), 10.0));
  CHECK_THROWS(simulate(p, HistorySpec::starvation({1.0, 2.0}), 10.0));
}

TEST_CASE("step plan") {
  SimOptions opt;
  opt.max_step = 1e9;
  opt.pulse_fraction = 0.0;
  const double equal[] = {2.0, 2.0, 2.0};
  auto plan = plan_steps(equal, opt);
  CHECK(plan.commensurate);
  CHECK(plan.h == doctest::Approx(0.02));
  CHECK(plan.delay_steps == std::vector<long>{100, 100, 100});

  const double ratio[] = {1.0, 1.5, 3.0};
  plan = plan_steps(ratio, opt);
  CHECK(plan.commensurate);
  CHECK(plan.delay_steps == std::vector<long>{200, 300, 600});

  const double irrational[] = {1.0, std::sqrt(2.0)};
  plan = plan_steps(irrational, opt);
  CHECK_FALSE(plan.commensurate);

  opt.max_step = 0.05;
  const double longd[] = {45.0};
  CHECK(plan_steps(longd, opt).h <= 0.05);
  opt.steps_per_delay = 10;
  CHECK_THROWS(plan_steps(longd, opt));
}

TEST_CASE("long delay and scarce resource approach the trivial point") {
  const auto t = simulate(single(45.0, 5.0), HistorySpec::starvation({10.0}), 2000.0);
  const auto s = final_state(t);
  CHECK(std::abs(s.p[0]) < 1e-3);
  CHECK(std::abs(s.R - 5.0) < 1e-3);
}

TEST_CASE("short delay and ample resource approach the top point") {
  const auto t = simulate(single(5.0, 50.0), HistorySpec::starvation({10.0}), 2000.0);
  const auto s = final_state(t);
  CHECK(std::abs(s.p[0] - 1.6412) < 1e-2);
  CHECK(std::abs(s.R - 8.968) < 1e-2);
}

TEST_CASE("oscillation period follows the delay") {
  SimOptions opt;
  opt.record_from = 900.0;
  const auto t = simulate(single(10.0, 20.0), HistorySpec::starvation({10.0}), 1000.0, opt);
  CHECK(t.times.front() >= 900.0);
  CHECK(std::abs(peak_spacing(t, 0, 900.0, 0.1) - 10.0) < 0.1);
}

TEST_CASE("dense output reproduces samples") {
  const auto t = simulate(single(3.0, 20.0), HistorySpec::starvation({10.0}), 30.0);
  std::vector<double> v(2);
  for (std::size_t i = 0; i < t.size(); i += 97) {
    t.eval(t.times[i], v);
    CHECK(std::abs(v[0] - t.y[2 * i]) < 1e-12);
    CHECK(std::abs(v[1] - t.y[2 * i + 1]) < 1e-12);
  }
  CHECK_THROWS_AS(t.eval(31.0, v), std::out_of_range);
}

TEST_CASE("step doubling converges at high order") {
  const auto p = single(5.0, 50.0);
  auto end = [&](int spd) {
    SimOptions opt;
    opt.steps_per_delay = spd;
    opt.max_step = 1e9;
    opt.pulse_fraction = 0.0;
    return final_state(simulate(p, HistorySpec::starvation({10.0}), 2000.0, opt));
  };
  const auto ref = end(12800);
  const auto a = end(800), b = end(1600);
  const double ea = std::max(std::abs(a.p[0] - ref.p[0]), std::abs(a.R - ref.R));
  const double eb = std::max(std::abs(b.p[0] - ref.p[0]), std::abs(b.R - ref.R));
  CHECK(ea / eb >= 8.0);
}

TEST_CASE("resource conservation") {
  const auto p = single(10.0, 20.0);
  const auto t = simulate(p, HistorySpec::starvation({10.0}), 1000.0);
  const auto r = resource_residual(t, p);
  double worst = 0.0;
  int counted = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.times[i] < 10.0 - 1e-9) {
      CHECK(std::isnan(r[i]));
    } else {
      worst = std::max(worst, std::abs(r[i]));
      ++counted;
    }
  }
  CHECK(counted > 0);
  CHECK(worst < 1e-4);

  // Raising R at the final sample only leaves the sequestration integrals
  // nearly unchanged.
  auto bumped = t;
  const std::size_t last = t.size() - 1;
  bumped.y[2 * last + 1] += 1.0;
  const auto rb = resource_residual(bumped, p);
  CHECK(std::abs(rb[last] - r[last] + 1.0) < 5e-3);
}

TEST_CASE("three-protein conservation and positivity") {
  const auto p = three(5.7, 100.0);
  const auto t = simulate(p, HistorySpec::starvation({10.0}), 570.0);
  const auto r = resource_residual(t, p);
  double worst = 0.0;
  for (double v : r)
    if (!std::isnan(v)) worst = std::max(worst, std::abs(v));
  CHECK(worst < 1e-4);
  CHECK(*std::min_element(t.y.begin(), t.y.end()) >= -1e-9);
}

TEST_CASE("positivity") {
  for (double rt : {5.0, 20.0, 50.0}) {
    const auto t = simulate(single(10.0, rt), HistorySpec::starvation({10.0}), 500.0);
    double lo = 0.0;
    for (double v : t.y) lo = std::min(lo, v);
    CHECK(lo >= -1e-9);
  }
}

TEST_CASE("equilibria are fixed points of the integrator") {
  const ModelParams ps[] = {single(12.0, 50.0), single(5.0, 50.0), three(5.7, 100.0)};
  for (const auto& prm : ps) {
    const auto set = equilibria(prm);
    for (const auto& eq : set.points) {
      const Model m(prm);
      const auto t = simulate(prm, HistorySpec::at_state(eq.state), 10.0 * m.max_delay());
      const auto x0 = eq.state.flat();
      double drift = 0.0;
      for (std::size_t i = 0; i < t.size(); ++i)
        for (int k = 0; k < t.dim; ++k) drift = std::max(drift, std::abs(t.y[i * t.dim + k] - x0[k]));
      CHECK(drift < 1e-8);
    }
  }
}

TEST_CASE("equilibrium residual of a constant trajectory") {
  const auto prm = single(12.0, 50.0);
  const auto eq = *equilibria_single(prm).find(EquilibriumKind::Top);
  const auto t = simulate(prm, HistorySpec::at_state(eq.state), 60.0);
  const auto r = resource_residual(t, prm);
  double worst = 0.0;
  for (double v : r)
    if (!std::isnan(v)) worst = std::max(worst, std::abs(v));
  CHECK(worst < 1e-8);
}

TEST_CASE("csv export") {
  const auto t = simulate(single(2.0, 20.0), HistorySpec::starvation({1.0}), 0.1);
  std::ostringstream os;
  write_csv(os, t);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "t,p1,R");
  std::getline(is, line);
  CHECK(line == "0,1,20");

  const auto t3 = simulate(three(2.0, 20.0), HistorySpec::starvation({1.0}), 0.1);
  std::ostringstream os3;
  write_csv(os3, t3);
  CHECK(os3.str().rfind("t,p1,p2,p3,R\n", 0) == 0);
}
