#include "metosc/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "metosc/parallel.hpp"

namespace metosc {

double amplitude_feature(const Trajectory& traj, double t0, double t1) {
  const auto lo = std::lower_bound(traj.times.begin(), traj.times.end(), t0);
  const auto hi = std::upper_bound(traj.times.begin(), traj.times.end(), t1);
  if (!(t1 >= t0) || lo >= hi) throw std::domain_error("amplitude_feature: empty window");
  const std::size_t i0 = lo - traj.times.begin(), i1 = hi - traj.times.begin();
  double total = 0.0;
  for (int c = 0; c + 1 < traj.dim; ++c) {
    double mn = traj.y[i0 * traj.dim + c], mx = mn;
    for (std::size_t i = i0; i < i1; ++i) {
      const double v = traj.y[i * traj.dim + c];
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    total += 0.5 * (mx - mn);
  }
  return total;
}

double circular_offset(double offset) {
  const double o = offset - std::floor(offset);
  return std::min(o, 1.0 - o);
}

namespace {

// Vertex of the parabola through (i-1, i, i+1); returns the fractional shift.
double parabolic_shift(double ym, double y0, double yp) {
  const double den = ym - 2.0 * y0 + yp;
  if (den == 0.0) return 0.0;
  return std::clamp(0.5 * (ym - yp) / den, -0.5, 0.5);
}

}  // namespace

PhaseOffsets peak_phase_offsets(const Trajectory& traj, double t0, double t1) {
  if (traj.dim < 2) throw std::invalid_argument("peak_phase_offsets: no protein components");
  t0 = std::max(t0, traj.times.front());
  t1 = std::min(t1, traj.times.back());
  if (!(t1 > t0)) throw std::domain_error("peak_phase_offsets: empty window");

  // Uniform resampling of p1, at most kMaxSamples points.
  constexpr std::size_t kMaxSamples = 8192;
  const double dt = std::max(traj.step, (t1 - t0) / double(kMaxSamples - 1));
  const std::size_t n = static_cast<std::size_t>(std::floor((t1 - t0) / dt)) + 1;
  if (n < 16) throw std::domain_error("peak_phase_offsets: window too short");
  const int proteins = traj.dim - 1;
  std::vector<double> z(n), v(traj.dim);
  for (std::size_t i = 0; i < n; ++i) {
    traj.eval(std::min(t0 + double(i) * dt, t1), v);
    z[i] = v[0];
  }
  const double mean = std::accumulate(z.begin(), z.end(), 0.0) / double(n);
  for (double& e : z) e -= mean;
  const double var = std::inner_product(z.begin(), z.end(), z.begin(), 0.0);
  if (!(var > 0.0)) throw NotPeriodicError("peak_phase_offsets: p1 is constant over the window");

  // Pearson correlation between the window and its lagged copy.
  const std::size_t max_lag = n / 2;
  std::vector<double> r(max_lag + 1);
  for (std::size_t lag = 0; lag <= max_lag; ++lag) {
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      sxy += z[i] * z[i + lag];
      sxx += z[i] * z[i];
      syy += z[i + lag] * z[i + lag];
    }
    r[lag] = sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
  }
  // First local maximum after the autocorrelation has dropped below zero.
  std::size_t lag = 1;
  while (lag < max_lag && r[lag] > 0.0) ++lag;
  std::size_t best = 0;
  for (; lag < max_lag; ++lag) {
    if (r[lag] > 0.0 && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1]) {
      best = lag;
      break;
    }
  }
  if (best == 0 || r[best] < 0.5) throw NotPeriodicError("peak_phase_offsets: window is not periodic");

  PhaseOffsets out;
  out.period = (double(best) + parabolic_shift(r[best - 1], r[best], r[best + 1])) * dt;

  // Peaks over the stored samples of the last full period.
  const auto first = std::lower_bound(traj.times.begin(), traj.times.end(), t1 - out.period);
  const auto last = std::upper_bound(traj.times.begin(), traj.times.end(), t1);
  const std::size_t i0 = first - traj.times.begin(), i1 = last - traj.times.begin();
  if (i1 < i0 + 3) throw NotPeriodicError("peak_phase_offsets: too few samples in one period");
  std::vector<double> peak(proteins);
  for (int c = 0; c < proteins; ++c) {
    auto at = [&](std::size_t i) { return traj.y[i * traj.dim + c]; };
    std::size_t arg = i0;
    for (std::size_t i = i0; i < i1; ++i)
      if (at(i) > at(arg)) arg = i;
    peak[c] = traj.times[arg];
    if (arg > 0 && arg + 1 < traj.size()) {
      const double shift = parabolic_shift(at(arg - 1), at(arg), at(arg + 1));
      peak[c] += shift * (shift < 0 ? traj.times[arg] - traj.times[arg - 1] : traj.times[arg + 1] - traj.times[arg]);
    }
  }
  for (int c = 0; c < proteins; ++c) {
    const double o = (peak[c] - peak[0]) / out.period;
    double m = o - std::floor(o);
    if (m >= 1.0) m = 0.0;
    out.offsets.push_back(m);
  }
  return out;
}

std::string to_string(FeatureStatus s) { return s == FeatureStatus::Ok ? "ok" : "failed"; }

FeatureCell feature_cell(const FeatureGridSpec& spec, double a1, double rt) {
  FeatureCell cell;
  cell.a1 = a1;
  cell.R_T = rt;
  try {
    ModelParams prm = with_total_resource(spec.base, rt);
    double p0 = spec.p0;
    if (spec.axes == FeatureAxes::Tau_RT) {
      prm = with_delay(prm, a1);
    } else {
      p0 = a1;
    }
    const double tau = delay_of(prm);
    const double t_end = spec.horizon_delays * tau;
    const double t_begin = t_end - spec.window_delays * tau;
    if (!(spec.window_delays > 0.0) || !(t_begin >= 0.0))
      throw std::invalid_argument("feature grid: need 0 < window_delays <= horizon_delays");
    SimOptions opt = spec.sim;
    opt.record_from = t_begin;
    const auto traj = simulate(prm, HistorySpec::starvation({p0}), t_end, opt);
    cell.value = amplitude_feature(traj, t_begin, traj.times.back());
    cell.final_state = traj.state(traj.size() - 1);
  } catch (const std::exception& ex) {
    cell.status = FeatureStatus::Failed;
    cell.value = std::numeric_limits<double>::quiet_NaN();
    cell.message = ex.what();
  }
  return cell;
}

FeatureGrid feature_grid(const FeatureGridSpec& spec, unsigned jobs) {
  spec.axis1.validate();
  spec.rt.validate();
  FeatureGrid grid;
  grid.spec = spec;
  const std::size_t n1 = spec.axis1.size(), nr = spec.rt.size();
  grid.cells.resize(n1 * nr);
  parallel_for(grid.cells.size(), jobs, [&](std::size_t idx) {
    grid.cells[idx] = feature_cell(spec, spec.axis1.values[idx % n1], spec.rt.values[idx / n1]);
  });
  return grid;
}

}  // namespace metosc
