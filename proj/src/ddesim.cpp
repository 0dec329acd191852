#include "metosc/ddesim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "metosc/grid.hpp"
#include "metosc/io.hpp"
#include "metosc/log.hpp"

namespace metosc {

namespace {

std::vector<double> production_p0(const HistorySpec& spec, int proteins) {
  if (spec.p0.size() == 1 && proteins > 1) return std::vector<double>(proteins, spec.p0[0]);
  return spec.p0;
}

// Best rational a/b with b <= max_den approximating x in [0, 1].
bool rationalize(double x, long max_den, double tol, long& num, long& den) {
  long p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double r = x;
  for (int it = 0; it < 64; ++it) {
    const double a = std::floor(r);
    const long ai = static_cast<long>(a);
    const long p2 = ai * p1 + p0, q2 = ai * q1 + q0;
    if (q2 > max_den) break;
    p0 = p1, q0 = q1, p1 = p2, q1 = q2;
    if (std::abs(x - double(p1) / double(q1)) <= tol) {
      num = p1;
      den = q1;
      return true;
    }
    const double frac = r - a;
    if (frac < 1e-15) break;
    r = 1.0 / frac;
  }
  return false;
}

void hermite(double theta, double H, std::span<const double> y0, std::span<const double> f0,
             std::span<const double> y1, std::span<const double> f1, std::span<double> out) {
  const double t2 = theta * theta, t3 = t2 * theta;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + theta;
  const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = h00 * y0[k] + h10 * H * f0[k] + h01 * y1[k] + h11 * H * f1[k];
}

}  // namespace

HistorySpec HistorySpec::starvation(std::vector<double> p0) {
  HistorySpec h;
  h.p0 = std::move(p0);
  return h;
}

HistorySpec HistorySpec::at_state(State s) {
  HistorySpec h;
  h.kind = HistoryKind::Constant;
  h.constant = std::move(s);
  return h;
}

void HistorySpec::validate(const Model& model) const {
  if (kind == HistoryKind::StarvationJump) {
    const auto p = production_p0(*this, model.num_proteins());
    if (static_cast<int>(p.size()) != model.num_proteins())
      throw std::invalid_argument("history: p0 needs one entry per protein");
    for (double v : p)
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("history: p0 must be finite and >= 0");
  } else {
    if (static_cast<int>(constant.dim()) != model.dim())
      throw std::invalid_argument("history: constant state has the wrong dimension");
  }
}

State history_value(const HistorySpec& spec, const ModelParams& prm, double theta) {
  if (!(theta < 0.0)) throw std::domain_error("history_value: theta must be < 0");
  if (spec.kind == HistoryKind::Constant) return spec.constant;
  const Model m(prm);
  State s;
  s.p.assign(m.num_proteins(), 0.0);
  return s;
}

State initial_state(const HistorySpec& spec, const ModelParams& prm) {
  if (spec.kind == HistoryKind::Constant) return spec.constant;
  const Model m(prm);
  State s;
  s.p = production_p0(spec, m.num_proteins());
  s.R = m.total_resource();
  return s;
}

std::vector<double> Trajectory::component(int c) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = y[i * dim + c];
  return out;
}

void Trajectory::eval(double t, std::span<double> out) const {
  if (times.empty() || t < times.front() || t > times.back())
    throw std::out_of_range("Trajectory::eval: time outside the recorded range");
  auto it = std::upper_bound(times.begin(), times.end(), t);
  std::size_t i = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
  if (i + 1 >= size()) {
    std::copy_n(y.begin() + i * dim, dim, out.begin());
    return;
  }
  const double H = times[i + 1] - times[i];
  const std::size_t d = dim;
  hermite((t - times[i]) / H, H, {y.data() + i * d, d}, {dplus.data() + i * d, d},
          {y.data() + (i + 1) * d, d}, {dminus.data() + (i + 1) * d, d}, out);
}

State Trajectory::at(double t) const {
  std::vector<double> v(dim);
  eval(t, v);
  return State::from_flat(v);
}

StepPlan plan_steps(std::span<const double> delays, const SimOptions& opt) {
  if (delays.empty()) throw std::invalid_argument("plan_steps: no delays");
  if (opt.steps_per_delay < 20) throw std::invalid_argument("steps_per_delay must be >= 20");
  if (!(opt.max_step > 0.0)) throw std::invalid_argument("max_step must be > 0");
  for (double d : delays)
    if (!(d > 0.0) || !std::isfinite(d)) throw std::invalid_argument("simulate: delays must be > 0");
  const double tmax = *std::max_element(delays.begin(), delays.end());
  const double tmin = *std::min_element(delays.begin(), delays.end());

  StepPlan plan;
  constexpr long kMaxDen = 1000;
  std::vector<long> num(delays.size()), den(delays.size());
  long L = 1;
  for (std::size_t i = 0; i < delays.size() && plan.commensurate; ++i) {
    if (!rationalize(delays[i] / tmax, kMaxDen, 1e-9, num[i], den[i])) {
      plan.commensurate = false;
      break;
    }
    L = std::lcm(L, den[i]);
    if (L > kMaxDen) plan.commensurate = false;
  }
  if (plan.commensurate) {
    const double unit = tmax / double(L);
    long s = opt.steps_per_delay;
    s = std::max(s, static_cast<long>(std::ceil(unit / opt.max_step - 1e-9)));
    plan.h = unit / double(s);
    for (std::size_t i = 0; i < delays.size(); ++i) plan.delay_steps.push_back(num[i] * (L / den[i]) * s);
  } else {
    plan.h = std::min(tmin / opt.steps_per_delay, opt.max_step);
    for (double d : delays) plan.delay_steps.push_back(static_cast<long>(std::floor(d / plan.h)));
  }
  return plan;
}

double effective_max_step(const ModelParams& prm, const SimOptions& opt) {
  double cap = opt.max_step;
  if (opt.pulse_fraction > 0.0) {
    const double kappa = std::visit([](const auto& p) { return p.hill.kappa; }, prm);
    double bmax = 0.0;
    if (const auto* s = std::get_if<SingleProteinParams>(&prm)) {
      bmax = s->B;
    } else {
      const auto& b = std::get<ThreeProteinParams>(prm).B;
      bmax = *std::max_element(b.begin(), b.end());
    }
    const double rate = bmax * total_resource_of(prm);
    if (rate > 0.0) cap = std::min(cap, opt.pulse_fraction * kappa / rate);
  }
  return cap;
}

Trajectory simulate(const ModelParams& prm, const HistorySpec& hist, double t_end, const SimOptions& opt) {
  const Model model(prm);
  hist.validate(model);
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw std::invalid_argument("simulate: t_end must be > 0");
  if (opt.record_stride < 1) throw std::invalid_argument("simulate: record_stride must be >= 1");

  const auto delays = model.delays();
  SimOptions eff = opt;
  eff.max_step = effective_max_step(prm, opt);
  const StepPlan plan = plan_steps(delays, eff);
  if (!plan.commensurate)
    log::warning("simulate: delays are not commensurate; delayed values are interpolated off-grid");
  const double h = plan.h;
  const int d = model.dim();
  const std::size_t nd = delays.size();
  const long N = static_cast<long>(std::ceil(t_end / h - 1e-9));
  const long kmax = *std::max_element(plan.delay_steps.begin(), plan.delay_steps.end());
  const long K = kmax + 3;

  std::vector<double> ry(K * d), rfp(K * d), rfm(K * d);
  auto slot = [&](std::vector<double>& v, long n) { return std::span<double>(v.data() + (n % K) * d, d); };

  const State h_state = hist.kind == HistoryKind::Constant ? hist.constant : [&] {
    State s;
    s.p.assign(model.num_proteins(), 0.0);
    return s;
  }();
  const std::vector<double> h_flat = h_state.flat();

  // Value at step j + theta; negative j reads the history (left limit at 0).
  auto lookup = [&](long j, double theta, std::span<double> out) {
    if (j < 0) {
      std::copy(h_flat.begin(), h_flat.end(), out.begin());
      return;
    }
    hermite(theta, h, slot(ry, j), slot(rfp, j), slot(ry, j + 1), slot(rfm, j + 1), out);
  };

  std::vector<std::vector<double>> dv(nd, std::vector<double>(d));
  std::vector<const double*> dptr(nd);
  for (std::size_t i = 0; i < nd; ++i) dptr[i] = dv[i].data();

  auto load_delayed = [&](long n, double c) {
    for (std::size_t i = 0; i < nd; ++i) {
      if (plan.commensurate) {
        lookup(n - plan.delay_steps[i], c, dv[i]);
      } else {
        const double targ = (double(n) + c) * h - delays[i];
        if (targ < 0.0) {
          lookup(-1, 0.0, dv[i]);
        } else {
          long j = static_cast<long>(std::floor(targ / h));
          j = std::min(j, n - 1);
          lookup(j, targ / h - double(j), dv[i]);
        }
      }
    }
  };

  Trajectory traj;
  traj.dim = d;
  traj.step = h;
  const long stride = opt.record_stride;
  long first_rec = -1;
  auto record = [&](long n) {
    const double t = double(n) * h;
    if (t < opt.record_from - 1e-9 * h) return;
    if (first_rec < 0) first_rec = n;
    if ((n - first_rec) % stride != 0 && n != N) return;
    traj.times.push_back(t);
    auto a = slot(ry, n), b = slot(rfp, n), c = slot(rfm, n);
    traj.y.insert(traj.y.end(), a.begin(), a.end());
    traj.dplus.insert(traj.dplus.end(), b.begin(), b.end());
    traj.dminus.insert(traj.dminus.end(), c.begin(), c.end());
  };

  {
    const auto y0 = initial_state(hist, prm).flat();
    std::copy(y0.begin(), y0.end(), slot(ry, 0).begin());
  }
  std::vector<double> k1(d), k2(d), k3(d), k4(d), tmp(d);
  for (long n = 0;; ++n) {
    auto yn = slot(ry, n);
    load_delayed(n, 0.0);
    model.eval(yn, dptr, k1);
    std::copy(k1.begin(), k1.end(), slot(rfp, n).begin());
    bool jump = false;
    if (plan.commensurate && n > 0)
      for (long k : plan.delay_steps) jump = jump || k == n;
    if (jump) {
      load_delayed(n - 1, 1.0);
      model.eval(yn, dptr, slot(rfm, n));
    } else {
      std::copy(k1.begin(), k1.end(), slot(rfm, n).begin());
    }
    record(n);
    if (n == N) break;

    load_delayed(n, 0.5);
    for (int k = 0; k < d; ++k) tmp[k] = yn[k] + 0.5 * h * k1[k];
    model.eval(tmp, dptr, k2);
    for (int k = 0; k < d; ++k) tmp[k] = yn[k] + 0.5 * h * k2[k];
    model.eval(tmp, dptr, k3);
    load_delayed(n, 1.0);
    for (int k = 0; k < d; ++k) tmp[k] = yn[k] + h * k3[k];
    model.eval(tmp, dptr, k4);
    auto next = slot(ry, n + 1);
    for (int k = 0; k < d; ++k) {
      next[k] = yn[k] + h / 6.0 * (k1[k] + 2 * k2[k] + 2 * k3[k] + k4[k]);
      if (!std::isfinite(next[k])) {
        std::ostringstream msg;
        msg << "simulate: state became non-finite at t = " << double(n + 1) * h;
        throw IntegrationError(msg.str());
      }
    }
  }
  return traj;
}

std::vector<double> resource_residual(const Trajectory& traj, const ModelParams& prm) {
  const Model model(prm);
  const auto delays = model.delays();
  const std::size_t n = traj.size(), nd = delays.size();
  std::vector<double> out(n, std::numeric_limits<double>::quiet_NaN());
  if (n < 2) return out;
  const double A = std::visit([](const auto& p) { return p.A; }, prm);
  const double RT = model.total_resource();
  const int d = traj.dim;

  std::vector<double> mid(d), end(d);
  auto simpson = [&](std::size_t slot, double a, double b) {
    traj.eval(a, mid);
    const double fa = model.sequestration_flux(slot, mid);
    traj.eval(b, end);
    const double fb = model.sequestration_flux(slot, end);
    traj.eval(0.5 * (a + b), mid);
    return (b - a) / 6.0 * (fa + 4.0 * model.sequestration_flux(slot, mid) + fb);
  };

  // prefix[s][i] = integral of mu_s from times[0] to times[i].
  std::vector<std::vector<double>> prefix(nd, std::vector<double>(n, 0.0));
  for (std::size_t s = 0; s < nd; ++s)
    for (std::size_t i = 1; i < n; ++i)
      prefix[s][i] = prefix[s][i - 1] + simpson(s, traj.times[i - 1], traj.times[i]);

  auto integral_to = [&](std::size_t s, double a) {
    auto it = std::upper_bound(traj.times.begin(), traj.times.end(), a);
    std::size_t j = static_cast<std::size_t>(it - traj.times.begin()) - 1;
    const double tj = traj.times[j];
    const double snap = 1e-9 * traj.step;
    if (a - tj <= snap) return prefix[s][j];
    if (j + 1 < n && traj.times[j + 1] - a <= snap) return prefix[s][j + 1];
    return prefix[s][j] + simpson(s, tj, a);
  };

  const double t0 = std::max(0.0, traj.times.front());
  const double tmax = model.max_delay();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = traj.times[i];
    if (t - tmax < t0 - 1e-9 * traj.step) continue;
    double seq = 0.0;
    for (std::size_t s = 0; s < nd; ++s)
      seq += prefix[s][i] - integral_to(s, std::max(t0, t - delays[s]));
    out[i] = RT - traj.y[i * d + d - 1] - A * seq;
  }
  return out;
}

void write_csv(std::ostream& os, const Trajectory& traj) {
  os << "t";
  if (traj.dim == 2) {
    os << ",p1";
  } else {
    for (int k = 1; k < traj.dim; ++k) os << ",p" << k;
  }
  os << ",R\n";
  std::vector<double> row(traj.dim + 1);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    row[0] = traj.times[i];
    std::copy_n(traj.y.begin() + i * traj.dim, traj.dim, row.begin() + 1);
    io::write_row(os, row);
  }
}

}  // namespace metosc
