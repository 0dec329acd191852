#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "metosc/bvp.hpp"
#include "metosc/features.hpp"
#include "metosc/fitting.hpp"
#include "metosc/io.hpp"
#include "metosc/spectral.hpp"

#ifndef METOSC_VERSION
#define METOSC_VERSION "0.0.0"
#endif

namespace metosc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Option blocks. Each serializes to the canonical config that is hashed into
// the output sidecars, so run-only settings (jobs, output dir, resume) stay
// out of them.

struct ModelOptions {
  std::string model = "single";
  double tau = 10.0;
  double rt = 20.0;
  double kappa = 0.5;
  double a = 1.0;
  double b = 2.0;
  double d = 10.0;
  int n = 2;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelOptions, model, tau, rt, kappa, a, b, d, n)

struct SimulateOptions {
  ModelOptions model;
  double p0 = 10.0;
  double delays = 100.0;
  int steps_per_delay = 100;
  double max_step = 0.005;
  int stride = 1;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SimulateOptions, model, p0, delays, steps_per_delay, max_step, stride)

struct GridOptions {
  ModelOptions model;
  std::string eq = "top";
  std::vector<double> tau_range{0.0, 20.0};
  std::vector<double> rt_range{0.0, 60.0};
  int n_tau = 80;
  int n_rt = 80;
  int elements = 2;
  int order = 16;
  bool count_only = false;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GridOptions, model, eq, tau_range, rt_range, n_tau, n_rt, elements, order,
                                   count_only)

struct FeatureOptions {
  ModelOptions model;
  std::string axes = "tau-rt";
  std::vector<double> axis1_range{0.0, 50.0};
  std::vector<double> rt_range{0.0, 50.0};
  int n1 = 40;
  int n_rt = 40;
  double p0 = 10.0;
  double horizon_delays = 1000.0;
  double window_delays = 100.0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FeatureOptions, model, axes, axis1_range, rt_range, n1, n_rt, p0,
                                   horizon_delays, window_delays)

struct BvpCliOptions {
  ModelOptions model;
  double p0 = 10.0;
  double horizon_delays = 1000.0;
  int elements = 256;
  int order = 16;
  double tol = 1e-9;
  int max_iters = 50;
  std::string phase = "anchor";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BvpCliOptions, model, p0, horizon_delays, elements, order, tol, max_iters,
                                   phase)

struct FitOptions {
  std::string grid;
  std::string criterion = "modulus";
  int degree = 1;
  double tau_min = 0.0;
  double tau_max = 1e300;
  std::string output = "boundary.json";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FitOptions, grid, criterion, degree, tau_min, tau_max, output)

struct ReproduceOptions {
  std::string id;
  int res = 80;
  double horizon_delays = 1000.0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ReproduceOptions, id, res, horizon_delays)

struct Run {
  fs::path dir;
  unsigned jobs = 1;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

// ---------------------------------------------------------------------------
// Model parameters

ModelParams build_params(const ModelOptions& m) {
  require(m.model == "single" || m.model == "three", "model: expected single or three, got '" + m.model + "'");
  HillParams h;
  h.kappa = m.kappa;
  h.n = m.n;
  ModelParams prm;
  if (m.model == "single") {
    SingleProteinParams p;
    p.hill = h;
    p.A = m.a;
    p.B = m.b;
    p.D = m.d;
    p.tau = m.tau;
    p.R_T = m.rt;
    prm = p;
  } else {
    ThreeProteinParams p;
    p.hill = h;
    p.A = m.a;
    p.B = {m.b, m.b, m.b};
    p.D = {m.d, m.d, m.d};
    p.set_equal_delays(m.tau);
    p.R_T = m.rt;
    prm = p;
  }
  try {
    std::visit([](const auto& p) { p.validate(); }, prm);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model parameters: ") + e.what());
  }
  return prm;
}

json params_json(const ModelParams& prm) {
  if (const auto* s = std::get_if<SingleProteinParams>(&prm)) {
    return {{"model", "single"}, {"kappa", s->hill.kappa}, {"n", s->hill.n}, {"a", s->A},
            {"b", s->B},         {"d", s->D},              {"tau", s->tau},  {"r_t", s->R_T}};
  }
  const auto& t = std::get<ThreeProteinParams>(prm);
  return {{"model", "three"}, {"kappa", t.hill.kappa}, {"n", t.hill.n}, {"a", t.A},
          {"b", t.B},         {"d", t.D},              {"tau", t.tau},  {"r_t", t.R_T}};
}

json state_json(const State& s) { return {{"p", s.p}, {"r", s.R}}; }

int num_proteins(const ModelOptions& m) { return m.model == "single" ? 1 : 3; }

Axis axis_from(const std::string& key, const std::vector<double>& range, int count) {
  require(range.size() == 2, key + ": expected two values");
  require(std::isfinite(range[0]) && std::isfinite(range[1]) && range[0] < range[1],
          key + ": expected lo < hi");
  require(count >= 2, key + ": need at least 2 points");
  return cell_centers(key, range[0], range[1], count);
}

// ---------------------------------------------------------------------------
// Outputs and sidecars

fs::path meta_path(const fs::path& file) { return fs::path(file.string() + ".meta.json"); }

std::string config_hash(const std::string& command, const json& config) {
  return io::fnv1a_hex(json{{"command", command}, {"config", config}}.dump());
}

void write_meta(const fs::path& file, const std::string& command, const json& config) {
  json m;
  m["tool"] = "metosc";
  m["version"] = METOSC_VERSION;
  m["command"] = command;
  m["config"] = config;
  m["config_hash"] = config_hash(command, config);
  io::write_file(meta_path(file), m.dump(2) + "\n");
}

void write_output(const fs::path& file, const std::string& text, const std::string& command,
                  const json& config) {
  io::write_file(file, text);
  write_meta(file, command, config);
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ConfigError(where + ": not a number: '" + s + "'");
  return v;
}

/// Data rows of a CSV with the given header.
std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header) {
  std::istringstream is(read_text(path));
  std::string line;
  if (!std::getline(is, line) || line != header)
    throw ConfigError(path.string() + ": expected header '" + header + "'");
  const std::size_t cols = split(header, ',').size();
  std::vector<std::vector<std::string>> rows;
  for (int n = 2; std::getline(is, line); ++n) {
    auto f = split(line, ',');
    if (f.size() != cols) throw ConfigError(path.string() + ": line " + std::to_string(n) + ": wrong field count");
    rows.push_back(std::move(f));
  }
  return rows;
}

/// Rows of a previous run that can be kept, as a multiple of row_len. The
/// file is truncated to them. Zero unless the sidecar hash matches.
std::size_t resumable_rows(const Run& run, const fs::path& csv, const std::string& command, const json& config,
                           const std::string& header, std::size_t row_len) {
  if (!fs::exists(csv) || !fs::exists(meta_path(csv))) return 0;
  json meta;
  try {
    meta = json::parse(read_text(meta_path(csv)));
  } catch (const json::exception&) {
    return 0;
  }
  if (meta.value("config_hash", "") != config_hash(command, config)) {
    *run.err << "resume: configuration changed, starting over\n";
    return 0;
  }
  const std::string text = read_text(csv);
  if (text.compare(0, header.size() + 1, header + "\n") != 0) return 0;
  std::size_t pos = header.size() + 1, lines = 0;
  std::vector<std::size_t> ends;
  for (std::size_t i = pos; i < text.size(); ++i)
    if (text[i] == '\n') ends.push_back(i + 1), ++lines;
  const std::size_t keep = lines / row_len;
  const std::size_t cut = keep == 0 ? pos : ends[keep * row_len - 1];
  if (cut != text.size()) io::write_file(csv, text.substr(0, cut));
  return keep;
}

std::string fmt(double v) { return io::format_double(v); }

// ---------------------------------------------------------------------------
// Commands

int cmd_equilibria(const Run& run, const ModelOptions& m) {
  const auto prm = build_params(m);
  const auto set = equilibria(prm);
  json pts = json::array();
  for (const auto& e : set.points) {
    pts.push_back({{"kind", to_string(e.kind)},
                   {"degenerate", e.degenerate},
                   {"state", state_json(e.state)},
                   {"residual", equilibrium_residual(e.state, prm)}});
    *run.out << to_string(e.kind) << ":";
    for (double p : e.state.p) *run.out << ' ' << fmt(p);
    *run.out << ' ' << fmt(e.state.R) << '\n';
  }
  json j;
  j["params"] = params_json(prm);
  j["equilibria"] = pts;
  j["incomplete"] = set.incomplete;
  write_output(run.dir / "equilibria.json", j.dump(2) + "\n", "equilibria", m);
  if (set.incomplete) {
    *run.err << "equilibria: root search could not certify that all equilibria were found\n";
    return kIncomplete;
  }
  return kOk;
}

int cmd_simulate(const Run& run, const SimulateOptions& o) {
  const auto prm = build_params(o.model);
  require(o.p0 >= 0.0, "p0: must be nonnegative");
  require(o.delays > 0.0, "delays: must be positive");
  require(o.steps_per_delay >= 1, "steps-per-delay: must be >= 1");
  require(o.max_step > 0.0, "max-step: must be positive");
  require(o.stride >= 1, "stride: must be >= 1");
  SimOptions sim;
  sim.steps_per_delay = o.steps_per_delay;
  sim.max_step = o.max_step;
  sim.record_stride = o.stride;
  const double tau = delay_of(prm), t_end = o.delays * tau;
  Trajectory tr;
  try {
    tr = simulate(prm, HistorySpec::starvation(std::vector<double>(num_proteins(o.model), o.p0)), t_end, sim);
  } catch (const IntegrationError& e) {
    *run.err << "simulate: " << e.what() << '\n';
    return kIncomplete;
  }
  std::ostringstream csv;
  write_csv(csv, tr);
  const json cfg = o;
  write_output(run.dir / "trajectory.csv", csv.str(), "simulate", cfg);

  // The quadrature behind the residual needs every integrator step.
  json worst = nullptr;
  if (o.stride == 1) {
    double w = 0.0;
    for (double r : resource_residual(tr, prm))
      if (std::isfinite(r)) w = std::max(w, std::abs(r));
    worst = w;
  }
  // Amplitude over the last tenth of the run.
  const double amp = amplitude_feature(tr, 0.9 * t_end, t_end);
  const State last = tr.state(tr.size() - 1);
  json dist = json::object();
  for (const auto& e : equilibria(prm).points) {
    double d = std::abs(e.state.R - last.R);
    for (std::size_t i = 0; i < last.p.size(); ++i) d = std::max(d, std::abs(e.state.p[i] - last.p[i]));
    dist[to_string(e.kind)] = d;
  }
  json j;
  j["params"] = params_json(prm);
  j["t_end"] = t_end;
  j["step"] = tr.step;
  j["samples"] = tr.size();
  j["final_state"] = state_json(last);
  j["max_resource_residual"] = worst;
  j["amplitude_last_tenth"] = amp;
  j["distance_to_equilibria"] = dist;
  write_output(run.dir / "simulate.json", j.dump(2) + "\n", "simulate", cfg);
  *run.out << "t_end " << fmt(t_end) << ", amplitude " << fmt(amp) << ", resource residual " << worst.dump()
           << '\n';
  return kOk;
}

StabilityGridSpec stability_spec(const GridOptions& o) {
  require(o.eq == "top" || o.eq == "middle", "eq: expected top or middle, got '" + o.eq + "'");
  require(o.elements >= 1, "elements: must be >= 1");
  require(o.order >= 4, "order: must be >= 4");
  StabilityGridSpec s;
  s.base = build_params(o.model);
  s.tau = axis_from("tau-range", o.tau_range, o.n_tau);
  s.rt = axis_from("rt-range", o.rt_range, o.n_rt);
  require(s.tau.values.front() > 0.0, "tau-range: delays must be positive");
  s.kind = o.eq == "top" ? EquilibriumKind::Top : EquilibriumKind::Middle;
  s.mesh = {o.elements, o.order};
  s.count_only = o.count_only;
  return s;
}

const std::string kStabilityHeader = "tau,R_T,re_lambda,im_lambda,abs_lambda,n_equilibria,status";
const std::string kFeatureHeader = "axis1,axis2,feature,status";

std::string stability_row(const StabilityCell& c) {
  const bool ok = c.status == CellStatus::Ok;
  const std::string status = ok && c.incomplete ? "incomplete" : to_string(c.status);
  std::ostringstream os;
  os << fmt(c.tau) << ',' << fmt(c.R_T) << ',' << fmt(ok ? c.dominant.real() : kNaN) << ','
     << fmt(ok ? c.dominant.imag() : kNaN) << ',' << fmt(ok ? c.modulus : kNaN) << ',' << c.n_equilibria << ','
     << status << '\n';
  return os.str();
}

int cmd_stability_grid(const Run& run, const GridOptions& o, bool resume) {
  const auto spec = stability_spec(o);
  const json cfg = o;
  const fs::path csv = run.dir / "stability.csv";
  const std::size_t nt = spec.tau.size(), nr = spec.rt.size();
  const std::size_t done =
      resume ? resumable_rows(run, csv, "stability-grid", cfg, kStabilityHeader, nt) : std::size_t{0};
  if (done == 0) io::write_file(csv, kStabilityHeader + "\n");
  write_meta(csv, "stability-grid", cfg);
  {
    std::ofstream os(csv, std::ios::app | std::ios::binary);
    // One R_T row at a time so an interrupted run can be resumed.
    for (std::size_t j = done; j < nr; ++j) {
      auto row = spec;
      row.rt.values = {spec.rt.values[j]};
      for (const auto& c : stability_grid(row, run.jobs).cells) os << stability_row(c);
      os.flush();
      if (!os) throw std::runtime_error("cannot write " + csv.string());
    }
  }

  const auto rows = read_csv(csv, kStabilityHeader);
  if (rows.size() != nt * nr) throw std::runtime_error(csv.string() + ": unexpected row count");
  std::vector<double> heat(rows.size());
  std::size_t stable = 0, absent = 0, bad = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const double mod = parse_double(r[4], "abs_lambda");
    heat[k] = o.count_only ? parse_double(r[5], "n_equilibria") : mod;
    if (r[6] == "absent") {
      ++absent;
      if (o.count_only) heat[k] = kNaN;
    } else if (r[6] == "failed" || r[6] == "incomplete") {
      ++bad;
    } else if (mod < 1.0) {
      ++stable;
    }
  }
  const fs::path ppm = run.dir / "stability.ppm";
  io::write_heatmap_ppm(ppm, heat, nt, nr, 0.0, o.count_only ? 3.0 : 2.0);
  write_meta(ppm, "stability-grid", cfg);
  *run.out << nt * nr << " cells: " << stable << " with |lambda| < 1, " << absent << " absent, " << bad
           << " failed or incomplete\n";
  if (bad > 0) {
    *run.err << "stability-grid: " << bad << " cells failed or are incomplete\n";
    return kIncomplete;
  }
  return kOk;
}

int cmd_feature_grid(const Run& run, const FeatureOptions& o, bool resume) {
  require(o.axes == "tau-rt" || o.axes == "p0-rt", "axes: expected tau-rt or p0-rt, got '" + o.axes + "'");
  require(o.p0 >= 0.0, "p0: must be nonnegative");
  require(o.horizon_delays > 0.0, "horizon-delays: must be positive");
  require(o.window_delays > 0.0 && o.window_delays < o.horizon_delays,
          "window-delays: must be positive and below horizon-delays");
  FeatureGridSpec spec;
  spec.base = build_params(o.model);
  spec.axes = o.axes == "tau-rt" ? FeatureAxes::Tau_RT : FeatureAxes::P0_RT;
  spec.axis1 = axis_from("axis1-range", o.axis1_range, o.n1);
  spec.rt = axis_from("rt-range", o.rt_range, o.n_rt);
  if (spec.axes == FeatureAxes::Tau_RT) require(spec.axis1.values.front() > 0.0, "axis1-range: delays must be positive");
  if (spec.axes == FeatureAxes::P0_RT) require(spec.axis1.values.front() >= 0.0, "axis1-range: p0 must be nonnegative");
  spec.p0 = o.p0;
  spec.horizon_delays = o.horizon_delays;
  spec.window_delays = o.window_delays;

  const json cfg = o;
  const fs::path csv = run.dir / "features.csv";
  const std::size_t n1 = spec.axis1.size(), nr = spec.rt.size();
  const std::size_t done =
      resume ? resumable_rows(run, csv, "feature-grid", cfg, kFeatureHeader, n1) : std::size_t{0};
  if (done == 0) io::write_file(csv, kFeatureHeader + "\n");
  write_meta(csv, "feature-grid", cfg);
  {
    std::ofstream os(csv, std::ios::app | std::ios::binary);
    for (std::size_t j = done; j < nr; ++j) {
      auto row = spec;
      row.rt.values = {spec.rt.values[j]};
      for (const auto& c : feature_grid(row, run.jobs).cells) {
        const bool ok = c.status == FeatureStatus::Ok;
        os << fmt(c.a1) << ',' << fmt(c.R_T) << ',' << fmt(ok ? c.value : kNaN) << ',' << to_string(c.status)
           << '\n';
      }
      os.flush();
      if (!os) throw std::runtime_error("cannot write " + csv.string());
    }
  }

  const auto rows = read_csv(csv, kFeatureHeader);
  if (rows.size() != n1 * nr) throw std::runtime_error(csv.string() + ": unexpected row count");
  std::vector<double> heat(rows.size());
  double hi = 0.0;
  std::size_t failed = 0, oscillating = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    heat[k] = parse_double(rows[k][2], "feature");
    if (rows[k][3] != "ok") ++failed;
    if (std::isfinite(heat[k])) hi = std::max(hi, heat[k]);
    if (heat[k] > 1e-2) ++oscillating;
  }
  const fs::path ppm = run.dir / "features.ppm";
  io::write_heatmap_ppm(ppm, heat, n1, nr, 0.0, hi > 0.0 ? hi : 1.0);
  write_meta(ppm, "feature-grid", cfg);
  *run.out << n1 * nr << " cells: " << oscillating << " with amplitude > 1e-2, " << failed << " failed\n";
  if (failed > 0) {
    *run.err << "feature-grid: " << failed << " cells failed\n";
    return kIncomplete;
  }
  return kOk;
}

int cmd_bvp(const Run& run, const BvpCliOptions& o) {
  const auto prm = build_params(o.model);
  require(o.phase == "anchor" || o.phase == "literal", "phase: expected anchor or literal, got '" + o.phase + "'");
  require(o.p0 >= 0.0, "p0: must be nonnegative");
  require(o.horizon_delays >= 10.0, "horizon-delays: must be >= 10");
  require(o.order >= 8, "order: must be >= 8");
  require(o.elements >= 1, "elements: must be >= 1");
  require(o.tol > 0.0, "tol: must be positive");
  require(o.max_iters >= 1, "max-iters: must be >= 1");
  BvpOptions opt;
  opt.mesh = {o.elements, o.order};
  opt.tol = o.tol;
  opt.max_iters = o.max_iters;
  opt.phase = o.phase == "anchor" ? PhaseCondition::Anchor : PhaseCondition::Literal;

  const auto guess = simulation_guess(prm, o.p0, o.horizon_delays);
  PeriodicSolution sol;
  try {
    sol = solve_periodic(prm, guess.trajectory, guess.t_start, guess.T_guess, opt);
  } catch (const SingularJacobianError& e) {
    *run.err << "bvp: " << e.what() << '\n';
    return kNotConverged;
  }
  const json cfg = o;
  std::ostringstream js, cs;
  write_json(js, sol);
  write_csv(cs, sol);
  write_output(run.dir / "bvp.json", js.str(), "bvp", cfg);
  write_output(run.dir / "bvp.csv", cs.str(), "bvp", cfg);

  const double tau = delay_of(prm);
  json j;
  j["params"] = params_json(prm);
  j["converged"] = sol.converged;
  j["degenerate"] = sol.degenerate;
  j["period"] = sol.period;
  j["period_guess"] = guess.T_guess;
  j["relative_period_offset"] = std::abs(sol.period - tau) / tau;
  j["residual_norm"] = sol.residual_norm;
  j["independent_residual"] = bvp_residual(sol, prm);
  j["unfolding"] = sol.unfolding;
  j["iterations"] = sol.iterations;
  j["dwell_fraction"] = sol.dwell_fraction(0.05);
  if (o.model.model == "three") {
    const auto& tr = guess.trajectory;
    try {
      const auto off = peak_phase_offsets(tr, tr.times.front(), tr.times.back());
      j["phase_offsets"] = {{"period", off.period}, {"offsets", off.offsets}};
    } catch (const NotPeriodicError& e) {
      j["phase_offsets"] = nullptr;
      *run.err << "bvp: phase offsets: " << e.what() << '\n';
    }
  }
  write_output(run.dir / "bvp_summary.json", j.dump(2) + "\n", "bvp", cfg);
  *run.out << "T " << fmt(sol.period) << ", residual " << fmt(sol.residual_norm) << ", iterations "
           << sol.iterations << (sol.converged ? "" : " (not converged)") << '\n';
  if (!sol.converged) {
    *run.err << "bvp: Newton did not converge\n";
    return kNotConverged;
  }
  return kOk;
}

StabilityGrid read_stability_grid(const fs::path& path) {
  const auto rows = read_csv(path, kStabilityHeader);
  require(!rows.empty(), path.string() + ": no cells");
  StabilityGrid g;
  g.spec.tau.name = "tau";
  g.spec.rt.name = "R_T";
  const std::string where = path.string();
  for (const auto& r : rows) {
    StabilityCell c;
    c.tau = parse_double(r[0], where);
    c.R_T = parse_double(r[1], where);
    c.dominant = {parse_double(r[2], where), parse_double(r[3], where)};
    c.modulus = parse_double(r[4], where);
    c.n_equilibria = static_cast<int>(parse_double(r[5], where));
    if (r[6] == "ok" || r[6] == "incomplete") {
      c.status = CellStatus::Ok;
      c.incomplete = r[6] == "incomplete";
    } else if (r[6] == "absent") {
      c.status = CellStatus::Absent;
    } else if (r[6] == "failed") {
      c.status = CellStatus::Failed;
    } else {
      throw ConfigError(where + ": unknown status '" + r[6] + "'");
    }
    g.cells.push_back(c);
  }
  const double rt0 = g.cells.front().R_T;
  std::size_t nt = 0;
  while (nt < g.cells.size() && g.cells[nt].R_T == rt0) g.spec.tau.values.push_back(g.cells[nt++].tau);
  require(g.cells.size() % nt == 0, where + ": rows do not form a tau x R_T grid");
  for (std::size_t k = 0; k < g.cells.size(); k += nt) g.spec.rt.values.push_back(g.cells[k].R_T);
  for (std::size_t k = 0; k < g.cells.size(); ++k)
    require(g.cells[k].tau == g.spec.tau.values[k % nt] && g.cells[k].R_T == g.spec.rt.values[k / nt],
            where + ": rows are not in tau-fastest order");
  try {
    g.spec.tau.validate();
    g.spec.rt.validate();
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return g;
}

int cmd_boundary_fit(const Run& run, const FitOptions& o) {
  require(!o.grid.empty(), "grid: path to a stability-grid CSV is required");
  require(o.criterion == "modulus" || o.criterion == "count",
          "criterion: expected modulus or count, got '" + o.criterion + "'");
  require(o.degree >= 0 && o.degree <= 6, "degree: expected 0 to 6");
  require(o.tau_min <= o.tau_max, "tau-min: must not exceed tau-max");
  require(!o.output.empty() && fs::path(o.output).filename() == o.output, "output: expected a file name");
  const auto grid = read_stability_grid(o.grid);
  const auto crit = o.criterion == "modulus" ? BoundaryCriterion::ModulusCrossing : BoundaryCriterion::CountChange;
  const auto pts = restrict_domain(extract_boundary(grid, crit), o.tau_min, o.tau_max);
  BoundaryCurve curve;
  try {
    curve = fit_polynomial(pts, o.degree);
  } catch (const std::invalid_argument& e) {
    *run.err << "boundary-fit: " << pts.size() << " boundary points: " << e.what() << '\n';
    return kIncomplete;
  }
  std::ostringstream os;
  write_json(os, curve);
  json cfg = o;
  // The grid is identified by content, not by where it happens to live.
  cfg["grid"] = io::fnv1a_hex(read_text(o.grid));
  write_output(run.dir / o.output, os.str(), "boundary-fit", cfg);
  *run.out << "coefficients";
  for (double c : curve.coeffs) *run.out << ' ' << fmt(c);
  *run.out << ", r2 " << fmt(curve.r2) << ", " << pts.size() << " points\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// Figure recipes

ModelOptions model_at(const std::string& model, double tau, double rt) {
  ModelOptions m;
  m.model = model;
  m.tau = tau;
  m.rt = rt;
  return m;
}

GridOptions grid_at(const std::string& model, const std::string& eq, std::vector<double> tau_range,
                    std::vector<double> rt_range, int res) {
  GridOptions g;
  g.model = model_at(model, 1.0, 1.0);
  g.eq = eq;
  g.tau_range = std::move(tau_range);
  g.rt_range = std::move(rt_range);
  g.n_tau = g.n_rt = res;
  return g;
}

FitOptions fit_of(const fs::path& grid, const std::string& criterion, int degree, double tau_min, double tau_max,
                  const std::string& output) {
  FitOptions f;
  f.grid = grid.string();
  f.criterion = criterion;
  f.degree = degree;
  f.tau_min = tau_min;
  f.tau_max = tau_max;
  f.output = output;
  return f;
}

Run in_dir(const Run& run, const fs::path& sub) {
  Run r = run;
  r.dir = run.dir / sub;
  return r;
}

// Count-change points of the single-protein grid against the closed-form
// saddle-node curve.
int saddle_node_single(const Run& run, const GridOptions& g) {
  const fs::path csv = run.dir / "stability.csv";
  const auto grid = read_stability_grid(csv);
  const auto prm = std::get<SingleProteinParams>(build_params(g.model));
  double worst = 0.0;
  json pts = json::array();
  for (const auto& p : extract_boundary(grid, BoundaryCriterion::CountChange)) {
    const double exact = saddle_node_boundary_single(p.tau, prm);
    worst = std::max(worst, std::abs(p.R_T - exact));
    pts.push_back({{"tau", p.tau}, {"R_T", p.R_T}, {"closed_form", exact}});
  }
  json j;
  j["points"] = pts;
  j["max_deviation"] = worst;
  j["cell_height"] = (g.rt_range[1] - g.rt_range[0]) / g.n_rt;
  json cfg = g;
  cfg["grid"] = io::fnv1a_hex(read_text(csv));
  write_output(run.dir / "saddle_node.json", j.dump(2) + "\n", "saddle-node", cfg);
  *run.out << "saddle-node: max deviation from the closed form " << fmt(worst) << '\n';
  return kOk;
}

FeatureOptions features_at(const std::string& model, const std::string& axes, std::vector<double> a1,
                           std::vector<double> rt, int res, const ReproduceOptions& o) {
  FeatureOptions f;
  f.model = model_at(model, 10.0, 1.0);
  f.axes = axes;
  f.axis1_range = std::move(a1);
  f.rt_range = std::move(rt);
  f.n1 = f.n_rt = res;
  f.horizon_delays = o.horizon_delays;
  f.window_delays = o.horizon_delays / 10.0;
  return f;
}

BvpCliOptions bvp_at(const std::string& model, double tau, double rt, const ReproduceOptions& o) {
  BvpCliOptions b;
  b.model = model_at(model, tau, rt);
  b.horizon_delays = o.horizon_delays;
  return b;
}

SimulateOptions response_at(double tau, double rt, const ReproduceOptions& o) {
  SimulateOptions s;
  s.model = model_at("single", tau, rt);
  s.delays = o.horizon_delays;
  s.stride = 20;
  return s;
}

using Recipe = std::function<int(const Run&, const ReproduceOptions&)>;

struct Figure {
  std::string description;
  Recipe recipe;
};

using FigureTable = std::vector<std::pair<std::string, Figure>>;

const FigureTable& figures() {
  static const FigureTable table = [] {
    FigureTable t;
    const auto add = [&t](std::string id, std::string description, Recipe recipe) {
      t.push_back({std::move(id), {std::move(description), std::move(recipe)}});
    };
    add("fig1", "single protein, middle-equilibrium stability over (tau, R_T) in [0,50]^2",
        [](const Run& r, const ReproduceOptions& o) {
          return cmd_stability_grid(r, grid_at("single", "middle", {0, 50}, {0, 50}, o.res), false);
        });
    add("fig2", "single protein, top-equilibrium stability over [0,50]^2 with the Hopf line fit",
        [](const Run& r, const ReproduceOptions& o) {
          const int c = cmd_stability_grid(r, grid_at("single", "top", {0, 50}, {0, 50}, o.res), false);
          return std::max(c, cmd_boundary_fit(r, fit_of(r.dir / "stability.csv", "modulus", 1, 0.75,
                                                        1e300, "hopf.json")));
        });
    add("fig3", "single protein, Hopf and saddle-node boundaries on [0,20] x [0,60]",
        [](const Run& r, const ReproduceOptions& o) {
          const auto g = grid_at("single", "top", {0, 20}, {0, 60}, o.res);
          int c = cmd_stability_grid(r, g, false);
          c = std::max(c, cmd_boundary_fit(r, fit_of(r.dir / "stability.csv", "modulus", 1, 0.75, 1e300,
                                                     "hopf.json")));
          return std::max(c, saddle_node_single(r, g));
        });
    add("fig4a", "single protein, amplitude feature over (p0, R_T) in [0,10] x [0,50] at tau = 10",
        [](const Run& r, const ReproduceOptions& o) {
          return cmd_feature_grid(r, features_at("single", "p0-rt", {0, 10}, {0, 50}, o.res, o), false);
        });
    add("fig4b", "single protein, amplitude feature over (tau, R_T) in [0,50]^2, p0 = 10",
        [](const Run& r, const ReproduceOptions& o) {
          return cmd_feature_grid(r, features_at("single", "tau-rt", {0, 50}, {0, 50}, o.res, o), false);
        });
    const auto orbit = [](std::string model, double tau, double rt) -> Recipe {
      return [=](const Run& r, const ReproduceOptions& o) { return cmd_bvp(r, bvp_at(model, tau, rt, o)); };
    };
    add("fig5", "single protein periodic solution at (12, 50)", orbit("single", 12, 50));
    add("fig6", "single protein periodic solution at (10, 20)", orbit("single", 10, 20));
    add("fig7", "single protein periodic solution at (45, 15)", orbit("single", 45, 15));
    add("fig8", "single protein response at (45, 5), approaching the trivial equilibrium",
        [](const Run& r, const ReproduceOptions& o) { return cmd_simulate(r, response_at(45, 5, o)); });
    add("fig9", "single protein response at (5, 50), approaching the top equilibrium",
        [](const Run& r, const ReproduceOptions& o) { return cmd_simulate(r, response_at(5, 50, o)); });
    add("fig10", "three proteins, middle-equilibrium stability over [0,50] x [0,100]",
        [](const Run& r, const ReproduceOptions& o) {
          return cmd_stability_grid(r, grid_at("three", "middle", {0, 50}, {0, 100}, o.res), false);
        });
    add("fig11",
        "three proteins, top-equilibrium stability over [0,50] x [0,100] with the saddle-node cubic; "
        "Hopf line from a [0,8] x [0,100] grid in hopf/",
        [](const Run& r, const ReproduceOptions& o) {
          int c = cmd_stability_grid(r, grid_at("three", "top", {0, 50}, {0, 100}, o.res), false);
          c = std::max(c, cmd_boundary_fit(r, fit_of(r.dir / "stability.csv", "count", 3, 0.625, 1e300,
                                                     "saddle_node.json")));
          const Run h = in_dir(r, "hopf");
          c = std::max(c, cmd_stability_grid(h, grid_at("three", "top", {0, 8}, {0, 100}, o.res), false));
          return std::max(c, cmd_boundary_fit(h, fit_of(h.dir / "stability.csv", "modulus", 1, 0.75,
                                                        1e300, "hopf.json")));
        });
    add("fig12", "three proteins, amplitude feature over (tau, R_T) in [0,50] x [0,100], p0 = 10",
        [](const Run& r, const ReproduceOptions& o) {
          return cmd_feature_grid(r, features_at("three", "tau-rt", {0, 50}, {0, 100}, o.res, o), false);
        });
    add("fig13", "three-protein periodic solutions at (5.7, 100), (25, 50) and (25, 11.8) with phase offsets",
        [](const Run& r, const ReproduceOptions& o) {
          int c = cmd_bvp(in_dir(r, "tau5.7_rt100"), bvp_at("three", 5.7, 100, o));
          c = std::max(c, cmd_bvp(in_dir(r, "tau25_rt50"), bvp_at("three", 25, 50, o)));
          return std::max(c, cmd_bvp(in_dir(r, "tau25_rt11.8"), bvp_at("three", 25, 11.8, o)));
        });
    return t;
  }();
  return table;
}

int cmd_reproduce(const Run& run, const ReproduceOptions& o) {
  if (o.id == "list") {
    for (const auto& [id, fig] : figures()) *run.out << id << "  " << fig.description << '\n';
    return kOk;
  }
  const auto it = std::find_if(figures().begin(), figures().end(), [&](const auto& f) { return f.first == o.id; });
  require(it != figures().end(), "id: unknown figure '" + o.id + "' (try 'reproduce list')");
  require(o.res >= 2, "res: must be >= 2");
  require(o.horizon_delays >= 10.0, "horizon-delays: must be >= 10");
  *run.out << o.id << ": " << it->second.description << '\n';
  return it->second.recipe(in_dir(run, o.id), o);
}

// ---------------------------------------------------------------------------
// Argument parsing

void add_model_options(CLI::App* sc, ModelOptions& m) {
  sc->add_option("--model", m.model, "single or three")->capture_default_str();
  sc->add_option("--tau", m.tau, "Delay (every protein)")->capture_default_str();
  sc->add_option("--rt", m.rt, "Total resource R_T")->capture_default_str();
  sc->add_option("--kappa", m.kappa, "Hill threshold")->capture_default_str();
  sc->add_option("--A", m.a, "Resource sequestration factor")->capture_default_str();
  sc->add_option("--B", m.b, "Production gain")->capture_default_str();
  sc->add_option("--D", m.d, "Decay rate")->capture_default_str();
  sc->add_option("--n", m.n, "Hill exponent")->capture_default_str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Delay models of resource-limited protein synthesis", "metosc"};
  app.set_version_flag("--version", METOSC_VERSION);
  app.set_config("--config", "", "INI file; one [section] per subcommand");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();
  app.require_subcommand(1);

  std::string output_dir;
  unsigned jobs = 1;
  app.add_option("--output-dir,-o", output_dir,
                 std::string("Output directory (default: $") + kOutputDirEnv + " or ./metosc-out)");
  app.add_option("--jobs,-j", jobs, "Worker threads for grids (0 = all cores)")->capture_default_str();

  ModelOptions eq_opt;
  auto* eq_cmd = app.add_subcommand("equilibria", "Equilibria of one parameter point");
  add_model_options(eq_cmd, eq_opt);

  SimulateOptions sim_opt;
  auto* sim_cmd = app.add_subcommand("simulate", "Integrate from the starvation history");
  add_model_options(sim_cmd, sim_opt.model);
  sim_cmd->add_option("--p0", sim_opt.p0, "Initial production rate")->capture_default_str();
  sim_cmd->add_option("--delays", sim_opt.delays, "Horizon in delays")->capture_default_str();
  sim_cmd->add_option("--steps-per-delay", sim_opt.steps_per_delay)->capture_default_str();
  sim_cmd->add_option("--max-step", sim_opt.max_step, "Upper bound on the step")->capture_default_str();
  sim_cmd->add_option("--stride", sim_opt.stride, "Keep every stride-th sample")->capture_default_str();

  GridOptions grid_opt;
  bool grid_resume = false;
  auto* grid_cmd = app.add_subcommand("stability-grid", "Dominant multiplier over a (tau, R_T) grid");
  add_model_options(grid_cmd, grid_opt.model);
  grid_cmd->add_option("--eq", grid_opt.eq, "top or middle")->capture_default_str();
  grid_cmd->add_option("--tau-range", grid_opt.tau_range, "lo hi")->expected(2)->capture_default_str();
  grid_cmd->add_option("--rt-range", grid_opt.rt_range, "lo hi")->expected(2)->capture_default_str();
  grid_cmd->add_option("--n-tau", grid_opt.n_tau, "Cells along tau")->capture_default_str();
  grid_cmd->add_option("--n-rt", grid_opt.n_rt, "Cells along R_T")->capture_default_str();
  grid_cmd->add_option("--elements", grid_opt.elements, "Spectral elements per delay")->capture_default_str();
  grid_cmd->add_option("--order", grid_opt.order, "Polynomial order per element")->capture_default_str();
  grid_cmd->add_flag("--count-only", grid_opt.count_only, "Equilibrium counts only, no multipliers");
  grid_cmd->add_flag("--resume", grid_resume, "Continue an interrupted run with the same configuration");

  FeatureOptions feat_opt;
  bool feat_resume = false;
  auto* feat_cmd = app.add_subcommand("feature-grid", "Response amplitude over a parameter grid");
  add_model_options(feat_cmd, feat_opt.model);
  feat_cmd->add_option("--axes", feat_opt.axes, "tau-rt or p0-rt")->capture_default_str();
  feat_cmd->add_option("--axis1-range", feat_opt.axis1_range, "lo hi")->expected(2)->capture_default_str();
  feat_cmd->add_option("--rt-range", feat_opt.rt_range, "lo hi")->expected(2)->capture_default_str();
  feat_cmd->add_option("--n1", feat_opt.n1, "Cells along axis 1")->capture_default_str();
  feat_cmd->add_option("--n-rt", feat_opt.n_rt, "Cells along R_T")->capture_default_str();
  feat_cmd->add_option("--p0", feat_opt.p0, "Initial production rate (tau-rt axes)")->capture_default_str();
  feat_cmd->add_option("--horizon-delays", feat_opt.horizon_delays)->capture_default_str();
  feat_cmd->add_option("--window-delays", feat_opt.window_delays)->capture_default_str();
  feat_cmd->add_flag("--resume", feat_resume, "Continue an interrupted run with the same configuration");

  BvpCliOptions bvp_opt;
  auto* bvp_cmd = app.add_subcommand("bvp", "Periodic orbit from a simulated guess");
  add_model_options(bvp_cmd, bvp_opt.model);
  bvp_cmd->add_option("--p0", bvp_opt.p0, "Initial production rate of the guess run")->capture_default_str();
  bvp_cmd->add_option("--horizon-delays", bvp_opt.horizon_delays, "Length of the guess run")->capture_default_str();
  bvp_cmd->add_option("--elements", bvp_opt.elements)->capture_default_str();
  bvp_cmd->add_option("--order", bvp_opt.order)->capture_default_str();
  bvp_cmd->add_option("--tol", bvp_opt.tol, "Newton tolerance (max norm)")->capture_default_str();
  bvp_cmd->add_option("--max-iters", bvp_opt.max_iters)->capture_default_str();
  bvp_cmd->add_option("--phase", bvp_opt.phase, "anchor or literal")->capture_default_str();

  FitOptions fit_opt;
  auto* fit_cmd = app.add_subcommand("boundary-fit", "Fit a polynomial to a boundary in a stability grid");
  fit_cmd->add_option("--grid", fit_opt.grid, "stability.csv from stability-grid");
  fit_cmd->add_option("--criterion", fit_opt.criterion, "modulus or count")->capture_default_str();
  fit_cmd->add_option("--degree", fit_opt.degree)->capture_default_str();
  fit_cmd->add_option("--tau-min", fit_opt.tau_min)->capture_default_str();
  fit_cmd->add_option("--tau-max", fit_opt.tau_max);
  fit_cmd->add_option("--output", fit_opt.output, "File name inside the output directory")->capture_default_str();

  ReproduceOptions rep_opt;
  auto* rep_cmd = app.add_subcommand("reproduce", "Regenerate the data behind one figure ('list' for ids)");
  rep_cmd->add_option("id", rep_opt.id, "Figure id")->required();
  rep_cmd->add_option("--res", rep_opt.res, "Cells per grid axis")->capture_default_str();
  rep_cmd->add_option("--horizon-delays", rep_opt.horizon_delays, "Simulation length")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  Run r;
  r.jobs = jobs;
  r.out = &out;
  r.err = &err;
  if (!output_dir.empty()) {
    r.dir = output_dir;
  } else if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    r.dir = env;
  } else {
    r.dir = "metosc-out";
  }

  try {
    if (eq_cmd->parsed()) return cmd_equilibria(r, eq_opt);
    if (sim_cmd->parsed()) return cmd_simulate(r, sim_opt);
    if (grid_cmd->parsed()) return cmd_stability_grid(r, grid_opt, grid_resume);
    if (feat_cmd->parsed()) return cmd_feature_grid(r, feat_opt, feat_resume);
    if (bvp_cmd->parsed()) return cmd_bvp(r, bvp_opt);
    if (fit_cmd->parsed()) return cmd_boundary_fit(r, fit_opt);
    if (rep_cmd->parsed()) return cmd_reproduce(r, rep_opt);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIncomplete;
  }
  return kConfigError;
}

}  // namespace metosc::cli
