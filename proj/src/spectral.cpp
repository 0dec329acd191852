#include "metosc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "metosc/log.hpp"
#include "metosc/parallel.hpp"

namespace metosc {

std::string to_string(Stability s) {
  switch (s) {
    case Stability::Stable:
      return "stable";
    case Stability::Unstable:
      return "unstable";
    case Stability::Marginal:
      return "marginal";
  }
  return "unknown";
}

std::string to_string(CellStatus s) {
  switch (s) {
    case CellStatus::Ok:
      return "ok";
    case CellStatus::Absent:
      return "absent";
    case CellStatus::Failed:
      return "failed";
  }
  return "unknown";
}

MonodromyResult build_monodromy(const LinearDDE& sys, double period, const SpectralMesh& mesh,
                                const MonodromyOptions& opt) {
  sys.validate();
  mesh.validate();
  if (!(period > 0.0)) throw std::invalid_argument("build_monodromy: period must be > 0");
  const double tol = 1e-12 * period;
  if (sys.max_delay() > period + tol)
    throw std::invalid_argument("build_monodromy: delay exceeds the period window");

  const int d = sys.dim();
  const int N = mesh.order;
  const int M = mesh.num_elements * N;
  const auto s = mesh.nodes(period);
  const auto w = cheb::barycentric_weights(N);
  const Eigen::MatrixXd Dref = cheb::differentiation_matrix(N) * (2.0 * mesh.num_elements / period);

  // A Y = B Z with Y the new nodes 1..M and Z the previous window's nodes
  // 0..M; new node 0 coincides with old node M.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(M * d, M * d);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(M * d, (M + 1) * d);

  auto add_new = [&](int row, int node, const Eigen::MatrixXd& coef) {
    if (node == 0) {
      B.block(row, M * d, d, d) -= coef;
    } else {
      A.block(row, (node - 1) * d, d, d) += coef;
    }
  };
  auto add_old = [&](int row, int node, const Eigen::MatrixXd& coef) {
    B.block(row, node * d, d, d) -= coef;
  };

  std::vector<double> interp(N + 1);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  for (int e = 0; e < mesh.num_elements; ++e) {
    for (int i = 1; i <= N; ++i) {
      const int k = e * N + i;
      const int row = (k - 1) * d;
      for (int l = 0; l <= N; ++l) add_new(row, e * N + l, Dref(i, l) * I);
      add_new(row, k, -sys.G0);
      for (const auto& term : sys.delayed) {
        const double t = s[k] - term.delay;
        const bool old = t <= tol;
        const double u = old ? std::max(0.0, t + period) : t;
        const int el = mesh.element_of(u, period);
        const std::span<const double> en(s.data() + el * N, N + 1);
        cheb::interpolation_row(en, w, u, interp);
        for (int l = 0; l <= N; ++l) {
          if (interp[l] == 0.0) continue;
          if (old) {
            add_old(row, el * N + l, -interp[l] * term.G);
          } else {
            add_new(row, el * N + l, -interp[l] * term.G);
          }
        }
      }
    }
  }

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  if (!(lu.rcond() > 1e-14)) {
    int bad = 0;
    for (int e = 0; e < mesh.num_elements; ++e) {
      Eigen::FullPivLU<Eigen::MatrixXd> blk(A.block(e * N * d, e * N * d, N * d, N * d));
      if (!blk.isInvertible()) {
        bad = e;
        break;
      }
    }
    std::ostringstream msg;
    msg << "build_monodromy: singular collocation system (element " << bad << ")";
    throw MeshError(msg.str(), bad);
  }

  MonodromyResult res;
  res.U = Eigen::MatrixXd::Zero((M + 1) * d, (M + 1) * d);
  res.U.block(0, M * d, d, d) = I;
  res.U.bottomRows(M * d) = lu.solve(B);

  Eigen::EigenSolver<Eigen::MatrixXd> es(res.U, false);
  if (es.info() != Eigen::Success) throw std::runtime_error("build_monodromy: eigenvalue iteration failed");
  const auto& ev = es.eigenvalues();
  res.multipliers.assign(ev.data(), ev.data() + ev.size());
  std::stable_sort(res.multipliers.begin(), res.multipliers.end(), [](const Complex& a, const Complex& b) {
    const double ma = std::abs(a), mb = std::abs(b);
    if (ma != mb) return ma > mb;
    return a.imag() > b.imag();
  });
  select_dominant(res, opt);
  return res;
}

void select_dominant(MonodromyResult& res, const MonodromyOptions& opt) {
  if (res.multipliers.empty()) throw std::invalid_argument("select_dominant: no multipliers");
  res.trivial_found = false;
  std::size_t skip = res.multipliers.size();
  if (opt.exclude_trivial) {
    double best = opt.trivial_tol;
    for (std::size_t i = 0; i < res.multipliers.size(); ++i) {
      const double dist = std::abs(res.multipliers[i] - 1.0);
      if (dist < best) {
        best = dist;
        skip = i;
      }
    }
    res.trivial_found = skip < res.multipliers.size();
  }
  res.dominant = Complex{0.0, 0.0};
  for (std::size_t i = 0; i < res.multipliers.size(); ++i) {
    if (i == skip) continue;
    res.dominant = res.multipliers[i];
    break;
  }
}

StabilityVerdict classify(const MonodromyResult& res, double marg_tol, const MonodromyOptions& opt) {
  MonodromyResult tmp;
  tmp.multipliers = res.multipliers;
  select_dominant(tmp, opt);
  if (opt.exclude_trivial && !tmp.trivial_found)
    log::info("classify: no multiplier within trivial_tol of 1; using the largest multiplier");
  StabilityVerdict v;
  v.dominant = tmp.dominant;
  v.dominant_modulus = std::abs(tmp.dominant);
  v.trivial_found = tmp.trivial_found;
  if (v.dominant_modulus < 1.0 - marg_tol) {
    v.kind = Stability::Stable;
  } else if (v.dominant_modulus > 1.0 + marg_tol) {
    v.kind = Stability::Unstable;
  } else {
    v.kind = Stability::Marginal;
  }
  return v;
}

MonodromyResult equilibrium_monodromy(const Equilibrium& eq, const ModelParams& prm,
                                      const SpectralMesh& mesh, const MonodromyOptions& opt) {
  const LinearDDE sys = linearize(eq, prm);
  return build_monodromy(sys, sys.max_delay(), mesh, opt);
}

StabilityCell stability_cell(const StabilityGridSpec& spec, double tau, double rt) {
  StabilityCell cell;
  cell.tau = tau;
  cell.R_T = rt;
  try {
    const ModelParams prm = with_total_resource(with_delay(spec.base, tau), rt);
    const EquilibriumSet set = equilibria(prm);
    cell.n_equilibria = static_cast<int>(set.points.size());
    cell.incomplete = set.incomplete;
    const Equilibrium* eq = set.find(spec.kind);
    if (eq == nullptr) {
      cell.status = CellStatus::Absent;
      return cell;
    }
    if (spec.count_only) {
      cell.modulus = std::numeric_limits<double>::quiet_NaN();
      cell.dominant = {cell.modulus, cell.modulus};
      cell.status = CellStatus::Ok;
      return cell;
    }
    const MonodromyResult res = equilibrium_monodromy(*eq, prm, spec.mesh, spec.monodromy);
    const StabilityVerdict v = classify(res, spec.marg_tol, spec.monodromy);
    cell.dominant = v.dominant;
    cell.modulus = v.dominant_modulus;
    cell.verdict = v.kind;
    cell.status = CellStatus::Ok;
  } catch (const std::exception& ex) {
    cell.status = CellStatus::Failed;
    cell.message = ex.what();
  }
  return cell;
}

StabilityGrid stability_grid(const StabilityGridSpec& spec, unsigned jobs) {
  spec.tau.validate();
  spec.rt.validate();
  spec.mesh.validate();
  StabilityGrid grid;
  grid.spec = spec;
  const std::size_t nt = spec.tau.size(), nr = spec.rt.size();
  grid.cells.resize(nt * nr);
  parallel_for(grid.cells.size(), jobs, [&](std::size_t idx) {
    grid.cells[idx] = stability_cell(spec, spec.tau.values[idx % nt], spec.rt.values[idx / nt]);
  });
  return grid;
}

}  // namespace metosc
