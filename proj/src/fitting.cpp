#include "metosc/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/QR>
#include <json.hpp>

namespace metosc {

std::vector<BoundaryPoint> extract_boundary(const StabilityGrid& grid, BoundaryCriterion criterion) {
  const std::size_t nt = grid.spec.tau.size(), nr = grid.spec.rt.size();
  if (grid.cells.size() != nt * nr) throw std::invalid_argument("extract_boundary: grid is incomplete");
  std::vector<BoundaryPoint> out;
  for (std::size_t i = 0; i < nt; ++i) {
    int index = 0;
    for (std::size_t j = 0; j + 1 < nr; ++j) {
      const auto& a = grid.at(i, j);
      const auto& b = grid.at(i, j + 1);
      if (a.status == CellStatus::Failed || b.status == CellStatus::Failed) continue;
      if (criterion == BoundaryCriterion::CountChange) {
        if (a.n_equilibria == b.n_equilibria) continue;
        out.push_back({a.tau, 0.5 * (a.R_T + b.R_T), index++});
        continue;
      }
      if (a.status != CellStatus::Ok || b.status != CellStatus::Ok) continue;
      const double fa = a.modulus - 1.0, fb = b.modulus - 1.0;
      if (!std::isfinite(fa) || !std::isfinite(fb)) continue;
      if ((fa < 0.0) == (fb < 0.0)) continue;
      const double w = fa / (fa - fb);
      out.push_back({a.tau, a.R_T + w * (b.R_T - a.R_T), index++});
    }
  }
  return out;
}

std::vector<BoundaryPoint> restrict_domain(const std::vector<BoundaryPoint>& pts, double tau_min,
                                           double tau_max) {
  std::vector<BoundaryPoint> out;
  std::copy_if(pts.begin(), pts.end(), std::back_inserter(out),
               [&](const BoundaryPoint& p) { return p.tau >= tau_min && p.tau <= tau_max; });
  return out;
}

double BoundaryCurve::operator()(double tau) const {
  double v = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) v = v * tau + *it;
  return v;
}

BoundaryCurve fit_polynomial(const std::vector<BoundaryPoint>& pts, int degree) {
  if (degree < 0) throw std::invalid_argument("fit_polynomial: degree must be >= 0");
  const int n = static_cast<int>(pts.size()), k = degree + 1;
  if (n < degree + 2) throw std::invalid_argument("fit_polynomial: need at least degree + 2 points");
  Eigen::MatrixXd X(n, k);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    double t = 1.0;
    for (int c = 0; c < k; ++c, t *= pts[i].tau) X(i, c) = t;
    y[i] = pts[i].R_T;
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < k) throw std::invalid_argument("fit_polynomial: rank-deficient design matrix");
  const Eigen::VectorXd c = qr.solve(y);

  BoundaryCurve curve;
  curve.points = pts;
  curve.coeffs.assign(c.data(), c.data() + k);
  const auto [lo, hi] = std::minmax_element(pts.begin(), pts.end(),
                                            [](const auto& a, const auto& b) { return a.tau < b.tau; });
  curve.tau_min = lo->tau;
  curve.tau_max = hi->tau;
  const double ss_res = (X * c - y).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).square().sum();
  curve.r2 = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
  return curve;
}

double coefficient_of_determination(const BoundaryCurve& c) {
  if (c.points.empty()) throw std::invalid_argument("coefficient_of_determination: no points");
  double mean = 0.0;
  for (const auto& p : c.points) mean += p.R_T;
  mean /= double(c.points.size());
  double res = 0.0, tot = 0.0;
  for (const auto& p : c.points) {
    res += (p.R_T - c(p.tau)) * (p.R_T - c(p.tau));
    tot += (p.R_T - mean) * (p.R_T - mean);
  }
  return tot > 0.0 ? 1.0 - res / tot : 1.0;
}

void write_json(std::ostream& os, const BoundaryCurve& c) {
  nlohmann::json j;
  j["coefficients"] = c.coeffs;
  j["degree"] = c.degree();
  j["r2"] = c.r2;
  j["domain"] = {c.tau_min, c.tau_max};
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : c.points) pts.push_back({{"tau", p.tau}, {"R_T", p.R_T}, {"index", p.index}});
  j["points"] = pts;
  os << j.dump(2) << '\n';
}

}  // namespace metosc
