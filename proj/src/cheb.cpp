#include "metosc/cheb.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace metosc::cheb {

std::vector<double> lobatto_nodes(int order) {
  if (order < 1) throw std::invalid_argument("lobatto_nodes: order must be >= 1");
  std::vector<double> x(order + 1);
  // sin form is symmetric to rounding.
  for (int j = 0; j <= order; ++j)
    x[j] = std::sin(std::numbers::pi * (2.0 * j - order) / (2.0 * order));
  return x;
}

std::vector<double> barycentric_weights(int order) {
  std::vector<double> w(order + 1);
  for (int j = 0; j <= order; ++j) w[j] = (j % 2 == 0) ? 1.0 : -1.0;
  w.front() *= 0.5;
  w.back() *= 0.5;
  return w;
}

Eigen::MatrixXd differentiation_matrix(int order) {
  const auto x = lobatto_nodes(order);
  const auto w = barycentric_weights(order);
  const int n = order + 1;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double diag = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      D(i, j) = (w[j] / w[i]) / (x[i] - x[j]);
      diag -= D(i, j);
    }
    D(i, i) = diag;
  }
  return D;
}

void interpolation_row(std::span<const double> nodes, std::span<const double> w, double x,
                       std::span<double> row) {
  const std::size_t n = nodes.size();
  const double scale = std::abs(nodes.back() - nodes.front());
  for (std::size_t j = 0; j < n; ++j) {
    if (std::abs(x - nodes[j]) <= 1e-14 * scale) {
      std::fill(row.begin(), row.end(), 0.0);
      row[j] = 1.0;
      return;
    }
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = w[j] / (x - nodes[j]);
    sum += row[j];
  }
  for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
}

}  // namespace metosc::cheb

namespace metosc {

void SpectralMesh::validate() const {
  if (num_elements < 1) throw std::invalid_argument("mesh: num_elements must be >= 1");
  if (order < 4) throw std::invalid_argument("mesh: order must be >= 4");
}

std::vector<double> SpectralMesh::nodes(double length) const {
  validate();
  const auto ref = cheb::lobatto_nodes(order);
  const double h = length / num_elements;
  std::vector<double> out;
  out.reserve(node_count());
  for (int e = 0; e < num_elements; ++e) {
    const int first = e == 0 ? 0 : 1;
    for (int j = first; j <= order; ++j) out.push_back(h * e + 0.5 * h * (ref[j] + 1.0));
  }
  out.back() = length;
  return out;
}

int SpectralMesh::element_of(double t, double length) const {
  const double h = length / num_elements;
  const int e = static_cast<int>(std::ceil(t / h - 1e-12)) - 1;
  return std::clamp(e, 0, num_elements - 1);
}

}  // namespace metosc
