#pragma once

// Chebyshev-Gauss-Lobatto collocation on [-1, 1] and on meshes of equal
// elements.

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace metosc::cheb {

/// x_j = -cos(pi j / order), j = 0..order (ascending).
std::vector<double> lobatto_nodes(int order);

/// Barycentric weights (-1)^j, halved at both ends.
std::vector<double> barycentric_weights(int order);

/// D(i, j) = l_j'(x_i) on the reference interval.
Eigen::MatrixXd differentiation_matrix(int order);

/// Lagrange basis values l_j(x) over the given nodes; exact at nodes.
void interpolation_row(std::span<const double> nodes, std::span<const double> weights, double x,
                       std::span<double> row);

}  // namespace metosc::cheb

namespace metosc {

/// Equal elements, each carrying order + 1 Lobatto nodes; adjacent elements
/// share their boundary node.
struct SpectralMesh {
  int num_elements = 2;
  int order = 16;

  void validate() const;
  int node_count() const { return num_elements * order + 1; }
  /// Global nodes on [0, length], strictly increasing, endpoints included.
  std::vector<double> nodes(double length) const;
  /// Element containing t in [0, length]; boundary points go to the left
  /// element except t = 0.
  int element_of(double t, double length) const;
};

}  // namespace metosc
