#pragma once

#include <cstddef>
#include <vector>

#include "kmpc/graph.hpp"
#include "kmpc/tensor.hpp"

namespace kmpc {

/// Block-diagonal latent transition built from P damped-rotation pairs. Pair j
/// advances coordinates (2j, 2j+1) by the 2x2 matrix
///   e^{mu_j dt} [cos(omega_j dt) -sin(omega_j dt); sin(omega_j dt) cos(omega_j dt)],
/// stored here as alpha_j = e^{mu_j dt} cos(omega_j dt) and
/// beta_j = e^{mu_j dt} sin(omega_j dt).
struct KoopmanOperator {
  std::vector<double> mu;
  std::vector<double> omega;
  double dt = 0.0;
  std::vector<double> alpha;
  std::vector<double> beta;

  std::size_t pairs() const { return mu.size(); }

  /// The 2x2 block for pair j, row-major.
  Tensor block(std::size_t j) const;

  /// Full 2P x 2P matrix. Intended for tests and small diagnostics.
  Tensor dense() const;

  /// s' = Lambda s, blockwise.
  Tensor apply(const Tensor& s) const;

  /// q' = Lambda^T q, blockwise.
  Tensor apply_transpose(const Tensor& q) const;
};

/// Validates sizes and |mu_j * dt| <= 10 (keeps e^{mu dt} well inside float64
/// range), then precomputes the block entries.
KoopmanOperator build_operator(const std::vector<double>& mu, const std::vector<double>& omega,
                               double dt);

/// Lambda^k in closed form: pair j becomes e^{k mu_j dt} R(k omega_j dt).
/// k = 0 yields the identity.
KoopmanOperator lambda_power(const KoopmanOperator& op, std::size_t k);

/// Graph-side operator: alpha/beta emitted as nodes on top of mu and omega
/// leaves so latent propagation stays differentiable in the eigenvalues.
struct OperatorNodes {
  NodeId alpha = 0;
  NodeId beta = 0;
};

OperatorNodes operator_nodes(Graph& g, NodeId mu, NodeId omega, double dt);

/// s' = Lambda s on the graph, via even/odd strided slices of s.
NodeId apply_nodes(Graph& g, const OperatorNodes& op, NodeId s);

}  // namespace kmpc
