#include "kmpc/koopman.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace kmpc {

Tensor KoopmanOperator::block(std::size_t j) const {
  if (j >= pairs()) {
    throw std::out_of_range("KoopmanOperator::block: pair " + std::to_string(j) + " of " +
                            std::to_string(pairs()));
  }
  return Tensor::matrix(2, 2, {alpha[j], -beta[j], beta[j], alpha[j]});
}

Tensor KoopmanOperator::dense() const {
  std::size_t p = pairs();
  Tensor m = Tensor::zeros({2 * p, 2 * p});
  for (std::size_t j = 0; j < p; ++j) {
    m.at(2 * j, 2 * j) = alpha[j];
    m.at(2 * j, 2 * j + 1) = -beta[j];
    m.at(2 * j + 1, 2 * j) = beta[j];
    m.at(2 * j + 1, 2 * j + 1) = alpha[j];
  }
  return m;
}

Tensor KoopmanOperator::apply(const Tensor& s) const {
  std::size_t p = pairs();
  if (s.size() != 2 * p) {
    throw std::invalid_argument("KoopmanOperator::apply: state " + s.shape_str() +
                                " does not match " + std::to_string(2 * p) + " coordinates");
  }
  Tensor out = Tensor::zeros({2 * p});
  for (std::size_t j = 0; j < p; ++j) {
    double se = s[2 * j], so = s[2 * j + 1];
    out[2 * j] = (alpha[j] * se) - (beta[j] * so);
    out[2 * j + 1] = (beta[j] * se) + (alpha[j] * so);
  }
  return out;
}

Tensor KoopmanOperator::apply_transpose(const Tensor& q) const {
  std::size_t p = pairs();
  if (q.size() != 2 * p) {
    throw std::invalid_argument("KoopmanOperator::apply_transpose: vector " + q.shape_str() +
                                " does not match " + std::to_string(2 * p) + " coordinates");
  }
  Tensor out = Tensor::zeros({2 * p});
  for (std::size_t j = 0; j < p; ++j) {
    double qe = q[2 * j], qo = q[2 * j + 1];
    out[2 * j] = (alpha[j] * qe) + (beta[j] * qo);
    out[2 * j + 1] = (alpha[j] * qo) - (beta[j] * qe);
  }
  return out;
}

KoopmanOperator build_operator(const std::vector<double>& mu, const std::vector<double>& omega,
                               double dt) {
  if (mu.size() != omega.size()) {
    throw std::invalid_argument("build_operator: " + std::to_string(mu.size()) + " mu vs " +
                                std::to_string(omega.size()) + " omega entries");
  }
  if (mu.empty()) throw std::invalid_argument("build_operator: need at least one pair");
  if (!(dt > 0.0)) throw std::invalid_argument("build_operator: dt must be positive");
  KoopmanOperator op;
  op.mu = mu;
  op.omega = omega;
  op.dt = dt;
  op.alpha.resize(mu.size());
  op.beta.resize(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) {
    double mdt = mu[j] * dt;
    if (!(std::fabs(mdt) <= 10.0)) {
      throw std::domain_error("build_operator: |mu * dt| = " + std::to_string(std::fabs(mdt)) +
                              " at pair " + std::to_string(j) + " exceeds 10");
    }
    double growth = std::exp(mdt);
    op.alpha[j] = growth * std::cos(omega[j] * dt);
    op.beta[j] = growth * std::sin(omega[j] * dt);
  }
  return op;
}

KoopmanOperator lambda_power(const KoopmanOperator& op, std::size_t k) {
  KoopmanOperator out;
  out.mu = op.mu;
  out.omega = op.omega;
  out.dt = op.dt * static_cast<double>(k);
  std::size_t p = op.pairs();
  out.alpha.resize(p);
  out.beta.resize(p);
  double kd = static_cast<double>(k);
  for (std::size_t j = 0; j < p; ++j) {
    double growth = std::exp(kd * op.mu[j] * op.dt);
    out.alpha[j] = growth * std::cos(kd * op.omega[j] * op.dt);
    out.beta[j] = growth * std::sin(kd * op.omega[j] * op.dt);
  }
  return out;
}

OperatorNodes operator_nodes(Graph& g, NodeId mu, NodeId omega, double dt) {
  NodeId growth = g.exp(g.scale(mu, dt));
  NodeId wdt = g.scale(omega, dt);
  OperatorNodes op;
  op.alpha = g.mul(growth, g.cos(wdt));
  op.beta = g.mul(growth, g.sin(wdt));
  return op;
}

NodeId apply_nodes(Graph& g, const OperatorNodes& op, NodeId s) {
  std::size_t p = g.value(op.alpha).size();
  if (g.value(s).size() != 2 * p) {
    throw std::invalid_argument("apply_nodes: state " + g.value(s).shape_str() +
                                " does not match " + std::to_string(2 * p) + " coordinates");
  }
  NodeId se = g.slice(s, 0, p, 2);
  NodeId so = g.slice(s, 1, p, 2);
  NodeId se_next = g.sub(g.mul(op.alpha, se), g.mul(op.beta, so));
  NodeId so_next = g.add(g.mul(op.beta, se), g.mul(op.alpha, so));
  return g.interleave(se_next, so_next);
}

}  // namespace kmpc
