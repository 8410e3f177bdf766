#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "kmpc/graph.hpp"
#include "kmpc/koopman.hpp"
#include "kmpc/rng.hpp"
#include "oracles.hpp"

using kmpc::build_operator;
using kmpc::Graph;
using kmpc::KoopmanOperator;
using kmpc::lambda_power;
using kmpc::NodeId;
using kmpc::Rng;
using kmpc::Tensor;

TEST_CASE("blocks match the matrix exponential of the continuous generator") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    double dt = rng.uniform(0.01, 0.5);
    std::size_t pairs = 1 + rng.uniform_int(4);
    std::vector<double> mu(pairs), omega(pairs);
    for (std::size_t j = 0; j < pairs; ++j) {
      mu[j] = rng.uniform(-6.0, 1.0) / dt * rng.uniform(0.0, 1.0);
      omega[j] = rng.uniform(-20.0, 20.0);
    }
    KoopmanOperator op = build_operator(mu, omega, dt);
    for (std::size_t j = 0; j < pairs; ++j) {
      oracles::Mat2 want = oracles::expm2(oracles::pair_generator(mu[j], omega[j]).scaled(dt));
      Tensor blk = op.block(j);
      CHECK(std::fabs(blk.at(0, 0) - want.a) < 1e-12);
      CHECK(std::fabs(blk.at(0, 1) - want.b) < 1e-12);
      CHECK(std::fabs(blk.at(1, 0) - want.c) < 1e-12);
      CHECK(std::fabs(blk.at(1, 1) - want.d) < 1e-12);
    }
  }
}

TEST_CASE("powers agree with iterated block multiplication") {
  KoopmanOperator op = build_operator({-0.4, -0.05, 0.0}, {2.0, -7.5, 0.3}, 0.05);
  for (std::size_t j = 0; j < op.pairs(); ++j) {
    oracles::Mat2 step{op.alpha[j], -op.beta[j], op.beta[j], op.alpha[j]};
    oracles::Mat2 acc{1, 0, 0, 1};
    for (std::size_t k = 0; k <= 40; ++k) {
      Tensor pw = lambda_power(op, k).block(j);
      CHECK(std::fabs(pw.at(0, 0) - acc.a) < 1e-10);
      CHECK(std::fabs(pw.at(0, 1) - acc.b) < 1e-10);
      CHECK(std::fabs(pw.at(1, 0) - acc.c) < 1e-10);
      CHECK(std::fabs(pw.at(1, 1) - acc.d) < 1e-10);
      acc = step.mul(acc);
    }
  }
}

TEST_CASE("apply agrees with the dense block-diagonal matrix") {
  Rng rng(33);
  KoopmanOperator op = build_operator({-0.2, -1.0}, {3.0, 0.5}, 0.1);
  Tensor dense = op.dense();
  for (int trial = 0; trial < 50; ++trial) {
    Tensor s = Tensor::zeros({4});
    for (std::size_t i = 0; i < 4; ++i) s[i] = rng.normal();
    Tensor got = op.apply(s);
    Tensor want = oracles::matvec(dense, s);
    CHECK(kmpc::max_abs_diff(got, want) < 1e-14);

    Tensor gt = op.apply_transpose(s);
    Tensor wt = Tensor::zeros({4});
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) wt[c] += dense.at(r, c) * s[r];
    CHECK(kmpc::max_abs_diff(gt, wt) < 1e-14);
  }
}

TEST_CASE("graph operator application is bit-identical to the plain one") {
  Rng rng(44);
  std::size_t pairs = 5;
  std::vector<double> mu(pairs), omega(pairs);
  for (std::size_t j = 0; j < pairs; ++j) {
    mu[j] = rng.uniform(-2.0, 0.0);
    omega[j] = rng.uniform(-5.0, 5.0);
  }
  double dt = 0.05;
  KoopmanOperator op = build_operator(mu, omega, dt);

  Graph g;
  NodeId mu_n = g.leaf(Tensor::vec(mu), true);
  NodeId om_n = g.leaf(Tensor::vec(omega), true);
  kmpc::OperatorNodes nodes = kmpc::operator_nodes(g, mu_n, om_n, dt);
  CHECK(kmpc::max_abs_diff(g.value(nodes.alpha), Tensor::vec(op.alpha)) == 0.0);
  CHECK(kmpc::max_abs_diff(g.value(nodes.beta), Tensor::vec(op.beta)) == 0.0);

  Tensor s = Tensor::zeros({2 * pairs});
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = rng.normal();
  NodeId s_n = g.leaf(s);
  NodeId out = kmpc::apply_nodes(g, nodes, s_n);
  CHECK(kmpc::max_abs_diff(g.value(out), op.apply(s)) == 0.0);
}

TEST_CASE("decay rates and frequencies stay differentiable") {
  Graph g;
  Tensor mu = Tensor::vec({-0.3, -0.01});
  Tensor omega = Tensor::vec({1.2, -4.0});
  double dt = 0.05;
  NodeId mu_n = g.leaf(mu, true);
  NodeId om_n = g.leaf(omega, true);
  kmpc::OperatorNodes nodes = kmpc::operator_nodes(g, mu_n, om_n, dt);
  NodeId loss = g.sum_sq(g.concat(nodes.alpha, nodes.beta));
  g.backward(loss);

  // d alpha_j / d mu_j = dt alpha_j, d beta_j / d mu_j = dt beta_j,
  // d alpha_j / d omega_j = -dt beta_j, d beta_j / d omega_j = dt alpha_j.
  const Tensor& a = g.value(nodes.alpha);
  const Tensor& b = g.value(nodes.beta);
  for (std::size_t j = 0; j < 2; ++j) {
    double want_mu = 2.0 * a[j] * dt * a[j] + 2.0 * b[j] * dt * b[j];
    double want_om = 2.0 * a[j] * (-dt * b[j]) + 2.0 * b[j] * dt * a[j];
    CHECK(oracles::rel_err(g.grad(mu_n)[j], want_mu) < 1e-12);
    CHECK(std::fabs(g.grad(om_n)[j] - want_om) < 1e-12);
  }
}

TEST_CASE("invalid operator inputs are rejected") {
  CHECK_THROWS_AS(build_operator({-1.0}, {1.0, 2.0}, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(build_operator({-1.0}, {1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_operator({300.0}, {1.0}, 0.05), std::domain_error);
  KoopmanOperator op = build_operator({-1.0}, {1.0}, 0.05);
  CHECK_THROWS_AS(op.apply(Tensor::vec({1.0})), std::invalid_argument);
  CHECK_THROWS_AS(op.block(3), std::out_of_range);
}
