// Micro-benchmarks for the two hot paths: batch gradient computation
// (serial reference vs the OpenMP build) and condense+solve planning
// across latent sizes.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "kmpc/lmpc.hpp"
#include "kmpc/rng.hpp"
#include "kmpc/training.hpp"

using kmpc::KoopmanOperator;
using kmpc::LatentModel;
using kmpc::ModelConfig;
using kmpc::PlanConfig;
using kmpc::Rng;
using kmpc::Sequence;
using kmpc::Tensor;
using kmpc::TrainConfig;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

Sequence random_sequence(std::size_t obs_dim, std::size_t act_dim, std::size_t steps, Rng& rng) {
  Sequence seq;
  Tensor a = Tensor::zeros({act_dim});
  for (std::size_t k = 0; k <= steps; ++k) {
    Tensor o = Tensor::zeros({obs_dim});
    for (std::size_t i = 0; i < obs_dim; ++i) o[i] = rng.normal();
    seq.obs.push_back(o);
    seq.act.push_back(a);
    seq.cost.push_back(rng.uniform(0.0, 5.0));
    if (k == steps) break;
    Tensor an = a;
    for (std::size_t i = 0; i < act_dim; ++i) an[i] += 0.3 * rng.normal();
    seq.dact.push_back(Tensor::vec(std::vector<double>(act_dim)));
    for (std::size_t i = 0; i < act_dim; ++i) seq.dact.back()[i] = an[i] - a[i];
    a = an;
  }
  return seq;
}

void bench_gradients() {
  ModelConfig mc;
  mc.obs_dim = 3;
  mc.act_dim = 1;
  mc.pairs = 10;
  mc.dt = 0.05;
  LatentModel model(mc, 1);

  Rng rng(2);
  std::vector<Sequence> seqs;
  for (int i = 0; i < 32; ++i) seqs.push_back(random_sequence(3, 1, 15, rng));
  std::vector<const Sequence*> batch;
  for (const Sequence& s : seqs) batch.push_back(&s);

  TrainConfig cfg;
  auto serial = kmpc::batch_gradients_serial(model, batch, cfg);

  auto time_runs = [&](auto&& fn, int reps) {
    fn();  // warmup
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
      double t0 = now_ms();
      fn();
      best = std::min(best, now_ms() - t0);
    }
    return best;
  };

  double t_serial =
      time_runs([&] { kmpc::batch_gradients_serial(model, batch, cfg); }, 3);
  double t_par = time_runs([&] { kmpc::batch_gradients(model, batch, cfg); }, 3);

  auto par = kmpc::batch_gradients(model, batch, cfg);
  bool identical = true;
  for (std::size_t i = 0; i < serial.grads.size(); ++i) {
    if (kmpc::max_abs_diff(serial.grads[i], par.grads[i]) != 0.0) identical = false;
  }

  std::printf("batch gradients (32 sequences, window 15, pendulum-sized model)\n");
  std::printf("  serial          %9.2f ms\n", t_serial);
  std::printf("  parallel        %9.2f ms  (speedup %.2fx)\n", t_par, t_serial / t_par);
  std::printf("  bit-identical   %s\n", identical ? "yes" : "NO");
}

void bench_planning() {
  std::printf("condense + solve (horizon 15, one action)\n");
  Rng rng(3);
  for (std::size_t pairs : {10, 20, 40, 80}) {
    std::vector<double> mu(pairs), omega(pairs);
    for (std::size_t j = 0; j < pairs; ++j) {
      mu[j] = rng.uniform(-2.0, 0.0);
      omega[j] = rng.uniform(-6.0, 6.0);
    }
    KoopmanOperator op = kmpc::build_operator(mu, omega, 0.05);
    std::size_t n = 2 * pairs;
    double scale = 1.0 / std::sqrt(static_cast<double>(n));
    Tensor s0 = Tensor::zeros({n});
    Tensor row = Tensor::zeros({n});
    Tensor b0 = Tensor::zeros({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
      s0[i] = rng.normal();
      row[i] = scale * rng.normal();
      b0[i] = scale * rng.normal();
    }
    Tensor a0 = Tensor::vec({0.1});
    Tensor r = Tensor::matrix(1, 1, {0.001});
    PlanConfig cfg;
    cfg.horizon = 15;
    cfg.a_min = Tensor::vec({-2.0});
    cfg.a_max = Tensor::vec({2.0});

    auto run = [&] {
      kmpc::CondensedQP qp = kmpc::condense(op, s0, a0, row, b0, r, cfg);
      kmpc::solve_box_qp(qp, Tensor::zeros({15}), cfg.tol, cfg.max_iter);
    };
    run();
    const int calls = 200;
    std::vector<double> blocks;
    for (int b = 0; b < 9; ++b) {
      double t0 = now_ms();
      for (int c = 0; c < calls; ++c) run();
      blocks.push_back((now_ms() - t0) / calls);
    }
    std::sort(blocks.begin(), blocks.end());
    std::printf("  P = %2zu          %9.4f ms/call (median of 9 blocks)\n", pairs,
                blocks[blocks.size() / 2]);
  }
}

}  // namespace

int main(int argc, char** argv) {
  bool grads = true, plan = true;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--gradients") plan = false;
    else if (arg == "--planning") grads = false;
    else {
      std::fprintf(stderr, "usage: bench [--gradients|--planning]\n");
      return 2;
    }
  }
  if (grads) bench_gradients();
  if (plan) bench_planning();
  return 0;
}
