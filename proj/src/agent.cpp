#include "kmpc/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kmpc/serialize.hpp"

namespace kmpc {

namespace {

constexpr std::uint64_t kRunMagic = 0x4b4d504352554e30ULL;
constexpr std::uint64_t kRunVersion = 1;

// Stream labels for seed derivation.
constexpr std::uint64_t kStreamEnv = 0x656e76ULL;
constexpr std::uint64_t kStreamEpisode = 0x6570ULL;
constexpr std::uint64_t kStreamNoise = 0x6e6f697365ULL;
constexpr std::uint64_t kStreamTrain = 0x747261696eULL;
constexpr std::uint64_t kStreamEval = 0x6576616cULL;

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

OUNoise::OUNoise(std::size_t dim, double decay) : decay_(decay), eps_(Tensor::zeros({dim})) {
  if (!(decay >= 0.0 && decay < 1.0)) {
    throw std::invalid_argument("OUNoise: decay must lie in [0, 1)");
  }
}

void OUNoise::reset() { eps_ = Tensor::zeros(eps_.shape); }

Tensor OUNoise::sample(Rng& rng, double sigma2) {
  if (sigma2 < 0.0) throw std::invalid_argument("OUNoise: negative variance");
  double kick = std::sqrt(1.0 - decay_ * decay_);
  double stddev = std::sqrt(sigma2);
  for (std::size_t i = 0; i < eps_.size(); ++i) {
    eps_[i] = decay_ * eps_[i] + kick * rng.normal(0.0, stddev);
  }
  return eps_;
}

AgentConfig default_config(Task task, Mode mode) {
  AgentConfig cfg;
  cfg.task = task;
  cfg.mode = mode;
  if (task == Task::Manipulator) {
    cfg.pairs = 30;
    cfg.episode_steps = 150;
  }
  return cfg;
}

Task parse_task(const std::string& s) {
  if (s == "pendulum") return Task::Pendulum;
  if (s == "manipulator") return Task::Manipulator;
  throw std::invalid_argument("unknown task '" + s + "' (want pendulum or manipulator)");
}

Mode parse_mode(const std::string& s) {
  if (s == "clean") return Mode::Clean;
  if (s == "distractor") return Mode::Distractor;
  throw std::invalid_argument("unknown mode '" + s + "' (want clean or distractor)");
}

GainMode parse_gain_mode(const std::string& s) {
  if (s == "fixed") return GainMode::Fixed;
  if (s == "decoded") return GainMode::Decoded;
  throw std::invalid_argument("unknown rollout mode '" + s + "' (want fixed or decoded)");
}

const char* task_name(Task t) { return t == Task::Pendulum ? "pendulum" : "manipulator"; }
const char* mode_name(Mode m) { return m == Mode::Clean ? "clean" : "distractor"; }
const char* gain_mode_name(GainMode m) { return m == GainMode::Fixed ? "fixed" : "decoded"; }

namespace {

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  std::uint64_t v;
  try {
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": '" + value + "'");
  }
  if (pos != value.size()) {
    throw std::invalid_argument("config: bad integer for " + key + ": '" + value + "'");
  }
  return v;
}

double parse_f64(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
  }
  if (pos != value.size()) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
  }
  return v;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_kv(AgentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "task") cfg.task = parse_task(value);
  else if (key == "mode") cfg.mode = parse_mode(value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "pairs") cfg.pairs = parse_u64(key, value);
  else if (key == "horizon") cfg.horizon = parse_u64(key, value);
  else if (key == "window") cfg.window = parse_u64(key, value);
  else if (key == "action_cost") cfg.action_cost = parse_f64(key, value);
  else if (key == "r_tilde") cfg.r_tilde = parse_f64(key, value);
  else if (key == "alpha1") cfg.alpha1 = parse_f64(key, value);
  else if (key == "alpha2") cfg.alpha2 = parse_f64(key, value);
  else if (key == "lr") cfg.lr = parse_f64(key, value);
  else if (key == "batch") cfg.batch = parse_u64(key, value);
  else if (key == "initial_episodes") cfg.initial_episodes = parse_u64(key, value);
  else if (key == "initial_epochs") cfg.initial_epochs = parse_u64(key, value);
  else if (key == "loop_episodes") cfg.loop_episodes = parse_u64(key, value);
  else if (key == "loop_epochs") cfg.loop_epochs = parse_u64(key, value);
  else if (key == "lambda_ou") cfg.lambda_ou = parse_f64(key, value);
  else if (key == "sigma2_init") cfg.sigma2_init = parse_f64(key, value);
  else if (key == "anneal_episodes") cfg.anneal_episodes = parse_u64(key, value);
  else if (key == "episode_steps") cfg.episode_steps = parse_u64(key, value);
  else if (key == "rollout_mode") cfg.rollout_mode = parse_gain_mode(value);
  else if (key == "threads") cfg.threads = static_cast<int>(parse_u64(key, value));
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void apply_config_file(AgentConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    apply_config_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

namespace {

void check_config(const AgentConfig& cfg) {
  if (cfg.pairs == 0) throw std::invalid_argument("config: pairs must be positive");
  if (cfg.horizon == 0) throw std::invalid_argument("config: horizon must be positive");
  if (cfg.window == 0) throw std::invalid_argument("config: window must be positive");
  if (cfg.batch == 0) throw std::invalid_argument("config: batch must be positive");
  if (cfg.episode_steps == 0) throw std::invalid_argument("config: episode_steps must be positive");
  if (cfg.anneal_episodes == 0) {
    throw std::invalid_argument("config: anneal_episodes must be positive");
  }
  if (!(cfg.lambda_ou >= 0.0 && cfg.lambda_ou < 1.0)) {
    throw std::invalid_argument("config: lambda_ou must lie in [0, 1)");
  }
  if (cfg.sigma2_init < 0.0) throw std::invalid_argument("config: sigma2_init must not be negative");
}

ModelConfig model_config_for(const AgentConfig& cfg, const Env& env) {
  ModelConfig mc;
  mc.obs_dim = env.obs_dim();
  mc.act_dim = env.act_dim();
  mc.pairs = cfg.pairs;
  mc.dt = env.dt();
  mc.action_cost = cfg.action_cost;
  return mc;
}

}  // namespace

Agent::Agent(const AgentConfig& cfg) : cfg_(cfg) {
  check_config(cfg_);
  Env env = make_env();
  model_ = LatentModel(model_config_for(cfg_, env), cfg_.seed);
  opt_ = Adam(AdamConfig{cfg_.lr, 0.9, 0.999, 1e-8});
}

Env Agent::make_env() const {
  return Env(cfg_.task, cfg_.mode, Rng::derive(cfg_.seed, {kStreamEnv}));
}

PlanConfig Agent::plan_config(const Env& env) const {
  PlanConfig pc;
  pc.horizon = cfg_.horizon;
  pc.r_tilde = cfg_.r_tilde;
  pc.a_min = env.action_min();
  pc.a_max = env.action_max();
  return pc;
}

TrainConfig Agent::train_config() const {
  TrainConfig tc;
  tc.alpha1 = cfg_.alpha1;
  tc.alpha2 = cfg_.alpha2;
  tc.lr = cfg_.lr;
  tc.batch = cfg_.batch;
  tc.window = cfg_.window;
  tc.mode = cfg_.rollout_mode;
  tc.threads = cfg_.threads;
  return tc;
}

double Agent::sigma2_for_episode(std::size_t index) const {
  double frac = 1.0 - static_cast<double>(index) / static_cast<double>(cfg_.anneal_episodes);
  return cfg_.sigma2_init * std::max(0.0, frac);
}

Episode Agent::run_episode(Env& env, const KoopmanOperator& op, std::uint64_t episode_seed,
                           double sigma2, std::uint64_t noise_seed, double* cum_cost,
                           std::vector<double>* metric) const {
  std::size_t steps = cfg_.episode_steps;
  Tensor obs = env.reset(episode_seed);
  Rng noise_rng(noise_seed);
  OUNoise noise(env.act_dim(), cfg_.lambda_ou);
  Planner planner(plan_config(env));
  Tensor a = Tensor::zeros({env.act_dim()});
  Tensor a_min = env.action_min();
  Tensor a_max = env.action_max();

  Episode ep;
  ep.obs.reserve(steps + 1);
  ep.act.reserve(steps + 1);
  ep.cost.reserve(steps + 1);
  double total = 0.0;

  for (std::size_t k = 0; k <= steps; ++k) {
    ep.obs.push_back(obs);
    ep.act.push_back(a);

    Tensor a_next = a;
    if (k < steps) {
      Tensor da = planner.plan(model_, op, obs, a);
      for (std::size_t i = 0; i < a_next.size(); ++i) a_next[i] += da[i];
      if (sigma2 > 0.0) {
        Tensor eps = noise.sample(noise_rng, sigma2);
        for (std::size_t i = 0; i < a_next.size(); ++i) a_next[i] += eps[i];
      }
      for (std::size_t i = 0; i < a_next.size(); ++i) {
        a_next[i] = std::min(std::max(a_next[i], a_min[i]), a_max[i]);
      }
    }

    StepResult res = env.step(a);
    ep.cost.push_back(res.cost);
    total += res.cost;
    if (metric) {
      metric->push_back(cfg_.task == Task::Pendulum ? env.upright_angle()
                                                    : env.target_distance());
    }
    obs = std::move(res.obs);
    a = std::move(a_next);
  }

  if (cum_cost) *cum_cost = total;
  return ep;
}

void Agent::collect_phase(std::size_t count) {
  Env env = make_env();
  KoopmanOperator op = model_.make_operator();
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t index = episodes_done_;
    double cum = 0.0;
    Episode ep = run_episode(env, op, Rng::derive(cfg_.seed, {kStreamEpisode, index}),
                             sigma2_for_episode(index),
                             Rng::derive(cfg_.seed, {kStreamNoise, index}), &cum, nullptr);
    buffer_.add(std::move(ep));
    episode_costs_.push_back(cum);
    ++episodes_done_;
  }
}

void Agent::train_phase(std::size_t epochs) {
  std::vector<Sequence> seqs = buffer_.make_sequences(cfg_.window);
  if (seqs.empty()) {
    throw std::runtime_error("train: buffer holds no complete sequences (episodes shorter than "
                             "the training window?)");
  }
  TrainConfig tc = train_config();
  for (std::size_t e = 0; e < epochs; ++e) {
    train_epoch(model_, opt_, seqs, tc,
                Rng::derive(cfg_.seed, {kStreamTrain, episodes_done_, e}));
  }
}

void Agent::train(std::size_t total_episodes, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  while (episodes_done_ < total_episodes) {
    bool initial = episodes_done_ == 0;
    std::size_t want = initial ? cfg_.initial_episodes : cfg_.loop_episodes;
    std::size_t count = std::min(want, total_episodes - episodes_done_);
    collect_phase(count);
    train_phase(initial ? cfg_.initial_epochs : cfg_.loop_epochs);
    save_file(out_dir + "/checkpoint_" + std::to_string(episodes_done_));
    write_curves(out_dir + "/curves.csv");
  }
}

std::vector<EvalEpisode> Agent::evaluate(std::size_t episodes, std::uint64_t eval_seed,
                                         const std::string& traj_csv) const {
  Env env = make_env();
  KoopmanOperator op = model_.make_operator();
  std::vector<EvalEpisode> out;
  out.reserve(episodes);
  for (std::size_t i = 0; i < episodes; ++i) {
    EvalEpisode ev;
    run_episode(env, op, Rng::derive(eval_seed, {kStreamEval, i}), 0.0, 0, &ev.cum_cost,
                &ev.metric);
    out.push_back(std::move(ev));
  }

  if (!traj_csv.empty()) {
    std::ofstream os(traj_csv);
    if (!os) throw std::runtime_error("cannot open " + traj_csv + " for writing");
    os << "episode,step,metric\n";
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (std::size_t k = 0; k < out[i].metric.size(); ++k) {
        os << i << ',' << k << ',' << format_g17(out[i].metric[k]) << '\n';
      }
    }
  }
  return out;
}

void Agent::write_curves(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << "episode,cum_cost,mean_last10,std_last10,sigma2\n";
  for (std::size_t i = 0; i < episode_costs_.size(); ++i) {
    std::size_t lo = i + 1 >= 10 ? i + 1 - 10 : 0;
    double mean = 0.0;
    std::size_t n = i + 1 - lo;
    for (std::size_t j = lo; j <= i; ++j) mean += episode_costs_[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = lo; j <= i; ++j) {
      double d = episode_costs_[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    os << (i + 1) << ',' << format_g17(episode_costs_[i]) << ',' << format_g17(mean) << ','
       << format_g17(std::sqrt(var)) << ',' << format_g17(sigma2_for_episode(i)) << '\n';
  }
}

void Agent::save_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_u64(os, kRunMagic);
  write_u64(os, kRunVersion);

  write_u64(os, static_cast<std::uint64_t>(cfg_.task));
  write_u64(os, static_cast<std::uint64_t>(cfg_.mode));
  write_u64(os, cfg_.seed);
  write_u64(os, cfg_.pairs);
  write_u64(os, cfg_.horizon);
  write_u64(os, cfg_.window);
  write_f64(os, cfg_.action_cost);
  write_f64(os, cfg_.r_tilde);
  write_f64(os, cfg_.alpha1);
  write_f64(os, cfg_.alpha2);
  write_f64(os, cfg_.lr);
  write_u64(os, cfg_.batch);
  write_u64(os, cfg_.initial_episodes);
  write_u64(os, cfg_.initial_epochs);
  write_u64(os, cfg_.loop_episodes);
  write_u64(os, cfg_.loop_epochs);
  write_f64(os, cfg_.lambda_ou);
  write_f64(os, cfg_.sigma2_init);
  write_u64(os, cfg_.anneal_episodes);
  write_u64(os, cfg_.episode_steps);
  write_u64(os, static_cast<std::uint64_t>(cfg_.rollout_mode));
  write_u64(os, static_cast<std::uint64_t>(cfg_.threads));

  model_.save(os);
  opt_.save(os);
  buffer_.save(os);
  write_u64(os, episodes_done_);
  write_u64(os, episode_costs_.size());
  for (double c : episode_costs_) write_f64(os, c);
  if (!os) throw std::runtime_error("write to " + path + " failed");
}

Agent Agent::load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  if (read_u64(is) != kRunMagic) throw std::runtime_error(path + ": not a run state file");
  if (read_u64(is) != kRunVersion) throw std::runtime_error(path + ": unknown version");

  Agent agent;
  AgentConfig& cfg = agent.cfg_;
  cfg.task = static_cast<Task>(read_u64(is));
  cfg.mode = static_cast<Mode>(read_u64(is));
  cfg.seed = read_u64(is);
  cfg.pairs = read_u64(is);
  cfg.horizon = read_u64(is);
  cfg.window = read_u64(is);
  cfg.action_cost = read_f64(is);
  cfg.r_tilde = read_f64(is);
  cfg.alpha1 = read_f64(is);
  cfg.alpha2 = read_f64(is);
  cfg.lr = read_f64(is);
  cfg.batch = read_u64(is);
  cfg.initial_episodes = read_u64(is);
  cfg.initial_epochs = read_u64(is);
  cfg.loop_episodes = read_u64(is);
  cfg.loop_epochs = read_u64(is);
  cfg.lambda_ou = read_f64(is);
  cfg.sigma2_init = read_f64(is);
  cfg.anneal_episodes = read_u64(is);
  cfg.episode_steps = read_u64(is);
  cfg.rollout_mode = static_cast<GainMode>(read_u64(is));
  cfg.threads = static_cast<int>(read_u64(is));
  check_config(cfg);

  agent.model_.load(is);
  agent.opt_.load(is);
  agent.buffer_.load(is);
  agent.episodes_done_ = read_u64(is);
  std::uint64_t n = read_u64(is);
  agent.episode_costs_.resize(n);
  for (double& c : agent.episode_costs_) c = read_f64(is);
  return agent;
}

}  // namespace kmpc
