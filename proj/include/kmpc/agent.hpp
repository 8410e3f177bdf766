#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kmpc/adam.hpp"
#include "kmpc/envs.hpp"
#include "kmpc/latent_model.hpp"
#include "kmpc/lmpc.hpp"
#include "kmpc/rng.hpp"
#include "kmpc/training.hpp"

namespace kmpc {

/// First-order colored exploration noise: each draw decays the previous one
/// and mixes in a fresh normal sample so consecutive actions stay correlated.
class OUNoise {
 public:
  OUNoise(std::size_t dim, double decay);

  void reset();
  Tensor sample(Rng& rng, double sigma2);

 private:
  double decay_;
  Tensor eps_;
};

struct AgentConfig {
  Task task = Task::Pendulum;
  Mode mode = Mode::Clean;
  std::uint64_t seed = 0;
  std::size_t pairs = 10;
  std::size_t horizon = 15;
  std::size_t window = 15;
  double action_cost = 0.001;
  double r_tilde = 0.01;
  double alpha1 = 10.0;
  double alpha2 = 1e-14;
  double lr = 0.001;
  std::size_t batch = 32;
  std::size_t initial_episodes = 90;
  std::size_t initial_epochs = 100;
  std::size_t loop_episodes = 20;
  std::size_t loop_epochs = 3;
  double lambda_ou = 0.85;
  double sigma2_init = 0.85;
  std::size_t anneal_episodes = 400;
  std::size_t episode_steps = 100;  // control steps after the initial one
  GainMode rollout_mode = GainMode::Fixed;
  int threads = 0;
};

/// Task defaults; the manipulator uses more eigenvalue pairs and longer
/// episodes.
AgentConfig default_config(Task task, Mode mode);

Task parse_task(const std::string& s);
Mode parse_mode(const std::string& s);
GainMode parse_gain_mode(const std::string& s);
const char* task_name(Task t);
const char* mode_name(Mode m);
const char* gain_mode_name(GainMode m);

/// Applies one `key = value` assignment; throws on unknown keys or bad
/// values.
void apply_config_kv(AgentConfig& cfg, const std::string& key, const std::string& value);

/// Reads a flat key = value file ('#' starts a comment).
void apply_config_file(AgentConfig& cfg, const std::string& path);

struct EvalEpisode {
  double cum_cost = 0.0;
  std::vector<double> metric;  // per step: pendulum wrapped angle, manipulator target distance
};

/// Owns the model, optimizer and replay buffer, and runs the interleaved
/// collect/train loop: episodes are gathered with the planner plus annealed
/// exploration noise, then the model is refit on the whole buffer.
class Agent {
 public:
  explicit Agent(const AgentConfig& cfg);

  /// Collects and trains until `total_episodes` episodes have been gathered,
  /// saving checkpoint_<n> and curves.csv in out_dir after every phase.
  void train(std::size_t total_episodes, const std::string& out_dir);

  /// Noise-free rollouts. If traj_csv is non-empty, per-step cost and metric
  /// rows are written there.
  std::vector<EvalEpisode> evaluate(std::size_t episodes, std::uint64_t eval_seed,
                                    const std::string& traj_csv = "") const;

  void save_file(const std::string& path) const;
  static Agent load_file(const std::string& path);

  void write_curves(const std::string& path) const;

  const AgentConfig& config() const { return cfg_; }
  const LatentModel& model() const { return model_; }
  LatentModel& model() { return model_; }
  std::size_t episodes_done() const { return episodes_done_; }
  const std::vector<double>& episode_costs() const { return episode_costs_; }
  const ReplayBuffer& buffer() const { return buffer_; }

 private:
  AgentConfig cfg_;
  LatentModel model_;
  Adam opt_;
  ReplayBuffer buffer_;
  std::size_t episodes_done_ = 0;
  std::vector<double> episode_costs_;  // cumulative cost per collected episode

  Agent() = default;

  Env make_env() const;
  PlanConfig plan_config(const Env& env) const;
  TrainConfig train_config() const;
  double sigma2_for_episode(std::size_t index) const;

  Episode run_episode(Env& env, const KoopmanOperator& op, std::uint64_t episode_seed,
                      double sigma2, std::uint64_t noise_seed, double* cum_cost,
                      std::vector<double>* metric) const;

  void collect_phase(std::size_t count);
  void train_phase(std::size_t epochs);
};

}  // namespace kmpc
