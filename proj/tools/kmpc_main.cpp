#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "kmpc/agent.hpp"

namespace {

// Defaults come from the task, then the config file, then explicit flags.
kmpc::AgentConfig resolve_config(const CLI::App& sub, const std::string& task,
                                 const std::string& mode, const std::string& config_path) {
  std::string task_s = task;
  std::string mode_s = mode;
  if (!config_path.empty() && sub.count("--task") == 0) {
    kmpc::AgentConfig probe;
    kmpc::apply_config_file(probe, config_path);
    task_s = kmpc::task_name(probe.task);
  }
  if (!config_path.empty() && sub.count("--mode") == 0) {
    kmpc::AgentConfig probe;
    kmpc::apply_config_file(probe, config_path);
    mode_s = kmpc::mode_name(probe.mode);
  }

  kmpc::AgentConfig cfg = kmpc::default_config(kmpc::parse_task(task_s), kmpc::parse_mode(mode_s));
  if (!config_path.empty()) kmpc::apply_config_file(cfg, config_path);
  cfg.task = kmpc::parse_task(task_s);
  cfg.mode = kmpc::parse_mode(mode_s);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman latent model with linear MPC planning"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Collect episodes and fit the latent model");
  std::string task = "pendulum", mode = "clean", out_dir = "run", config_path, resume_path,
              rollout_mode;
  std::uint64_t seed = 0;
  std::size_t episodes = 0;
  int threads = 0;
  train->add_option("--task", task, "pendulum or manipulator");
  train->add_option("--mode", mode, "clean or distractor");
  train->add_option("--seed", seed, "run seed");
  train->add_option("--episodes", episodes,
                    "total episodes to collect (default 600 pendulum, 1000 manipulator)");
  train->add_option("--out", out_dir, "output directory for checkpoints and curves.csv");
  train->add_option("--config", config_path, "key = value overrides")->check(CLI::ExistingFile);
  train->add_option("--resume", resume_path, "checkpoint to continue from")
      ->check(CLI::ExistingFile);
  train->add_option("--rollout-mode", rollout_mode, "fixed or decoded training gains");
  train->add_option("--threads", threads, "gradient worker threads (0 = library default)");

  // eval
  auto* eval = app.add_subcommand("eval", "Run noise-free episodes from a checkpoint");
  std::string ckpt_path, traj_path;
  std::size_t eval_episodes = 10;
  std::uint64_t eval_seed = 1;
  eval->add_option("--checkpoint", ckpt_path, "trained run state")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--episodes", eval_episodes, "evaluation episodes");
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--trajectories", traj_path, "write per-step metrics to this CSV");

  // export-curves
  auto* curves = app.add_subcommand("export-curves", "Rewrite curves.csv from a checkpoint");
  std::string curves_ckpt, curves_out = "curves.csv";
  curves->add_option("--checkpoint", curves_ckpt, "trained run state")
      ->required()
      ->check(CLI::ExistingFile);
  curves->add_option("--out", curves_out, "destination CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      kmpc::Agent agent = [&] {
        if (!resume_path.empty()) return kmpc::Agent::load_file(resume_path);
        kmpc::AgentConfig cfg = resolve_config(*train, task, mode, config_path);
        if (train->count("--seed")) cfg.seed = seed;
        if (train->count("--rollout-mode")) cfg.rollout_mode = kmpc::parse_gain_mode(rollout_mode);
        if (train->count("--threads")) cfg.threads = threads;
        return kmpc::Agent(cfg);
      }();
      if (train->count("--episodes") == 0) {
        episodes = agent.config().task == kmpc::Task::Manipulator ? 1000 : 600;
      }
      std::printf("task=%s mode=%s seed=%llu episodes=%zu -> %s\n",
                  kmpc::task_name(agent.config().task), kmpc::mode_name(agent.config().mode),
                  static_cast<unsigned long long>(agent.config().seed), episodes, out_dir.c_str());
      agent.train(episodes, out_dir);
      std::printf("done: %zu episodes collected, curves in %s/curves.csv\n",
                  agent.episodes_done(), out_dir.c_str());
    } else if (eval->parsed()) {
      kmpc::Agent agent = kmpc::Agent::load_file(ckpt_path);
      auto results = agent.evaluate(eval_episodes, eval_seed, traj_path);
      double mean = 0.0;
      for (std::size_t i = 0; i < results.size(); ++i) {
        std::printf("episode %zu  cum_cost %.6f\n", i, results[i].cum_cost);
        mean += results[i].cum_cost;
      }
      if (!results.empty()) mean /= static_cast<double>(results.size());
      std::printf("mean cum_cost %.6f over %zu episodes\n", mean, results.size());
    } else if (curves->parsed()) {
      kmpc::Agent agent = kmpc::Agent::load_file(curves_ckpt);
      agent.write_curves(curves_out);
      std::printf("wrote %s (%zu episodes)\n", curves_out.c_str(), agent.episodes_done());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
