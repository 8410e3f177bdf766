#pragma once

#include <cstdint>
#include <vector>

#include "kmpc/rng.hpp"
#include "kmpc/tensor.hpp"

namespace kmpc {

enum class Task { Pendulum, Manipulator };
enum class Mode { Clean, Distractor };

/// Angle folded into [-pi, pi).
double wrap_angle(double th);

struct StepResult {
  Tensor obs;   // observation after the step
  double cost;  // cost of the applied action at the pre-step state
};

/// Control benchmarks with dt = 0.05 and box-limited torques.
///
/// Pendulum: swing-up with angle measured from upright, cost
/// wrap(th)^2 + 0.1 thdot^2 + 0.001 tau^2, torque limit 2, speed limit 8.
///
/// Manipulator: planar two-link arm without gravity, viscous joint damping,
/// cost |endpoint - target|_2 + 0.001 |tau|^2 against a target moving on a
/// circle, torque limit 1 per joint.
///
/// Distractor mode surrounds the controlled system with four autonomous
/// replicas excited by smoothed torque noise; the observation concatenates
/// all five blocks in an order fixed per instance by env_seed.
class Env {
 public:
  Env(Task task, Mode mode, std::uint64_t env_seed);

  Tensor reset(std::uint64_t episode_seed);
  StepResult step(const Tensor& action);

  Task task() const { return task_; }
  Mode mode() const { return mode_; }
  std::size_t obs_dim() const;
  std::size_t act_dim() const;
  double dt() const { return 0.05; }
  Tensor action_min() const;
  Tensor action_max() const;

  /// Observation positions occupied by the controlled block.
  std::vector<std::size_t> relevant_indices() const;

  /// Pendulum only: wrapped angle from upright.
  double upright_angle() const;

  /// Manipulator only: current endpoint-to-target distance.
  double target_distance() const;

 private:
  Task task_;
  Mode mode_;
  std::size_t blocks_;                      // 1 or 5
  std::vector<std::size_t> slot_of_block_;  // block index -> observation slot

  // One state vector per block; block 0 is controlled.
  std::vector<std::vector<double>> states_;
  std::vector<std::vector<double>> ou_;  // replica excitation state
  std::vector<Rng> replica_rng_;
  bool ready_ = false;

  std::size_t block_obs_dim() const;
  std::size_t state_dim() const;
  void observe_block(const std::vector<double>& st, double* out) const;
  void advance_block(std::vector<double>& st, const double* torque) const;
  double block_cost(const std::vector<double>& st, const double* torque) const;
  void reset_block(std::vector<double>& st, Rng& rng) const;
  Tensor observe() const;
  void require_ready(const char* who) const;
};

}  // namespace kmpc
