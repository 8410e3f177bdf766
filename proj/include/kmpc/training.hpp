#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "kmpc/adam.hpp"
#include "kmpc/latent_model.hpp"
#include "kmpc/tensor.hpp"

namespace kmpc {

/// One rollout of the environment: aligned samples o_k, a_k, c_k for
/// k = 0..L. Increments are implicit differences of consecutive actions.
struct Episode {
  std::vector<Tensor> obs;
  std::vector<Tensor> act;
  std::vector<double> cost;

  std::size_t samples() const { return obs.size(); }
  void validate() const;
};

class ReplayBuffer {
 public:
  void add(Episode ep);
  std::size_t episodes() const { return episodes_.size(); }
  const Episode& episode(std::size_t i) const;
  void clear() { episodes_.clear(); }

  /// Non-overlapping windows of `window` transitions from every episode.
  std::vector<Sequence> make_sequences(std::size_t window) const;

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  std::vector<Episode> episodes_;
};

struct TrainConfig {
  double alpha1 = 10.0;   // weight of the two cost losses
  double alpha2 = 1e-14;  // weight of the l2 penalty on weight matrices
  double lr = 0.001;
  std::size_t batch = 32;
  std::size_t window = 15;  // transitions per training sequence
  GainMode mode = GainMode::Fixed;
  int threads = 0;  // 0 keeps the OpenMP default
};

struct LossValues {
  double lin = 0.0;
  double recon = 0.0;
  double pred = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

/// Batch objective evaluated fresh (no gradients): means over the batch of
/// lin + alpha1 (recon + pred) plus alpha2 times the weight penalty.
LossValues total_objective(const LatentModel& model, const std::vector<const Sequence*>& batch,
                           const TrainConfig& cfg);

struct BatchResult {
  std::vector<Tensor> grads;  // aligned with LatentModel::param_refs()
  LossValues losses;
};

/// Reference implementation: one sequence at a time, accumulation in batch
/// order.
BatchResult batch_gradients_serial(const LatentModel& model,
                                   const std::vector<const Sequence*>& batch,
                                   const TrainConfig& cfg);

/// OpenMP version: per-sequence gradients land in private slots, then one
/// serial reduction in the same fixed order as the reference, so results are
/// bit-identical to batch_gradients_serial.
BatchResult batch_gradients(const LatentModel& model, const std::vector<const Sequence*>& batch,
                            const TrainConfig& cfg);

struct EpochStats {
  LossValues mean;  // sequence-weighted means over the epoch
  std::size_t batches = 0;
};

/// One pass over the sequences in seeded shuffled order, one optimizer step
/// per mini-batch.
EpochStats train_epoch(LatentModel& model, Adam& opt, const std::vector<Sequence>& seqs,
                       const TrainConfig& cfg, std::uint64_t shuffle_seed);

/// Runs `epochs` passes with shuffle seeds derived from base_seed and the
/// epoch index; returns the last epoch's stats.
EpochStats train_epochs(LatentModel& model, Adam& opt, const std::vector<Sequence>& seqs,
                        const TrainConfig& cfg, std::size_t epochs, std::uint64_t base_seed);

}  // namespace kmpc
