#include "kmpc/training.hpp"

#include <exception>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kmpc/rng.hpp"
#include "kmpc/serialize.hpp"

namespace kmpc {

namespace {
constexpr std::uint64_t kBufferMagic = 0x4b4d504342554646ULL;
constexpr std::uint64_t kBufferVersion = 1;
}  // namespace

void Episode::validate() const {
  if (obs.size() < 2) throw std::invalid_argument("Episode: needs at least two samples");
  if (act.size() != obs.size() || cost.size() != obs.size()) {
    throw std::invalid_argument("Episode: got " + std::to_string(obs.size()) + " obs, " +
                                std::to_string(act.size()) + " act, " +
                                std::to_string(cost.size()) + " cost entries");
  }
  for (std::size_t k = 1; k < obs.size(); ++k) {
    if (!obs[k].same_shape(obs[0]) || !act[k].same_shape(act[0])) {
      throw std::invalid_argument("Episode: shape drift at sample " + std::to_string(k));
    }
  }
}

void ReplayBuffer::add(Episode ep) {
  ep.validate();
  episodes_.push_back(std::move(ep));
}

const Episode& ReplayBuffer::episode(std::size_t i) const {
  if (i >= episodes_.size()) {
    throw std::out_of_range("ReplayBuffer::episode: " + std::to_string(i) + " of " +
                            std::to_string(episodes_.size()));
  }
  return episodes_[i];
}

std::vector<Sequence> ReplayBuffer::make_sequences(std::size_t window) const {
  if (window == 0) throw std::invalid_argument("make_sequences: window must be positive");
  std::vector<Sequence> out;
  for (const Episode& ep : episodes_) {
    std::size_t transitions = ep.samples() - 1;
    for (std::size_t start = 0; start + window <= transitions; start += window) {
      Sequence seq;
      seq.obs.assign(ep.obs.begin() + start, ep.obs.begin() + start + window + 1);
      seq.act.assign(ep.act.begin() + start, ep.act.begin() + start + window + 1);
      seq.cost.assign(ep.cost.begin() + start, ep.cost.begin() + start + window + 1);
      seq.dact.reserve(window);
      for (std::size_t k = 0; k < window; ++k) {
        Tensor d = seq.act[k + 1];
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= seq.act[k][i];
        seq.dact.push_back(std::move(d));
      }
      out.push_back(std::move(seq));
    }
  }
  return out;
}

void ReplayBuffer::save(std::ostream& os) const {
  write_u64(os, kBufferMagic);
  write_u64(os, kBufferVersion);
  write_u64(os, episodes_.size());
  for (const Episode& ep : episodes_) {
    write_u64(os, ep.samples());
    write_u64(os, ep.obs.empty() ? 0 : ep.obs[0].size());
    write_u64(os, ep.act.empty() ? 0 : ep.act[0].size());
    for (std::size_t k = 0; k < ep.samples(); ++k) {
      write_f64_array(os, ep.obs[k].data.data(), ep.obs[k].size());
      write_f64_array(os, ep.act[k].data.data(), ep.act[k].size());
      write_f64(os, ep.cost[k]);
    }
  }
}

void ReplayBuffer::load(std::istream& is) {
  if (read_u64(is) != kBufferMagic) throw std::runtime_error("buffer load: bad magic");
  if (read_u64(is) != kBufferVersion) throw std::runtime_error("buffer load: unknown version");
  episodes_.clear();
  std::uint64_t count = read_u64(is);
  episodes_.reserve(count);
  for (std::uint64_t e = 0; e < count; ++e) {
    std::uint64_t samples = read_u64(is);
    std::uint64_t obs_dim = read_u64(is);
    std::uint64_t act_dim = read_u64(is);
    Episode ep;
    ep.obs.reserve(samples);
    ep.act.reserve(samples);
    ep.cost.reserve(samples);
    for (std::uint64_t k = 0; k < samples; ++k) {
      Tensor o = Tensor::zeros({obs_dim});
      read_f64_array(is, o.data.data(), o.size());
      Tensor a = Tensor::zeros({act_dim});
      read_f64_array(is, a.data.data(), a.size());
      ep.obs.push_back(std::move(o));
      ep.act.push_back(std::move(a));
      ep.cost.push_back(read_f64(is));
    }
    ep.validate();
    episodes_.push_back(std::move(ep));
  }
}

namespace {

struct SequenceNodes {
  RolloutLosses parts;
  NodeId reg = 0;
  NodeId total = 0;
};

SequenceNodes build_objective(BoundModel& bm, const Sequence& seq, const TrainConfig& cfg) {
  Graph& g = bm.graph();
  SequenceNodes nodes;
  nodes.parts = rollout(bm, seq, cfg.mode);

  bool have = false;
  NodeId reg = 0;
  const auto& leaves = bm.param_leaves();
  const auto& flags = bm.param_is_weight();
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (!flags[i]) continue;
    NodeId term = g.sum_sq(leaves[i]);
    reg = have ? g.add(reg, term) : term;
    have = true;
  }
  nodes.reg = have ? reg : g.leaf(Tensor::scalar(0.0));

  NodeId cost_part = g.scale(g.add(nodes.parts.recon, nodes.parts.pred), cfg.alpha1);
  nodes.total = g.add(g.add(nodes.parts.lin, cost_part), g.scale(nodes.reg, cfg.alpha2));
  return nodes;
}

LossValues read_losses(const Graph& g, const SequenceNodes& nodes) {
  LossValues v;
  v.lin = g.value(nodes.parts.lin)[0];
  v.recon = g.value(nodes.parts.recon)[0];
  v.pred = g.value(nodes.parts.pred)[0];
  v.reg = g.value(nodes.reg)[0];
  v.total = g.value(nodes.total)[0];
  return v;
}

void accumulate(LossValues& into, const LossValues& v) {
  into.lin += v.lin;
  into.recon += v.recon;
  into.pred += v.pred;
  into.reg += v.reg;
  into.total += v.total;
}

void divide(LossValues& v, double n) {
  v.lin /= n;
  v.recon /= n;
  v.pred /= n;
  v.reg /= n;
  v.total /= n;
}

void sequence_gradients(const LatentModel& model, const Sequence& seq, const TrainConfig& cfg,
                        std::vector<Tensor>& grads, LossValues& losses) {
  Graph g;
  BoundModel bm(g, model);
  SequenceNodes nodes = build_objective(bm, seq, cfg);
  g.backward(nodes.total);
  losses = read_losses(g, nodes);
  grads.clear();
  grads.reserve(bm.param_leaves().size());
  for (NodeId leaf : bm.param_leaves()) grads.push_back(g.grad(leaf));
}

BatchResult reduce_slots(std::vector<std::vector<Tensor>>& slots, std::vector<LossValues>& losses) {
  BatchResult out;
  std::size_t n = slots.size();
  out.grads = std::move(slots[0]);
  out.losses = losses[0];
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t p = 0; p < out.grads.size(); ++p) {
      Tensor& acc = out.grads[p];
      const Tensor& g = slots[i][p];
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
    }
    accumulate(out.losses, losses[i]);
  }
  double inv = 1.0 / static_cast<double>(n);
  for (Tensor& g : out.grads) {
    for (std::size_t j = 0; j < g.size(); ++j) g[j] *= inv;
  }
  divide(out.losses, static_cast<double>(n));
  return out;
}

void check_batch(const std::vector<const Sequence*>& batch) {
  if (batch.empty()) throw std::invalid_argument("batch_gradients: empty batch");
  for (const Sequence* s : batch) {
    if (s == nullptr) throw std::invalid_argument("batch_gradients: null sequence");
  }
}

}  // namespace

LossValues total_objective(const LatentModel& model, const std::vector<const Sequence*>& batch,
                           const TrainConfig& cfg) {
  check_batch(batch);
  LossValues sum;
  for (const Sequence* seq : batch) {
    Graph g;
    BoundModel bm(g, model);
    SequenceNodes nodes = build_objective(bm, *seq, cfg);
    accumulate(sum, read_losses(g, nodes));
  }
  divide(sum, static_cast<double>(batch.size()));
  return sum;
}

BatchResult batch_gradients_serial(const LatentModel& model,
                                   const std::vector<const Sequence*>& batch,
                                   const TrainConfig& cfg) {
  check_batch(batch);
  std::vector<std::vector<Tensor>> slots(batch.size());
  std::vector<LossValues> losses(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    sequence_gradients(model, *batch[i], cfg, slots[i], losses[i]);
  }
  return reduce_slots(slots, losses);
}

BatchResult batch_gradients(const LatentModel& model, const std::vector<const Sequence*>& batch,
                            const TrainConfig& cfg) {
  check_batch(batch);
  std::vector<std::vector<Tensor>> slots(batch.size());
  std::vector<LossValues> losses(batch.size());
  std::exception_ptr failure = nullptr;

#ifdef _OPENMP
  int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::size_t i = 0; i < batch.size(); ++i) {
    try {
      sequence_gradients(model, *batch[i], cfg, slots[i], losses[i]);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
#else
  for (std::size_t i = 0; i < batch.size(); ++i) {
    try {
      sequence_gradients(model, *batch[i], cfg, slots[i], losses[i]);
    } catch (...) {
      if (!failure) failure = std::current_exception();
    }
  }
#endif

  if (failure) std::rethrow_exception(failure);
  return reduce_slots(slots, losses);
}

EpochStats train_epoch(LatentModel& model, Adam& opt, const std::vector<Sequence>& seqs,
                       const TrainConfig& cfg, std::uint64_t shuffle_seed) {
  if (seqs.empty()) throw std::invalid_argument("train_epoch: no sequences");
  if (cfg.batch == 0) throw std::invalid_argument("train_epoch: batch must be positive");

  std::vector<std::size_t> order(seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(shuffle_seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::size_t j = rng.uniform_int(i);
    std::swap(order[i - 1], order[j]);
  }

  opt.set_lr(cfg.lr);
  std::vector<ParamRef> refs = model.param_refs();
  std::vector<Tensor*> params;
  params.reserve(refs.size());
  for (ParamRef& r : refs) params.push_back(r.tensor);

  EpochStats stats;
  LossValues sum;
  std::size_t seen = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
    std::size_t end = std::min(order.size(), start + cfg.batch);
    std::vector<const Sequence*> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) batch.push_back(&seqs[order[i]]);

    BatchResult res = batch_gradients(model, batch, cfg);
    opt.step(params, res.grads);

    double w = static_cast<double>(batch.size());
    sum.lin += res.losses.lin * w;
    sum.recon += res.losses.recon * w;
    sum.pred += res.losses.pred * w;
    sum.reg += res.losses.reg * w;
    sum.total += res.losses.total * w;
    seen += batch.size();
    ++stats.batches;
  }
  divide(sum, static_cast<double>(seen));
  stats.mean = sum;
  return stats;
}

EpochStats train_epochs(LatentModel& model, Adam& opt, const std::vector<Sequence>& seqs,
                        const TrainConfig& cfg, std::size_t epochs, std::uint64_t base_seed) {
  EpochStats last;
  for (std::size_t e = 0; e < epochs; ++e) {
    last = train_epoch(model, opt, seqs, cfg, Rng::derive(base_seed, {0x65706f6368ULL, e}));
  }
  return last;
}

}  // namespace kmpc
