#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "kmpc/graph.hpp"
#include "kmpc/koopman.hpp"
#include "kmpc/rng.hpp"
#include "kmpc/tensor.hpp"

namespace kmpc {

struct DenseLayer {
  Tensor w;  // out x in
  Tensor b;  // out
};

/// Fully connected net, ReLU between layers, linear output. Zero hidden
/// layers gives a plain affine map.
struct Mlp {
  std::vector<DenseLayer> layers;

  static Mlp glorot(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                    Rng& rng);

  std::size_t in_dim() const;
  std::size_t out_dim() const;
};

/// Leaf ids for one Mlp's parameters inside one graph.
struct MlpNodes {
  std::vector<NodeId> w;
  std::vector<NodeId> b;

  static MlpNodes bind(Graph& g, const Mlp& mlp);
  NodeId apply(Graph& g, NodeId x) const;
};

struct ModelConfig {
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  std::size_t pairs = 0;
  double dt = 0.0;
  std::vector<std::size_t> encoder_hidden{90, 90};
  std::vector<std::size_t> decoder_hidden{90, 90};
  std::vector<std::size_t> cost_hidden{70, 70};
  double action_cost = 0.001;  // coefficient of the diagonal action penalty
};

struct ParamRef {
  Tensor* tensor;
  bool is_weight;  // weight matrices enter the l2 penalty, biases and eigenvalues do not
};

/// Pass counters, bumped by BoundModel so tests can assert how many network
/// evaluations one planner call spends.
struct EvalCounters {
  std::atomic<std::uint64_t> encoder{0};
  std::atomic<std::uint64_t> tangent{0};
  std::atomic<std::uint64_t> cost{0};
  std::atomic<std::uint64_t> decoder{0};

  EvalCounters() = default;
  EvalCounters(const EvalCounters& o) { *this = o; }
  EvalCounters& operator=(const EvalCounters& o) {
    encoder = o.encoder.load();
    tangent = o.tangent.load();
    cost = o.cost.load();
    decoder = o.decoder.load();
    return *this;
  }
};

/// Latent model: encoder phi(o, a) -> s in R^{2P}, decoder s -> o_hat, cost
/// head psi(s) -> pricing row in R^{2P}, and trainable eigenvalue vectors
/// (mu, omega) defining the latent transition. Predicted step cost is
/// (row . s)^2 + a^T R a with fixed diagonal R.
class LatentModel {
 public:
  LatentModel() = default;
  LatentModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::size_t obs_dim() const { return cfg_.obs_dim; }
  std::size_t act_dim() const { return cfg_.act_dim; }
  std::size_t pairs() const { return cfg_.pairs; }
  std::size_t latent_dim() const { return 2 * cfg_.pairs; }
  double dt() const { return cfg_.dt; }

  Mlp encoder;
  Mlp decoder;
  Mlp cost_net;
  Tensor mu;           // {P}
  Tensor omega;        // {P}
  Tensor action_cost;  // {m, m}

  /// Trainable tensors in a fixed order: encoder, decoder, cost head layer
  /// pairs (w then b), then mu, then omega.
  std::vector<ParamRef> param_refs();
  std::vector<const Tensor*> param_views() const;

  KoopmanOperator make_operator() const;

  EvalCounters& counters() const { return counters_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);
  void save_file(const std::string& path) const;
  static LatentModel load_file(const std::string& path);

 private:
  ModelConfig cfg_;
  mutable EvalCounters counters_;
};

/// Handles returned by BoundModel::encode.
struct Encoded {
  NodeId s = 0;
  NodeId o_leaf = 0;
  NodeId a_leaf = 0;
};

/// One graph's view of a LatentModel: parameter leaves are created once per
/// graph (in param_refs order) and every network application reuses them, so
/// a single backward pass yields all parameter gradients.
class BoundModel {
 public:
  BoundModel(Graph& g, const LatentModel& model);

  Encoded encode(const Tensor& o, const Tensor& a);
  NodeId encode_nodes(NodeId o_node, NodeId a_node);
  NodeId decode(NodeId s);
  NodeId cost_row(NodeId s);

  /// Columns of d phi / d a at the encoding that produced `s`, one jvp pass
  /// per action coordinate.
  std::vector<NodeId> action_tangents(NodeId s, NodeId a_leaf);

  /// (row . s)^2 + a^T R a as a scalar node.
  NodeId predicted_cost(NodeId row, NodeId s, NodeId a_leaf);

  /// Latent transition nodes built from the mu/omega leaves (created once).
  const OperatorNodes& transition();

  NodeId mu_leaf() const { return mu_; }
  NodeId omega_leaf() const { return omega_; }
  const std::vector<NodeId>& param_leaves() const { return params_; }
  const std::vector<bool>& param_is_weight() const { return is_weight_; }
  Graph& graph() { return g_; }
  const LatentModel& model() const { return model_; }

 private:
  Graph& g_;
  const LatentModel& model_;
  MlpNodes enc_, dec_, cost_;
  NodeId mu_ = 0;
  NodeId omega_ = 0;
  NodeId r_ = 0;
  std::vector<NodeId> params_;
  std::vector<bool> is_weight_;
  bool has_op_ = false;
  OperatorNodes op_;
};

/// One training window: T transitions, T+1 aligned samples.
struct Sequence {
  std::vector<Tensor> obs;    // T+1 observations
  std::vector<Tensor> act;    // T+1 absolute actions
  std::vector<Tensor> dact;   // T applied increments, dact[k] = act[k+1] - act[k]
  std::vector<double> cost;   // T+1 step costs

  std::size_t steps() const { return dact.size(); }
  void validate() const;
};

enum class GainMode {
  Fixed,    // keep the step-0 pricing row and action sensitivity for the whole window
  Decoded,  // refresh both each step from the propagated state and its decoding
};

struct RolloutLosses {
  NodeId lin = 0;    // latent one-step consistency, averaged over the window
  NodeId recon = 0;  // squared error of the step-0 cost
  NodeId pred = 0;   // squared error of propagated costs, averaged over the window
};

/// Builds the training losses for one sequence on the bound model's graph.
/// The pair (pricing row, action sensitivity) taken at step k drives the
/// k -> k+1 transition and prices the resulting state.
RolloutLosses rollout(BoundModel& bm, const Sequence& seq, GainMode mode);

// Convenience single-shot wrappers; each builds a scratch graph internally.
Tensor encode(const LatentModel& m, const Tensor& o, const Tensor& a);
Tensor decode(const LatentModel& m, const Tensor& s);
Tensor cost_row(const LatentModel& m, const Tensor& s);
double cost_predict(const LatentModel& m, const Tensor& s, const Tensor& a);

/// d phi / d a as a (2P x m) matrix.
Tensor action_jacobian(const LatentModel& m, const Tensor& o, const Tensor& a);

/// s' = Lambda s + B da with a plain operator and a dense sensitivity matrix.
Tensor latent_step(const KoopmanOperator& op, const Tensor& s, const Tensor& b, const Tensor& da);

}  // namespace kmpc
