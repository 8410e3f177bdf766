#include "kmpc/latent_model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "kmpc/serialize.hpp"

namespace kmpc {

namespace {
constexpr std::uint64_t kModelMagic = 0x4b4d50434d4f444cULL;
constexpr std::uint64_t kModelVersion = 1;
}  // namespace

Mlp Mlp::glorot(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                Rng& rng) {
  if (in == 0 || out == 0) throw std::invalid_argument("Mlp::glorot: zero-width layer");
  std::vector<std::size_t> dims;
  dims.push_back(in);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);

  Mlp net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    std::size_t fan_in = dims[i], fan_out = dims[i + 1];
    if (fan_in == 0 || fan_out == 0) throw std::invalid_argument("Mlp::glorot: zero-width layer");
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer;
    layer.w = Tensor::zeros({fan_out, fan_in});
    for (std::size_t k = 0; k < layer.w.size(); ++k) layer.w[k] = rng.uniform(-bound, bound);
    layer.b = Tensor::zeros({fan_out});
    net.layers.push_back(std::move(layer));
  }
  return net;
}

std::size_t Mlp::in_dim() const {
  if (layers.empty()) throw std::logic_error("Mlp::in_dim: empty net");
  return layers.front().w.cols();
}

std::size_t Mlp::out_dim() const {
  if (layers.empty()) throw std::logic_error("Mlp::out_dim: empty net");
  return layers.back().w.rows();
}

MlpNodes MlpNodes::bind(Graph& g, const Mlp& mlp) {
  MlpNodes nodes;
  for (const DenseLayer& layer : mlp.layers) {
    nodes.w.push_back(g.leaf(layer.w, true));
    nodes.b.push_back(g.leaf(layer.b, true));
  }
  return nodes;
}

NodeId MlpNodes::apply(Graph& g, NodeId x) const {
  if (w.empty()) throw std::logic_error("MlpNodes::apply: unbound net");
  NodeId h = x;
  for (std::size_t i = 0; i < w.size(); ++i) {
    h = g.affine(w[i], b[i], h);
    if (i + 1 < w.size()) h = g.relu(h);
  }
  return h;
}

LatentModel::LatentModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.obs_dim == 0 || cfg.act_dim == 0 || cfg.pairs == 0) {
    throw std::invalid_argument("LatentModel: obs_dim, act_dim and pairs must be positive");
  }
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("LatentModel: dt must be positive");

  Rng rng(Rng::derive(seed, {0x6d6f64656cULL}));
  std::size_t latent = 2 * cfg.pairs;
  encoder = Mlp::glorot(cfg.obs_dim + cfg.act_dim, cfg.encoder_hidden, latent, rng);
  decoder = Mlp::glorot(latent, cfg.decoder_hidden, cfg.obs_dim, rng);
  cost_net = Mlp::glorot(latent, cfg.cost_hidden, latent, rng);

  mu = Tensor::zeros({cfg.pairs});
  omega = Tensor::zeros({cfg.pairs});
  for (std::size_t j = 0; j < cfg.pairs; ++j) {
    mu[j] = rng.uniform(-0.1, 0.0);
    omega[j] = rng.uniform(-1.0, 1.0);
  }
  action_cost = Tensor::identity(cfg.act_dim);
  for (std::size_t k = 0; k < action_cost.size(); ++k) action_cost[k] *= cfg.action_cost;
}

std::vector<ParamRef> LatentModel::param_refs() {
  std::vector<ParamRef> out;
  for (Mlp* net : {&encoder, &decoder, &cost_net}) {
    for (DenseLayer& layer : net->layers) {
      out.push_back({&layer.w, true});
      out.push_back({&layer.b, false});
    }
  }
  out.push_back({&mu, false});
  out.push_back({&omega, false});
  return out;
}

std::vector<const Tensor*> LatentModel::param_views() const {
  std::vector<const Tensor*> out;
  for (const Mlp* net : {&encoder, &decoder, &cost_net}) {
    for (const DenseLayer& layer : net->layers) {
      out.push_back(&layer.w);
      out.push_back(&layer.b);
    }
  }
  out.push_back(&mu);
  out.push_back(&omega);
  return out;
}

KoopmanOperator LatentModel::make_operator() const {
  return build_operator(mu.data, omega.data, cfg_.dt);
}

void LatentModel::save(std::ostream& os) const {
  write_u64(os, kModelMagic);
  write_u64(os, kModelVersion);
  write_u64(os, cfg_.obs_dim);
  write_u64(os, cfg_.act_dim);
  write_u64(os, cfg_.pairs);
  write_f64(os, cfg_.dt);
  write_f64(os, cfg_.action_cost);
  for (const auto* hidden : {&cfg_.encoder_hidden, &cfg_.decoder_hidden, &cfg_.cost_hidden}) {
    write_u64(os, hidden->size());
    for (std::size_t h : *hidden) write_u64(os, h);
  }
  for (const Mlp* net : {&encoder, &decoder, &cost_net}) {
    write_u64(os, net->layers.size());
    for (const DenseLayer& layer : net->layers) {
      write_tensor(os, layer.w);
      write_tensor(os, layer.b);
    }
  }
  write_tensor(os, mu);
  write_tensor(os, omega);
  write_tensor(os, action_cost);
}

void LatentModel::load(std::istream& is) {
  if (read_u64(is) != kModelMagic) throw std::runtime_error("model load: bad magic");
  if (read_u64(is) != kModelVersion) throw std::runtime_error("model load: unknown version");
  cfg_.obs_dim = read_u64(is);
  cfg_.act_dim = read_u64(is);
  cfg_.pairs = read_u64(is);
  cfg_.dt = read_f64(is);
  cfg_.action_cost = read_f64(is);
  for (auto* hidden : {&cfg_.encoder_hidden, &cfg_.decoder_hidden, &cfg_.cost_hidden}) {
    hidden->resize(read_u64(is));
    for (std::size_t& h : *hidden) h = read_u64(is);
  }
  for (Mlp* net : {&encoder, &decoder, &cost_net}) {
    net->layers.resize(read_u64(is));
    for (DenseLayer& layer : net->layers) {
      layer.w = read_tensor(is);
      layer.b = read_tensor(is);
    }
  }
  mu = read_tensor(is);
  omega = read_tensor(is);
  action_cost = read_tensor(is);
}

void LatentModel::save_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  save(os);
  if (!os) throw std::runtime_error("write to " + path + " failed");
}

LatentModel LatentModel::load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  LatentModel m;
  m.load(is);
  return m;
}

BoundModel::BoundModel(Graph& g, const LatentModel& model) : g_(g), model_(model) {
  enc_ = MlpNodes::bind(g, model.encoder);
  dec_ = MlpNodes::bind(g, model.decoder);
  cost_ = MlpNodes::bind(g, model.cost_net);
  mu_ = g.leaf(model.mu, true);
  omega_ = g.leaf(model.omega, true);
  r_ = g.leaf(model.action_cost);

  for (const MlpNodes* net : {&enc_, &dec_, &cost_}) {
    for (std::size_t i = 0; i < net->w.size(); ++i) {
      params_.push_back(net->w[i]);
      is_weight_.push_back(true);
      params_.push_back(net->b[i]);
      is_weight_.push_back(false);
    }
  }
  params_.push_back(mu_);
  is_weight_.push_back(false);
  params_.push_back(omega_);
  is_weight_.push_back(false);
}

Encoded BoundModel::encode(const Tensor& o, const Tensor& a) {
  if (o.size() != model_.obs_dim() || a.size() != model_.act_dim()) {
    throw std::invalid_argument("BoundModel::encode: got " + o.shape_str() + ", " + a.shape_str() +
                                " for dims " + std::to_string(model_.obs_dim()) + ", " +
                                std::to_string(model_.act_dim()));
  }
  Encoded e;
  e.o_leaf = g_.leaf(o);
  e.a_leaf = g_.leaf(a);
  e.s = encode_nodes(e.o_leaf, e.a_leaf);
  return e;
}

NodeId BoundModel::encode_nodes(NodeId o_node, NodeId a_node) {
  model_.counters().encoder.fetch_add(1, std::memory_order_relaxed);
  return enc_.apply(g_, g_.concat(o_node, a_node));
}

NodeId BoundModel::decode(NodeId s) {
  model_.counters().decoder.fetch_add(1, std::memory_order_relaxed);
  return dec_.apply(g_, s);
}

NodeId BoundModel::cost_row(NodeId s) {
  model_.counters().cost.fetch_add(1, std::memory_order_relaxed);
  return cost_.apply(g_, s);
}

std::vector<NodeId> BoundModel::action_tangents(NodeId s, NodeId a_leaf) {
  std::size_t m = model_.act_dim();
  std::vector<NodeId> cols;
  cols.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    Tensor basis = Tensor::zeros({m});
    basis[i] = 1.0;
    cols.push_back(g_.jvp(s, a_leaf, basis));
  }
  model_.counters().tangent.fetch_add(m, std::memory_order_relaxed);
  return cols;
}

NodeId BoundModel::predicted_cost(NodeId row, NodeId s, NodeId a_leaf) {
  NodeId priced = g_.dot(row, s);
  NodeId squared = g_.mul(priced, priced);
  NodeId penalty = g_.dot(a_leaf, g_.matvec(r_, a_leaf));
  return g_.add(squared, penalty);
}

const OperatorNodes& BoundModel::transition() {
  if (!has_op_) {
    op_ = operator_nodes(g_, mu_, omega_, model_.dt());
    has_op_ = true;
  }
  return op_;
}

void Sequence::validate() const {
  std::size_t t = dact.size();
  if (t == 0) throw std::invalid_argument("Sequence: needs at least one transition");
  if (obs.size() != t + 1 || act.size() != t + 1 || cost.size() != t + 1) {
    throw std::invalid_argument("Sequence: got " + std::to_string(obs.size()) + " obs, " +
                                std::to_string(act.size()) + " act, " +
                                std::to_string(cost.size()) + " cost entries for " +
                                std::to_string(t) + " increments");
  }
  for (std::size_t k = 0; k < t; ++k) {
    if (!act[k].same_shape(act[k + 1]) || !act[k].same_shape(dact[k])) {
      throw std::invalid_argument("Sequence: action shape mismatch at step " + std::to_string(k));
    }
    for (std::size_t i = 0; i < dact[k].size(); ++i) {
      if (std::fabs(act[k + 1][i] - (act[k][i] + dact[k][i])) > 1e-12) {
        throw std::invalid_argument("Sequence: increment at step " + std::to_string(k) +
                                    " does not connect the stored actions");
      }
    }
  }
}

RolloutLosses rollout(BoundModel& bm, const Sequence& seq, GainMode mode) {
  seq.validate();
  Graph& g = bm.graph();
  std::size_t horizon = seq.steps();
  std::size_t act_dim = bm.model().act_dim();

  Encoded e0 = bm.encode(seq.obs[0], seq.act[0]);
  NodeId row = bm.cost_row(e0.s);
  std::vector<NodeId> gain_cols = bm.action_tangents(e0.s, e0.a_leaf);

  NodeId chat0 = bm.predicted_cost(row, e0.s, e0.a_leaf);
  NodeId err0 = g.sub(g.leaf(Tensor::scalar(seq.cost[0])), chat0);
  NodeId recon = g.mul(err0, err0);

  const OperatorNodes& op = bm.transition();
  NodeId s = e0.s;
  NodeId lin_sum = 0, pred_sum = 0;
  for (std::size_t k = 0; k < horizon; ++k) {
    NodeId s_next = apply_nodes(g, op, s);
    for (std::size_t i = 0; i < act_dim; ++i) {
      s_next = g.add(s_next, g.scale(gain_cols[i], seq.dact[k][i]));
    }

    Encoded target = bm.encode(seq.obs[k + 1], seq.act[k + 1]);
    NodeId lin_k = g.mse(target.s, s_next);
    lin_sum = k == 0 ? lin_k : g.add(lin_sum, lin_k);

    NodeId chat = bm.predicted_cost(row, s_next, target.a_leaf);
    NodeId err = g.sub(g.leaf(Tensor::scalar(seq.cost[k + 1])), chat);
    NodeId pred_k = g.mul(err, err);
    pred_sum = k == 0 ? pred_k : g.add(pred_sum, pred_k);

    s = s_next;
    if (mode == GainMode::Decoded && k + 1 < horizon) {
      NodeId refreshed = bm.encode_nodes(bm.decode(s), target.a_leaf);
      row = bm.cost_row(s);
      gain_cols = bm.action_tangents(refreshed, target.a_leaf);
    }
  }

  RolloutLosses out;
  double inv_t = 1.0 / static_cast<double>(horizon);
  out.lin = g.scale(lin_sum, inv_t);
  out.recon = recon;
  out.pred = g.scale(pred_sum, inv_t);
  return out;
}

Tensor encode(const LatentModel& m, const Tensor& o, const Tensor& a) {
  Graph g;
  BoundModel bm(g, m);
  return g.value(bm.encode(o, a).s);
}

Tensor decode(const LatentModel& m, const Tensor& s) {
  Graph g;
  BoundModel bm(g, m);
  return g.value(bm.decode(g.leaf(s)));
}

Tensor cost_row(const LatentModel& m, const Tensor& s) {
  Graph g;
  BoundModel bm(g, m);
  return g.value(bm.cost_row(g.leaf(s)));
}

double cost_predict(const LatentModel& m, const Tensor& s, const Tensor& a) {
  Graph g;
  BoundModel bm(g, m);
  NodeId s_leaf = g.leaf(s);
  NodeId a_leaf = g.leaf(a);
  NodeId row = bm.cost_row(s_leaf);
  return g.value(bm.predicted_cost(row, s_leaf, a_leaf))[0];
}

Tensor action_jacobian(const LatentModel& m, const Tensor& o, const Tensor& a) {
  Graph g;
  BoundModel bm(g, m);
  Encoded e = bm.encode(o, a);
  std::vector<NodeId> cols = bm.action_tangents(e.s, e.a_leaf);
  Tensor j = Tensor::zeros({m.latent_dim(), m.act_dim()});
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const Tensor& col = g.value(cols[i]);
    for (std::size_t r = 0; r < col.size(); ++r) j.at(r, i) = col[r];
  }
  return j;
}

Tensor latent_step(const KoopmanOperator& op, const Tensor& s, const Tensor& b,
                   const Tensor& da) {
  if (b.ndim() != 2 || b.rows() != s.size() || b.cols() != da.size()) {
    throw std::invalid_argument("latent_step: sensitivity " + b.shape_str() +
                                " incompatible with state " + s.shape_str() + " and increment " +
                                da.shape_str());
  }
  Tensor out = op.apply(s);
  for (std::size_t r = 0; r < out.size(); ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) acc += b.at(r, i) * da[i];
    out[r] += acc;
  }
  return out;
}

}  // namespace kmpc
