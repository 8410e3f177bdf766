#include "kmpc/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace kmpc {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "Leaf";
    case Op::MatVec: return "MatVec";
    case Op::Add: return "Add";
    case Op::Sub: return "Sub";
    case Op::Mul: return "Mul";
    case Op::Scale: return "Scale";
    case Op::Relu: return "Relu";
    case Op::ReluMask: return "ReluMask";
    case Op::Concat: return "Concat";
    case Op::Slice: return "Slice";
    case Op::Interleave: return "Interleave";
    case Op::Sum: return "Sum";
    case Op::Exp: return "Exp";
    case Op::Sin: return "Sin";
    case Op::Cos: return "Cos";
  }
  return "?";
}

void Graph::check_id(NodeId id, const char* who) const {
  if (id >= nodes_.size()) {
    throw std::out_of_range(std::string(who) + ": node id " + std::to_string(id) +
                            " out of range (graph has " + std::to_string(nodes_.size()) +
                            " nodes)");
  }
}

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  NodeId id = nodes_.size() - 1;
  eval_node(id);
  return id;
}

NodeId Graph::leaf(Tensor value, bool trainable) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.trainable = trainable;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

#define KMPC_BINARY(fn, opcode)                \
  NodeId Graph::fn(NodeId a, NodeId b) {       \
    check_id(a, #fn);                          \
    check_id(b, #fn);                          \
    Node n;                                    \
    n.op = opcode;                             \
    n.in0 = a;                                 \
    n.in1 = b;                                 \
    return push(std::move(n));                 \
  }

KMPC_BINARY(matvec, Op::MatVec)
KMPC_BINARY(add, Op::Add)
KMPC_BINARY(sub, Op::Sub)
KMPC_BINARY(mul, Op::Mul)
KMPC_BINARY(concat, Op::Concat)
KMPC_BINARY(interleave, Op::Interleave)

#undef KMPC_BINARY

#define KMPC_UNARY(fn, opcode)           \
  NodeId Graph::fn(NodeId a) {           \
    check_id(a, #fn);                    \
    Node n;                              \
    n.op = opcode;                       \
    n.in0 = a;                           \
    return push(std::move(n));           \
  }

KMPC_UNARY(relu, Op::Relu)
KMPC_UNARY(relu_mask, Op::ReluMask)
KMPC_UNARY(sum, Op::Sum)
KMPC_UNARY(exp, Op::Exp)
KMPC_UNARY(sin, Op::Sin)
KMPC_UNARY(cos, Op::Cos)

#undef KMPC_UNARY

NodeId Graph::scale(NodeId a, double factor) {
  check_id(a, "scale");
  Node n;
  n.op = Op::Scale;
  n.in0 = a;
  n.c = factor;
  return push(std::move(n));
}

NodeId Graph::slice(NodeId a, std::size_t start, std::size_t len, std::size_t stride) {
  check_id(a, "slice");
  if (stride == 0) throw std::invalid_argument("slice: stride must be positive");
  Node n;
  n.op = Op::Slice;
  n.in0 = a;
  n.i0 = start;
  n.i1 = len;
  n.i2 = stride;
  return push(std::move(n));
}

NodeId Graph::affine(NodeId w, NodeId b, NodeId x) { return add(matvec(w, x), b); }

NodeId Graph::dot(NodeId a, NodeId b) { return sum(mul(a, b)); }

NodeId Graph::mse(NodeId a, NodeId b) {
  NodeId d = sub(a, b);
  std::size_t n = nodes_[d].value.size();
  return scale(sum(mul(d, d)), 1.0 / static_cast<double>(n));
}

NodeId Graph::sum_sq(NodeId a) { return sum(mul(a, a)); }

NodeId Graph::zero_like(NodeId a) {
  check_id(a, "zero_like");
  return leaf(Tensor::zeros(nodes_[a].value.shape));
}

void Graph::eval_node(std::size_t k) {
  Node& n = nodes_[k];
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::MatVec: {
      const Tensor& m = nodes_[n.in0].value;
      const Tensor& v = nodes_[n.in1].value;
      if (m.ndim() != 2 || v.size() != m.cols()) {
        throw std::invalid_argument("matvec: incompatible shapes " + m.shape_str() + " and " +
                                    v.shape_str());
      }
      std::size_t r = m.rows(), c = m.cols();
      Tensor out = Tensor::zeros({r});
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += m[i * c + j] * v[j];
        out[i] = acc;
      }
      n.value = std::move(out);
      break;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const Tensor& a = nodes_[n.in0].value;
      const Tensor& b = nodes_[n.in1].value;
      if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op_name(n.op)) + ": shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
      }
      Tensor out = a;
      if (n.op == Op::Add) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
      } else if (n.op == Op::Sub) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
      } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
      }
      n.value = std::move(out);
      break;
    }
    case Op::Scale: {
      const Tensor& a = nodes_[n.in0].value;
      Tensor out = a;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = n.c * a[i];
      n.value = std::move(out);
      break;
    }
    case Op::Relu: {
      const Tensor& a = nodes_[n.in0].value;
      Tensor out = a;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
      n.value = std::move(out);
      break;
    }
    case Op::ReluMask: {
      const Tensor& a = nodes_[n.in0].value;
      Tensor out = a;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? 1.0 : 0.0;
      n.value = std::move(out);
      break;
    }
    case Op::Concat: {
      const Tensor& a = nodes_[n.in0].value;
      const Tensor& b = nodes_[n.in1].value;
      Tensor out = Tensor::zeros({a.size() + b.size()});
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i];
      for (std::size_t i = 0; i < b.size(); ++i) out[a.size() + i] = b[i];
      n.value = std::move(out);
      break;
    }
    case Op::Slice: {
      const Tensor& a = nodes_[n.in0].value;
      if (n.i1 > 0 && n.i0 + (n.i1 - 1) * n.i2 >= a.size()) {
        throw std::out_of_range("slice: start " + std::to_string(n.i0) + " len " +
                                std::to_string(n.i1) + " stride " + std::to_string(n.i2) +
                                " exceeds input of size " + std::to_string(a.size()));
      }
      Tensor out = Tensor::zeros({n.i1});
      for (std::size_t j = 0; j < n.i1; ++j) out[j] = a[n.i0 + j * n.i2];
      n.value = std::move(out);
      break;
    }
    case Op::Interleave: {
      const Tensor& a = nodes_[n.in0].value;
      const Tensor& b = nodes_[n.in1].value;
      if (a.size() != b.size()) {
        throw std::invalid_argument("interleave: sizes " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
      }
      Tensor out = Tensor::zeros({2 * a.size()});
      for (std::size_t j = 0; j < a.size(); ++j) {
        out[2 * j] = a[j];
        out[2 * j + 1] = b[j];
      }
      n.value = std::move(out);
      break;
    }
    case Op::Sum: {
      const Tensor& a = nodes_[n.in0].value;
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
      n.value = Tensor::scalar(acc);
      break;
    }
    case Op::Exp:
    case Op::Sin:
    case Op::Cos: {
      const Tensor& a = nodes_[n.in0].value;
      Tensor out = a;
      if (n.op == Op::Exp) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a[i]);
      } else if (n.op == Op::Sin) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(a[i]);
      } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::cos(a[i]);
      }
      n.value = std::move(out);
      break;
    }
  }
}

void Graph::recompute() {
  for (std::size_t k = 0; k < nodes_.size(); ++k) eval_node(k);
}

void Graph::set_value(NodeId id, const Tensor& v) {
  check_id(id, "set_value");
  Node& n = nodes_[id];
  if (n.op != Op::Leaf) {
    throw std::logic_error("set_value: node " + std::to_string(id) + " is a " + op_name(n.op) +
                           ", not a leaf");
  }
  if (!n.value.same_shape(v)) {
    throw std::invalid_argument("set_value: shape " + v.shape_str() + " does not match leaf " +
                                n.value.shape_str());
  }
  n.value = v;
}

void Graph::backward(NodeId root) {
  check_id(root, "backward");
  if (nodes_[root].value.size() != 1) {
    throw std::logic_error("backward: root must be scalar, got " +
                           nodes_[root].value.shape_str());
  }
  for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
  nodes_[root].grad[0] = 1.0;

  for (std::size_t k = root + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
      case Op::ReluMask:
        break;
      case Op::MatVec: {
        const Tensor& m = nodes_[n.in0].value;
        const Tensor& v = nodes_[n.in1].value;
        Tensor& gm = nodes_[n.in0].grad;
        Tensor& gv = nodes_[n.in1].grad;
        std::size_t r = m.rows(), c = m.cols();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            gm[i * c + j] += g[i] * v[j];
            gv[j] += m[i * c + j] * g[i];
          }
        }
        break;
      }
      case Op::Add: {
        Tensor& ga = nodes_[n.in0].grad;
        Tensor& gb = nodes_[n.in1].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::Sub: {
        Tensor& ga = nodes_[n.in0].grad;
        Tensor& gb = nodes_[n.in1].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& a = nodes_[n.in0].value;
        const Tensor& b = nodes_[n.in1].value;
        Tensor& ga = nodes_[n.in0].grad;
        Tensor& gb = nodes_[n.in1].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * b[i];
          gb[i] += g[i] * a[i];
        }
        break;
      }
      case Op::Scale: {
        Tensor& ga = nodes_[n.in0].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.c * g[i];
        break;
      }
      case Op::Relu: {
        const Tensor& a = nodes_[n.in0].value;
        Tensor& ga = nodes_[n.in0].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (a[i] > 0.0) ga[i] += g[i];
        }
        break;
      }
      case Op::Concat: {
        Tensor& ga = nodes_[n.in0].grad;
        Tensor& gb = nodes_[n.in1].grad;
        std::size_t n0 = ga.size();
        for (std::size_t i = 0; i < n0; ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[n0 + i];
        break;
      }
      case Op::Slice: {
        Tensor& ga = nodes_[n.in0].grad;
        for (std::size_t j = 0; j < n.i1; ++j) ga[n.i0 + j * n.i2] += g[j];
        break;
      }
      case Op::Interleave: {
        Tensor& ga = nodes_[n.in0].grad;
        Tensor& gb = nodes_[n.in1].grad;
        for (std::size_t j = 0; j < ga.size(); ++j) {
          ga[j] += g[2 * j];
          gb[j] += g[2 * j + 1];
        }
        break;
      }
      case Op::Sum: {
        Tensor& ga = nodes_[n.in0].grad;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        break;
      }
      case Op::Exp: {
        const Tensor& y = n.value;
        Tensor& ga = nodes_[n.in0].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        break;
      }
      case Op::Sin: {
        const Tensor& a = nodes_[n.in0].value;
        Tensor& ga = nodes_[n.in0].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * std::cos(a[i]);
        break;
      }
      case Op::Cos: {
        const Tensor& a = nodes_[n.in0].value;
        Tensor& ga = nodes_[n.in0].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i] * std::sin(a[i]);
        break;
      }
    }
  }
}

NodeId Graph::jvp(NodeId out, NodeId wrt, const Tensor& tangent) {
  check_id(out, "jvp");
  check_id(wrt, "jvp");
  if (!tangent.same_shape(nodes_[wrt].value)) {
    throw std::invalid_argument("jvp: tangent shape " + tangent.shape_str() +
                                " does not match node " + nodes_[wrt].value.shape_str());
  }
  if (out <= wrt) return zero_like(out);

  // tan[k] is the node carrying node k's directional derivative, or npos when
  // k does not depend on wrt (an implicit zero).
  constexpr NodeId npos = static_cast<NodeId>(-1);
  std::vector<NodeId> tan(out + 1, npos);
  tan[wrt] = leaf(tangent);

  // Emitted nodes get ids above `out`, so indexing nodes_[k] fresh each time
  // (never holding references across emissions) keeps this loop safe.
  for (NodeId k = wrt + 1; k <= out; ++k) {
    Op op = nodes_[k].op;
    NodeId a = nodes_[k].in0;
    NodeId b = nodes_[k].in1;
    std::size_t s0 = nodes_[k].i0, s1 = nodes_[k].i1, s2 = nodes_[k].i2;
    double c = nodes_[k].c;
    NodeId da = a <= out ? tan[a] : npos;
    NodeId db = b <= out ? tan[b] : npos;
    NodeId tk = npos;
    switch (op) {
      case Op::Leaf:
      case Op::ReluMask:
        break;
      case Op::MatVec: {
        NodeId t0 = da != npos ? matvec(da, b) : npos;
        NodeId t1 = db != npos ? matvec(a, db) : npos;
        tk = t0 == npos ? t1 : (t1 == npos ? t0 : add(t0, t1));
        break;
      }
      case Op::Add: {
        if (da != npos && db != npos) tk = add(da, db);
        else if (da != npos) tk = da;
        else if (db != npos) tk = db;
        break;
      }
      case Op::Sub: {
        if (da != npos && db != npos) tk = sub(da, db);
        else if (da != npos) tk = da;
        else if (db != npos) tk = scale(db, -1.0);
        break;
      }
      case Op::Mul: {
        NodeId t0 = da != npos ? mul(da, b) : npos;
        NodeId t1 = db != npos ? mul(a, db) : npos;
        tk = t0 == npos ? t1 : (t1 == npos ? t0 : add(t0, t1));
        break;
      }
      case Op::Scale:
        if (da != npos) tk = scale(da, c);
        break;
      case Op::Relu:
        if (da != npos) tk = mul(relu_mask(a), da);
        break;
      case Op::Concat:
        if (da != npos || db != npos) {
          NodeId t0 = da != npos ? da : zero_like(a);
          NodeId t1 = db != npos ? db : zero_like(b);
          tk = concat(t0, t1);
        }
        break;
      case Op::Slice:
        if (da != npos) tk = slice(da, s0, s1, s2);
        break;
      case Op::Interleave:
        if (da != npos || db != npos) {
          NodeId t0 = da != npos ? da : zero_like(a);
          NodeId t1 = db != npos ? db : zero_like(b);
          tk = interleave(t0, t1);
        }
        break;
      case Op::Sum:
        if (da != npos) tk = sum(da);
        break;
      case Op::Exp:
        if (da != npos) tk = mul(k, da);
        break;
      case Op::Sin:
        if (da != npos) tk = mul(cos(a), da);
        break;
      case Op::Cos:
        if (da != npos) tk = scale(mul(sin(a), da), -1.0);
        break;
    }
    tan[k] = tk;
  }

  if (tan[out] == npos) return zero_like(out);
  return tan[out];
}

const Tensor& Graph::value(NodeId id) const {
  check_id(id, "value");
  return nodes_[id].value;
}

const Tensor& Graph::grad(NodeId id) const {
  check_id(id, "grad");
  return nodes_[id].grad;
}

const Node& Graph::node(NodeId id) const {
  check_id(id, "node");
  return nodes_[id];
}

}  // namespace kmpc
