#pragma once

#include <cstddef>
#include <vector>

#include "kmpc/tensor.hpp"

namespace kmpc {

using NodeId = std::size_t;

enum class Op {
  Leaf,
  MatVec,
  Add,
  Sub,
  Mul,
  Scale,
  Relu,
  ReluMask,
  Concat,
  Slice,
  Interleave,
  Sum,
  Exp,
  Sin,
  Cos,
};

const char* op_name(Op op);

struct Node {
  Op op = Op::Leaf;
  NodeId in0 = 0;
  NodeId in1 = 0;
  std::size_t i0 = 0;  // slice start
  std::size_t i1 = 0;  // slice length
  std::size_t i2 = 1;  // slice stride
  double c = 0.0;      // scale factor
  Tensor value;
  Tensor grad;
  bool trainable = false;
};

/// Append-only computation tape over float64 tensors. Nodes are evaluated
/// eagerly as they are added; backward() runs one deterministic reverse sweep
/// with fixed accumulation order, and jvp() builds a directional-derivative
/// subgraph out of ordinary nodes so results stay differentiable.
class Graph {
 public:
  NodeId leaf(Tensor value, bool trainable = false);
  NodeId matvec(NodeId m, NodeId v);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId relu(NodeId a);
  NodeId relu_mask(NodeId a);
  NodeId concat(NodeId a, NodeId b);
  NodeId slice(NodeId a, std::size_t start, std::size_t len, std::size_t stride = 1);
  NodeId interleave(NodeId even, NodeId odd);
  NodeId sum(NodeId a);
  NodeId exp(NodeId a);
  NodeId sin(NodeId a);
  NodeId cos(NodeId a);

  NodeId affine(NodeId w, NodeId b, NodeId x);
  NodeId dot(NodeId a, NodeId b);
  NodeId mse(NodeId a, NodeId b);
  NodeId sum_sq(NodeId a);
  NodeId zero_like(NodeId a);

  /// Directional derivative of `out` along `tangent` injected at `wrt`,
  /// returned as a new node so it can feed further graph construction.
  NodeId jvp(NodeId out, NodeId wrt, const Tensor& tangent);

  /// Reverse sweep from a scalar root. Zeroes every gradient first.
  void backward(NodeId root);

  /// Replays the forward pass in tape order, picking up changed leaf values.
  void recompute();

  void set_value(NodeId id, const Tensor& v);

  const Tensor& value(NodeId id) const;
  const Tensor& grad(NodeId id) const;
  const Node& node(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;

  NodeId push(Node n);
  void eval_node(std::size_t k);
  void check_id(NodeId id, const char* who) const;
};

}  // namespace kmpc
