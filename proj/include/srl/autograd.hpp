#pragma once

// Define-by-run reverse-mode differentiation over NdArray values.
//
// Every op evaluates eagerly as soon as its parents hold values, and records
// how to recompute itself so a finished graph can be replayed with new leaf
// bindings (used by the finite-difference checker).

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "srl/ndarray.hpp"

namespace srl::ag {

enum class OpKind {
  Input,
  Parameter,
  Constant,
  Add,
  Sub,
  Mul,
  Scale,
  Sum,
  Mean,
  Relu,
  Sigmoid,
  Tanh,
  Log1p,
  MatVec,
  Linear,
  Conv2d,
  Reshape,
  Slice,
  StackRows,
  ChannelsToFrames,
  MeanOverTime,
  AppendColumns,
  L2Normalize,
  Distance,
  Mse,
  SoftmaxXent,
  MaskApply,
  MaskResidual,
  Detach,
  DebugWrongGrad,
};

std::string_view op_name(OpKind kind);

using NodeId = std::size_t;
using Bindings = std::map<std::string, NdArray>;
using Gradients = std::map<std::string, NdArray>;

class Graph;

/// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  NodeId id = 0;

  const NdArray& value() const;
  const Shape& shape() const { return value().shape(); }
};

using EvalFn = std::function<NdArray(const std::vector<const NdArray*>&)>;
// (node value, node grad, parent values, parent grad buffers or nullptr)
using BackFn = std::function<void(const NdArray&, const NdArray&,
                                  const std::vector<const NdArray*>&,
                                  const std::vector<NdArray*>&)>;

struct Node {
  OpKind kind = OpKind::Constant;
  std::vector<NodeId> parents;
  std::string name;
  NdArray value;
  NdArray grad;
  bool evaluated = false;
  bool has_grad = false;
  bool requires_grad = false;
  EvalFn eval;
  BackFn backprop;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Named input bound to a value. Inputs receive no gradient.
  Var input(std::string name, NdArray value);
  /// Named input placeholder; must be bound by forward() before use.
  Var input(std::string name, Shape shape);
  /// Named trainable leaf; backward() reports its gradient.
  Var parameter(std::string name, NdArray value);
  Var constant(NdArray value);

  Var apply(OpKind kind, const std::vector<Var>& parents, EvalFn eval,
            BackFn backprop);

  /// Rebinds the named leaves and re-evaluates every node in insertion
  /// order. Returns the value of `output`.
  const NdArray& forward(const Bindings& bindings, Var output);

  /// Gradient of the scalar `output` with respect to every parameter.
  Gradients backward(Var output);

  /// Gradient accumulated at `v` by the last backward(), zeros if none.
  NdArray grad(Var v) const;

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  std::vector<NodeId> parameters() const;
  Var leaf(const std::string& name);

 private:
  friend struct Var;
  Var add_leaf(OpKind kind, std::string name, NdArray value, bool bound,
               bool requires_grad);
  void evaluate(Node& node, NodeId id);

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> leaves_;
};

// Elementwise, operands of identical shape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var log1p(Var a);

// Reductions to a rank-0 scalar.
Var sum(Var a);
Var mean(Var a);

/// (m x n) . (n) -> (m)
Var matvec(Var w, Var v);
/// x: (in) or (T x in); w: (out x in); b: (out).
Var linear(Var x, Var w, Var b);

struct Conv2dGeometry {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};
/// Cross-correlation. x: (C x H x W); k: (O x C x kh x kw); b: (O).
Var conv2d(Var x, Var k, Var b, Conv2dGeometry geom);

Var reshape(Var a, Shape shape);
/// Rows [start, start + count) along the first axis.
Var slice(Var a, std::size_t start, std::size_t count);
/// Row `index` of a matrix as a vector.
Var row(Var a, std::size_t index);
Var stack_rows(const std::vector<Var>& rows);
/// (C x T x F) -> (T x C*F)
Var channels_to_frames(Var a);
/// (C x T x F) -> (C*F), mean over T.
Var mean_over_time(Var a);
/// (T x a), (b) -> (T x (a + b)), `v` repeated on every row.
Var append_columns(Var x, Var v);

inline constexpr double kNormEpsilon = 1e-12;
/// v / |v|; the zero vector when |v| <= eps.
Var l2_normalize(Var v, double eps = kNormEpsilon);
/// Euclidean distance |a - b|; zero subgradient at a == b.
Var distance(Var a, Var b);
/// mean((a - b)^2)
Var mse(Var a, Var b);
/// -log softmax(logits)[label]
Var softmax_cross_entropy(Var logits, std::size_t label);

/// mask * x, rounded so that mask_apply + mask_residual == x exactly.
Var mask_apply(Var mask, Var x);
/// (1 - mask) * x, the complement of mask_apply.
Var mask_residual(Var mask, Var x);

/// Same value, gradient blocked.
Var detach(Var a);

/// x^2 with a deliberately wrong derivative (x instead of 2x). Used as a
/// negative control for the gradient checker.
Var debug_wrong_grad(Var a);

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Entries checked per parameter; 0 checks all of them.
  std::size_t max_entries = 0;
  std::uint64_t seed = 1;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed = true;
  double max_rel_error() const;
};

/// Compares backward() against central differences for every parameter of
/// `graph`. Error per entry is |analytic - fd| / max(1, |fd|).
GradCheckReport grad_check(Graph& graph, Var output, const Bindings& bindings,
                           const GradCheckOptions& options = {});

}  // namespace srl::ag
