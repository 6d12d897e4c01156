#include "srl/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace srl::ag {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

CMapMat cmat(const NdArray& a, std::size_t rows, std::size_t cols) {
  return CMapMat(a.ptr(), static_cast<Eigen::Index>(rows),
                 static_cast<Eigen::Index>(cols));
}
MapMat mmat(NdArray& a, std::size_t rows, std::size_t cols) {
  return MapMat(a.ptr(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}
CMapVec cvec(const NdArray& a) {
  return CMapVec(a.ptr(), static_cast<Eigen::Index>(a.size()));
}
MapVec mvec(NdArray& a) {
  return MapVec(a.ptr(), static_cast<Eigen::Index>(a.size()));
}

[[noreturn]] void shape_error(const std::string& what, const NdArray& a,
                              const NdArray& b) {
  throw std::invalid_argument(what + ": shape mismatch " +
                              shape_to_string(a.shape()) + " vs " +
                              shape_to_string(b.shape()));
}

void require_rank(const NdArray& a, std::size_t rank, const char* what) {
  if (a.rank() != rank)
    throw std::invalid_argument(std::string(what) + ": expected rank " +
                                std::to_string(rank) + ", got shape " +
                                shape_to_string(a.shape()));
}

Graph& same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph)
    throw std::invalid_argument("operands belong to different graphs");
  return *a.graph;
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <class F>
Var unary(Var a, OpKind kind, F f, std::function<double(double x, double y)> df) {
  return a.graph->apply(
      kind, {a},
      [f](const std::vector<const NdArray*>& in) {
        NdArray out(in[0]->shape());
        const auto& x = *in[0];
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
        return out;
      },
      [df](const NdArray& y, const NdArray& g,
           const std::vector<const NdArray*>& in,
           const std::vector<NdArray*>& grads) {
        if (!grads[0]) return;
        const auto& x = *in[0];
        auto& gx = *grads[0];
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * df(x[i], y[i]);
      });
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Parameter: return "parameter";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Log1p: return "log1p";
    case OpKind::MatVec: return "matvec";
    case OpKind::Linear: return "linear";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Reshape: return "reshape";
    case OpKind::Slice: return "slice";
    case OpKind::StackRows: return "stack_rows";
    case OpKind::ChannelsToFrames: return "channels_to_frames";
    case OpKind::MeanOverTime: return "mean_over_time";
    case OpKind::AppendColumns: return "append_columns";
    case OpKind::L2Normalize: return "l2_normalize";
    case OpKind::Distance: return "distance";
    case OpKind::Mse: return "mse";
    case OpKind::SoftmaxXent: return "softmax_cross_entropy";
    case OpKind::MaskApply: return "mask_apply";
    case OpKind::MaskResidual: return "mask_residual";
    case OpKind::Detach: return "detach";
    case OpKind::DebugWrongGrad: return "debug_wrong_grad";
  }
  return "unknown";
}

const NdArray& Var::value() const {
  const Node& n = graph->nodes_.at(id);
  if (!n.evaluated)
    throw std::logic_error("node #" + std::to_string(id) + " (" +
                           std::string(op_name(n.kind)) + ") has no value");
  return n.value;
}

// ---------------------------------------------------------------------------
// Graph

Var Graph::add_leaf(OpKind kind, std::string name, NdArray value, bool bound,
                    bool requires_grad) {
  if (!name.empty() && leaves_.count(name))
    throw std::invalid_argument("duplicate leaf name '" + name + "'");
  Node n;
  n.kind = kind;
  n.name = name;
  n.value = std::move(value);
  n.evaluated = bound;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  const NodeId id = nodes_.size() - 1;
  if (!name.empty()) leaves_[name] = id;
  return Var{this, id};
}

Var Graph::input(std::string name, NdArray value) {
  return add_leaf(OpKind::Input, std::move(name), std::move(value), true, false);
}

Var Graph::input(std::string name, Shape shape) {
  return add_leaf(OpKind::Input, std::move(name), NdArray(std::move(shape)),
                  false, false);
}

Var Graph::parameter(std::string name, NdArray value) {
  if (name.empty()) throw std::invalid_argument("parameter needs a name");
  return add_leaf(OpKind::Parameter, std::move(name), std::move(value), true,
                  true);
}

Var Graph::constant(NdArray value) {
  return add_leaf(OpKind::Constant, {}, std::move(value), true, false);
}

Var Graph::leaf(const std::string& name) {
  auto it = leaves_.find(name);
  if (it == leaves_.end())
    throw std::invalid_argument("no leaf named '" + name + "'");
  return Var{this, it->second};
}

void Graph::evaluate(Node& node, NodeId id) {
  std::vector<const NdArray*> in;
  in.reserve(node.parents.size());
  for (auto p : node.parents) in.push_back(&nodes_[p].value);
  try {
    node.value = node.eval(in);
  } catch (const std::exception& e) {
    throw std::invalid_argument("node #" + std::to_string(id) + " (" +
                                std::string(op_name(node.kind)) +
                                "): " + e.what());
  }
  node.evaluated = true;
}

Var Graph::apply(OpKind kind, const std::vector<Var>& parents, EvalFn eval,
                 BackFn backprop) {
  Node n;
  n.kind = kind;
  n.eval = std::move(eval);
  n.backprop = std::move(backprop);
  bool ready = true;
  for (const auto& p : parents) {
    if (p.graph != this)
      throw std::invalid_argument(std::string(op_name(kind)) +
                                  ": operand from another graph");
    n.parents.push_back(p.id);
    const Node& pn = nodes_.at(p.id);
    ready = ready && pn.evaluated;
    n.requires_grad = n.requires_grad || pn.requires_grad;
  }
  if (kind == OpKind::Detach) n.requires_grad = false;
  nodes_.push_back(std::move(n));
  const NodeId id = nodes_.size() - 1;
  if (ready) evaluate(nodes_[id], id);
  return Var{this, id};
}

const NdArray& Graph::forward(const Bindings& bindings, Var output) {
  if (output.graph != this)
    throw std::invalid_argument("forward: output from another graph");
  for (const auto& [name, value] : bindings) {
    auto it = leaves_.find(name);
    if (it == leaves_.end())
      throw std::invalid_argument("forward: no input named '" + name + "'");
    Node& n = nodes_[it->second];
    if (n.evaluated && !n.value.same_shape(value))
      throw std::invalid_argument("forward: binding '" + name + "' has shape " +
                                  shape_to_string(value.shape()) +
                                  ", expected " +
                                  shape_to_string(n.value.shape()));
    n.value = value;
    n.evaluated = true;
  }
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (n.kind == OpKind::Input || n.kind == OpKind::Parameter) {
      if (!n.evaluated)
        throw std::invalid_argument("forward: unbound input '" + n.name + "'");
      continue;
    }
    if (n.kind == OpKind::Constant) continue;
    evaluate(n, id);
  }
  return nodes_[output.id].value;
}

Gradients Graph::backward(Var output) {
  if (output.graph != this)
    throw std::invalid_argument("backward: output from another graph");
  Node& out = nodes_.at(output.id);
  if (!out.evaluated)
    throw std::logic_error("backward: forward has not been run");
  if (out.value.size() != 1)
    throw std::invalid_argument("backward: output is not scalar, shape " +
                                shape_to_string(out.value.shape()));
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = NdArray();
  }
  out.grad = NdArray(out.value.shape(), 1.0);
  out.has_grad = true;

  std::vector<const NdArray*> in;
  std::vector<NdArray*> grads;
  for (NodeId id = output.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.requires_grad || !n.backprop) continue;
    in.clear();
    grads.clear();
    for (auto p : n.parents) {
      Node& pn = nodes_[p];
      in.push_back(&pn.value);
      if (pn.requires_grad) {
        if (!pn.has_grad) {
          pn.grad = NdArray(pn.value.shape());
          pn.has_grad = true;
        }
        grads.push_back(&pn.grad);
      } else {
        grads.push_back(nullptr);
      }
    }
    n.backprop(n.value, n.grad, in, grads);
  }

  Gradients result;
  for (auto& n : nodes_) {
    if (n.kind != OpKind::Parameter) continue;
    result[n.name] = n.has_grad ? n.grad : NdArray(n.value.shape());
  }
  return result;
}

NdArray Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.has_grad ? n.grad : NdArray(n.value.shape());
}

std::vector<NodeId> Graph::parameters() const {
  std::vector<NodeId> ids;
  for (NodeId id = 0; id < nodes_.size(); ++id)
    if (nodes_[id].kind == OpKind::Parameter) ids.push_back(id);
  return ids;
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) {
  return same_graph(a, b).apply(
      OpKind::Add, {a, b},
      [](const std::vector<const NdArray*>& in) {
        if (!in[0]->same_shape(*in[1])) shape_error("add", *in[0], *in[1]);
        NdArray out = *in[0];
        out += *in[1];
        return out;
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>&,
         const std::vector<NdArray*>& grads) {
        if (grads[0]) *grads[0] += g;
        if (grads[1]) *grads[1] += g;
      });
}

Var sub(Var a, Var b) {
  return same_graph(a, b).apply(
      OpKind::Sub, {a, b},
      [](const std::vector<const NdArray*>& in) {
        if (!in[0]->same_shape(*in[1])) shape_error("sub", *in[0], *in[1]);
        NdArray out = *in[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] -= (*in[1])[i];
        return out;
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>&,
         const std::vector<NdArray*>& grads) {
        if (grads[0]) *grads[0] += g;
        if (grads[1])
          for (std::size_t i = 0; i < g.size(); ++i) (*grads[1])[i] -= g[i];
      });
}

Var mul(Var a, Var b) {
  return same_graph(a, b).apply(
      OpKind::Mul, {a, b},
      [](const std::vector<const NdArray*>& in) {
        if (!in[0]->same_shape(*in[1])) shape_error("mul", *in[0], *in[1]);
        NdArray out = *in[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*in[1])[i];
        return out;
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>& in,
         const std::vector<NdArray*>& grads) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (grads[0]) (*grads[0])[i] += g[i] * (*in[1])[i];
          if (grads[1]) (*grads[1])[i] += g[i] * (*in[0])[i];
        }
      });
}

Var scale(Var a, double c) {
  return unary(
      a, OpKind::Scale, [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

Var relu(Var a) {
  return unary(
      a, OpKind::Relu, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      a, OpKind::Sigmoid, [](double x) { return sigmoid_scalar(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, OpKind::Tanh, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var log1p(Var a) {
  return unary(
      a, OpKind::Log1p,
      [](double x) {
        if (x <= -1.0) throw std::domain_error("log1p of value <= -1");
        return std::log1p(x);
      },
      [](double x, double) { return 1.0 / (1.0 + x); });
}

Var debug_wrong_grad(Var a) {
  return unary(
      a, OpKind::DebugWrongGrad, [](double x) { return x * x; },
      [](double x, double) { return x; });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var a) {
  return a.graph->apply(
      OpKind::Sum, {a},
      [](const std::vector<const NdArray*>& in) {
        double s = 0.0;
        for (double v : in[0]->data()) s += v;
        return NdArray::scalar(s);
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>&,
         const std::vector<NdArray*>& grads) {
        if (!grads[0]) return;
        for (auto& v : grads[0]->data()) v += g[0];
      });
}

Var mean(Var a) {
  return a.graph->apply(
      OpKind::Mean, {a},
      [](const std::vector<const NdArray*>& in) {
        double s = 0.0;
        for (double v : in[0]->data()) s += v;
        return NdArray::scalar(s / static_cast<double>(in[0]->size()));
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>& in,
         const std::vector<NdArray*>& grads) {
        if (!grads[0]) return;
        const double d = g[0] / static_cast<double>(in[0]->size());
        for (auto& v : grads[0]->data()) v += d;
      });
}

// ---------------------------------------------------------------------------
// Matrix products

Var matvec(Var w, Var v) {
  return same_graph(w, v).apply(
      OpKind::MatVec, {w, v},
      [](const std::vector<const NdArray*>& in) {
        const auto& W = *in[0];
        const auto& x = *in[1];
        require_rank(W, 2, "matvec weight");
        require_rank(x, 1, "matvec vector");
        if (W.dim(1) != x.dim(0)) shape_error("matvec", W, x);
        NdArray out(Shape{W.dim(0)});
        mvec(out).noalias() = cmat(W, W.dim(0), W.dim(1)) * cvec(x);
        return out;
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>& in,
         const std::vector<NdArray*>& grads) {
        const auto& W = *in[0];
        const auto m = W.dim(0), n = W.dim(1);
        if (grads[0])
          mmat(*grads[0], m, n).noalias() += cvec(g) * cvec(*in[1]).transpose();
        if (grads[1])
          mvec(*grads[1]).noalias() += cmat(W, m, n).transpose() * cvec(g);
      });
}

Var linear(Var x, Var w, Var b) {
  same_graph(x, w);
  same_graph(x, b);
  return x.graph->apply(
      OpKind::Linear, {x, w, b},
      [](const std::vector<const NdArray*>& in) {
        const auto& X = *in[0];
        const auto& W = *in[1];
        const auto& B = *in[2];
        require_rank(W, 2, "linear weight");
        require_rank(B, 1, "linear bias");
        if (B.dim(0) != W.dim(0)) shape_error("linear bias", W, B);
        if (X.rank() != 1 && X.rank() != 2)
          throw std::invalid_argument("linear: input must be rank 1 or 2");
        const std::size_t in_dim = X.shape().back();
        const std::size_t rows = X.rank() == 1 ? 1 : X.dim(0);
        if (in_dim != W.dim(1)) shape_error("linear", X, W);
        const std::size_t out_dim = W.dim(0);
        NdArray out(X.rank() == 1 ? Shape{out_dim} : Shape{rows, out_dim});
        auto O = mmat(out, rows, out_dim);
        O.noalias() = cmat(X, rows, in_dim) * cmat(W, out_dim, in_dim).transpose();
        O.rowwise() += cvec(B).transpose();
        return out;
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>& in,
         const std::vector<NdArray*>& grads) {
        const auto& X = *in[0];
        const auto& W = *in[1];
        const std::size_t in_dim = W.dim(1), out_dim = W.dim(0);
        const std::size_t rows = X.rank() == 1 ? 1 : X.dim(0);
        auto G = cmat(g, rows, out_dim);
        if (grads[0])
          mmat(*grads[0], rows, in_dim).noalias() += G * cmat(W, out_dim, in_dim);
        if (grads[1])
          mmat(*grads[1], out_dim, in_dim).noalias() +=
              G.transpose() * cmat(X, rows, in_dim);
        if (grads[2]) {
          auto gb = grads[2]->data();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t o = 0; o < out_dim; ++o) gb[o] += G(r, o);
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvDims {
  std::size_t c, h, w, o, kh, kw, ho, wo;
};

ConvDims conv_dims(const NdArray& x, const NdArray& k, const NdArray& b,
                   const Conv2dGeometry& g) {
  require_rank(x, 3, "conv2d input");
  require_rank(k, 4, "conv2d kernel");
  require_rank(b, 1, "conv2d bias");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), k.dim(0), k.dim(2), k.dim(3), 0, 0};
  if (k.dim(1) != d.c)
    throw std::invalid_argument("conv2d: channel mismatch, input has " +
                                std::to_string(d.c) + ", kernel expects " +
                                std::to_string(k.dim(1)));
  if (b.dim(0) != d.o) shape_error("conv2d bias", k, b);
  if (g.stride_h == 0 || g.stride_w == 0)
    throw std::invalid_argument("conv2d: zero stride");
  if (d.h + 2 * g.pad_h < d.kh || d.w + 2 * g.pad_w < d.kw)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  d.ho = (d.h + 2 * g.pad_h - d.kh) / g.stride_h + 1;
  d.wo = (d.w + 2 * g.pad_w - d.kw) / g.stride_w + 1;
  return d;
}

// Output columns [lo, hi) whose input column ox * stride + j - pad is inside
// [0, w).
std::pair<std::size_t, std::size_t> valid_range(std::size_t j, std::size_t pad,
                                                std::size_t stride, std::size_t w,
                                                std::size_t wo) {
  const std::size_t lo = j >= pad ? 0 : (pad - j + stride - 1) / stride;
  const std::size_t hi =
      w + pad <= j ? 0 : std::min(wo, (w + pad - j + stride - 1) / stride);
  return {std::min(lo, hi), hi};
}

// cols: (C*kh*kw) x (Ho*Wo)
RowMat im2col(const NdArray& x, const ConvDims& d, const Conv2dGeometry& g) {
  RowMat cols(static_cast<Eigen::Index>(d.c * d.kh * d.kw),
              static_cast<Eigen::Index>(d.ho * d.wo));
  const double* src = x.ptr();
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t i = 0; i < d.kh; ++i)
      for (std::size_t j = 0; j < d.kw; ++j) {
        double* dst = cols.row(static_cast<Eigen::Index>((c * d.kh + i) * d.kw + j)).data();
        const auto [lo, hi] = valid_range(j, g.pad_w, g.stride_w, d.w, d.wo);
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + i) -
                                    static_cast<std::ptrdiff_t>(g.pad_h);
          double* out_row = dst + oy * d.wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) {
            std::fill(out_row, out_row + d.wo, 0.0);
            continue;
          }
          std::fill(out_row, out_row + lo, 0.0);
          std::fill(out_row + hi, out_row + d.wo, 0.0);
          const double* in_row = src + (c * d.h + static_cast<std::size_t>(iy)) * d.w;
          if (lo == hi) continue;
          if (g.stride_w == 1) {
            std::copy(in_row + (lo + j - g.pad_w), in_row + (hi + j - g.pad_w), out_row + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox)
              out_row[ox] = in_row[ox * g.stride_w + j - g.pad_w];
          }
        }
      }
  return cols;
}

void col2im_add(const RowMat& cols, NdArray& gx, const ConvDims& d,
                const Conv2dGeometry& g) {
  double* dst = gx.ptr();
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t i = 0; i < d.kh; ++i)
      for (std::size_t j = 0; j < d.kw; ++j) {
        const double* src =
            cols.row(static_cast<Eigen::Index>((c * d.kh + i) * d.kw + j)).data();
        const auto [lo, hi] = valid_range(j, g.pad_w, g.stride_w, d.w, d.wo);
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + i) -
                                    static_cast<std::ptrdiff_t>(g.pad_h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
          double* gx_row = dst + (c * d.h + static_cast<std::size_t>(iy)) * d.w;
          const double* src_row = src + oy * d.wo;
          for (std::size_t ox = lo; ox < hi; ++ox)
            gx_row[ox * g.stride_w + j - g.pad_w] += src_row[ox];
        }
      }
}

}  // namespace

Var conv2d(Var x, Var k, Var b, Conv2dGeometry geom) {
  same_graph(x, k);
  same_graph(x, b);
  return x.graph->apply(
      OpKind::Conv2d, {x, k, b},
      [geom](const std::vector<const NdArray*>& in) {
        const auto d = conv_dims(*in[0], *in[1], *in[2], geom);
        const RowMat cols = im2col(*in[0], d, geom);
        NdArray out(Shape{d.o, d.ho, d.wo});
        auto O = mmat(out, d.o, d.ho * d.wo);
        O.noalias() = cmat(*in[1], d.o, d.c * d.kh * d.kw) * cols;
        O.colwise() += cvec(*in[2]);
        return out;
      },
      [geom](const NdArray&, const NdArray& g,
             const std::vector<const NdArray*>& in,
             const std::vector<NdArray*>& grads) {
        const auto d = conv_dims(*in[0], *in[1], *in[2], geom);
        const std::size_t patch = d.c * d.kh * d.kw;
        auto G = cmat(g, d.o, d.ho * d.wo);
        if (grads[1]) {
          const RowMat cols = im2col(*in[0], d, geom);
          mmat(*grads[1], d.o, patch).noalias() += G * cols.transpose();
        }
        if (grads[2]) {
          auto gb = grads[2]->data();
          for (std::size_t o = 0; o < d.o; ++o) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d.ho * d.wo; ++j) acc += G(o, j);
            gb[o] += acc;
          }
        }
        if (grads[0]) {
          const RowMat gcols = cmat(*in[1], d.o, patch).transpose() * G;
          col2im_add(gcols, *grads[0], d, geom);
        }
      });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Var reshape(Var a, Shape shape) {
  return a.graph->apply(
      OpKind::Reshape, {a},
      [shape](const std::vector<const NdArray*>& in) {
        return in[0]->reshaped(shape);
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>&,
         const std::vector<NdArray*>& grads) {
        if (!grads[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
      });
}

Var slice(Var a, std::size_t start, std::size_t count) {
  return a.graph->apply(
      OpKind::Slice, {a},
      [start, count](const std::vector<const NdArray*>& in) {
        const auto& x = *in[0];
        if (x.rank() == 0) throw std::invalid_argument("slice of a scalar");
        if (count == 0 || start + count > x.dim(0))
          throw std::invalid_argument(
              "slice [" + std::to_string(start) + ", " +
              std::to_string(start + count) + ") out of range for shape " +
              shape_to_string(x.shape()));
        Shape s = x.shape();
        s[0] = count;
        const std::size_t inner = x.size() / x.dim(0);
        std::vector<double> v(x.values().begin() + static_cast<std::ptrdiff_t>(start * inner),
                              x.values().begin() + static_cast<std::ptrdiff_t>((start + count) * inner));
        return NdArray(std::move(s), std::move(v));
      },
      [start](const NdArray& y, const NdArray& g,
              const std::vector<const NdArray*>& in,
              const std::vector<NdArray*>& grads) {
        if (!grads[0]) return;
        const std::size_t inner = in[0]->size() / in[0]->dim(0);
        double* dst = grads[0]->ptr() + start * inner;
        for (std::size_t i = 0; i < y.size(); ++i) dst[i] += g[i];
      });
}

Var row(Var a, std::size_t index) {
  Var r = slice(a, index, 1);
  return reshape(r, Shape{r.shape()[1]});
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
  for (const auto& r : rows) same_graph(rows[0], r);
  return rows[0].graph->apply(
      OpKind::StackRows, rows,
      [](const std::vector<const NdArray*>& in) {
        const std::size_t n = in[0]->size();
        NdArray out(Shape{in.size(), n});
        for (std::size_t r = 0; r < in.size(); ++r) {
          require_rank(*in[r], 1, "stack_rows");
          if (in[r]->size() != n) shape_error("stack_rows", *in[0], *in[r]);
          std::copy(in[r]->ptr(), in[r]->ptr() + n, out.ptr() + r * n);
        }
        return out;
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>& in,
         const std::vector<NdArray*>& grads) {
        const std::size_t n = in[0]->size();
        for (std::size_t r = 0; r < grads.size(); ++r) {
          if (!grads[r]) continue;
          for (std::size_t i = 0; i < n; ++i) (*grads[r])[i] += g[r * n + i];
        }
      });
}

Var channels_to_frames(Var a) {
  return a.graph->apply(
      OpKind::ChannelsToFrames, {a},
      [](const std::vector<const NdArray*>& in) {
        const auto& x = *in[0];
        require_rank(x, 3, "channels_to_frames");
        const std::size_t C = x.dim(0), T = x.dim(1), F = x.dim(2);
        NdArray out(Shape{T, C * F});
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t t = 0; t < T; ++t)
            std::copy(x.ptr() + (c * T + t) * F, x.ptr() + (c * T + t + 1) * F,
                      out.ptr() + t * C * F + c * F);
        return out;
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>& in,
         const std::vector<NdArray*>& grads) {
        if (!grads[0]) return;
        const auto& x = *in[0];
        const std::size_t C = x.dim(0), T = x.dim(1), F = x.dim(2);
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t t = 0; t < T; ++t) {
            double* dst = grads[0]->ptr() + (c * T + t) * F;
            const double* src = g.ptr() + t * C * F + c * F;
            for (std::size_t f = 0; f < F; ++f) dst[f] += src[f];
          }
      });
}

Var mean_over_time(Var a) {
  return a.graph->apply(
      OpKind::MeanOverTime, {a},
      [](const std::vector<const NdArray*>& in) {
        const auto& x = *in[0];
        require_rank(x, 3, "mean_over_time");
        const std::size_t C = x.dim(0), T = x.dim(1), F = x.dim(2);
        NdArray out(Shape{C * F});
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t f = 0; f < F; ++f)
              out[c * F + f] += x[(c * T + t) * F + f];
        for (auto& v : out.data()) v /= static_cast<double>(T);
        return out;
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>& in,
         const std::vector<NdArray*>& grads) {
        if (!grads[0]) return;
        const auto& x = *in[0];
        const std::size_t C = x.dim(0), T = x.dim(1), F = x.dim(2);
        const double inv = 1.0 / static_cast<double>(T);
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t f = 0; f < F; ++f)
              (*grads[0])[(c * T + t) * F + f] += g[c * F + f] * inv;
      });
}

Var append_columns(Var x, Var v) {
  return same_graph(x, v).apply(
      OpKind::AppendColumns, {x, v},
      [](const std::vector<const NdArray*>& in) {
        const auto& X = *in[0];
        const auto& V = *in[1];
        require_rank(X, 2, "append_columns matrix");
        require_rank(V, 1, "append_columns vector");
        const std::size_t T = X.dim(0), A = X.dim(1), B = V.dim(0);
        NdArray out(Shape{T, A + B});
        for (std::size_t t = 0; t < T; ++t) {
          std::copy(X.ptr() + t * A, X.ptr() + (t + 1) * A, out.ptr() + t * (A + B));
          std::copy(V.ptr(), V.ptr() + B, out.ptr() + t * (A + B) + A);
        }
        return out;
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>& in,
         const std::vector<NdArray*>& grads) {
        const std::size_t T = in[0]->dim(0), A = in[0]->dim(1), B = in[1]->dim(0);
        for (std::size_t t = 0; t < T; ++t) {
          const double* src = g.ptr() + t * (A + B);
          if (grads[0])
            for (std::size_t i = 0; i < A; ++i) (*grads[0])[t * A + i] += src[i];
          if (grads[1])
            for (std::size_t i = 0; i < B; ++i) (*grads[1])[i] += src[A + i];
        }
      });
}

// ---------------------------------------------------------------------------
// Embedding geometry and losses

Var l2_normalize(Var v, double eps) {
  return v.graph->apply(
      OpKind::L2Normalize, {v},
      [eps](const std::vector<const NdArray*>& in) {
        const auto& x = *in[0];
        const double n = cvec(x).norm();
        NdArray out(x.shape());
        if (n <= eps) return out;
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / n;
        return out;
      },
      [eps](const NdArray& y, const NdArray& g,
            const std::vector<const NdArray*>& in,
            const std::vector<NdArray*>& grads) {
        if (!grads[0]) return;
        const double n = cvec(*in[0]).norm();
        if (n <= eps) return;
        const double yg = cvec(y).dot(cvec(g));
        for (std::size_t i = 0; i < y.size(); ++i)
          (*grads[0])[i] += (g[i] - y[i] * yg) / n;
      });
}

Var distance(Var a, Var b) {
  return same_graph(a, b).apply(
      OpKind::Distance, {a, b},
      [](const std::vector<const NdArray*>& in) {
        if (!in[0]->same_shape(*in[1])) shape_error("distance", *in[0], *in[1]);
        return NdArray::scalar((cvec(*in[0]) - cvec(*in[1])).norm());
      },
      [](const NdArray& y, const NdArray& g, const std::vector<const NdArray*>& in,
         const std::vector<NdArray*>& grads) {
        const double d = y[0];
        if (d == 0.0) return;
        for (std::size_t i = 0; i < in[0]->size(); ++i) {
          const double u = ((*in[0])[i] - (*in[1])[i]) / d * g[0];
          if (grads[0]) (*grads[0])[i] += u;
          if (grads[1]) (*grads[1])[i] -= u;
        }
      });
}

Var mse(Var a, Var b) {
  return same_graph(a, b).apply(
      OpKind::Mse, {a, b},
      [](const std::vector<const NdArray*>& in) {
        if (!in[0]->same_shape(*in[1])) shape_error("mse", *in[0], *in[1]);
        double s = 0.0;
        for (std::size_t i = 0; i < in[0]->size(); ++i) {
          const double e = (*in[0])[i] - (*in[1])[i];
          s += e * e;
        }
        return NdArray::scalar(s / static_cast<double>(in[0]->size()));
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>& in,
         const std::vector<NdArray*>& grads) {
        const double c = 2.0 * g[0] / static_cast<double>(in[0]->size());
        for (std::size_t i = 0; i < in[0]->size(); ++i) {
          const double u = c * ((*in[0])[i] - (*in[1])[i]);
          if (grads[0]) (*grads[0])[i] += u;
          if (grads[1]) (*grads[1])[i] -= u;
        }
      });
}

Var softmax_cross_entropy(Var logits, std::size_t label) {
  return logits.graph->apply(
      OpKind::SoftmaxXent, {logits},
      [label](const std::vector<const NdArray*>& in) {
        const auto& z = *in[0];
        require_rank(z, 1, "softmax_cross_entropy");
        if (label >= z.size())
          throw std::invalid_argument("softmax_cross_entropy: label " +
                                      std::to_string(label) + " out of range");
        const double m = cvec(z).maxCoeff();
        double s = 0.0;
        for (double v : z.data()) s += std::exp(v - m);
        return NdArray::scalar(m + std::log(s) - z[label]);
      },
      [label](const NdArray&, const NdArray& g,
              const std::vector<const NdArray*>& in,
              const std::vector<NdArray*>& grads) {
        if (!grads[0]) return;
        const auto& z = *in[0];
        const double m = cvec(z).maxCoeff();
        double s = 0.0;
        for (double v : z.data()) s += std::exp(v - m);
        for (std::size_t i = 0; i < z.size(); ++i) {
          const double p = std::exp(z[i] - m) / s;
          (*grads[0])[i] += g[0] * (p - (i == label ? 1.0 : 0.0));
        }
      });
}

namespace {

// r = x - fl(m x) and e = x - r. Whichever of fl(m x), r is >= x/2 makes the
// other subtraction exact, so fl(e + r) == x.
inline double residual_part(double m, double x) { return x - m * x; }
inline double masked_part(double m, double x) { return x - residual_part(m, x); }

}  // namespace

Var mask_apply(Var mask, Var x) {
  return same_graph(mask, x).apply(
      OpKind::MaskApply, {mask, x},
      [](const std::vector<const NdArray*>& in) {
        if (!in[0]->same_shape(*in[1])) shape_error("mask_apply", *in[0], *in[1]);
        NdArray out(in[1]->shape());
        for (std::size_t i = 0; i < out.size(); ++i)
          out[i] = masked_part((*in[0])[i], (*in[1])[i]);
        return out;
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>& in,
         const std::vector<NdArray*>& grads) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (grads[0]) (*grads[0])[i] += g[i] * (*in[1])[i];
          if (grads[1]) (*grads[1])[i] += g[i] * (*in[0])[i];
        }
      });
}

Var mask_residual(Var mask, Var x) {
  return same_graph(mask, x).apply(
      OpKind::MaskResidual, {mask, x},
      [](const std::vector<const NdArray*>& in) {
        if (!in[0]->same_shape(*in[1]))
          shape_error("mask_residual", *in[0], *in[1]);
        NdArray out(in[1]->shape());
        for (std::size_t i = 0; i < out.size(); ++i)
          out[i] = residual_part((*in[0])[i], (*in[1])[i]);
        return out;
      },
      [](const NdArray&, const NdArray& g, const std::vector<const NdArray*>& in,
         const std::vector<NdArray*>& grads) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (grads[0]) (*grads[0])[i] -= g[i] * (*in[1])[i];
          if (grads[1]) (*grads[1])[i] += g[i] * (1.0 - (*in[0])[i]);
        }
      });
}

Var detach(Var a) {
  return a.graph->apply(
      OpKind::Detach, {a},
      [](const std::vector<const NdArray*>& in) { return *in[0]; }, nullptr);
}

// ---------------------------------------------------------------------------
// Finite-difference check

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

GradCheckReport grad_check(Graph& graph, Var output, const Bindings& bindings,
                           const GradCheckOptions& options) {
  if (options.step < 1e-6 || options.step > 1e-3)
    throw std::invalid_argument("grad_check: step must lie in [1e-6, 1e-3]");
  graph.forward(bindings, output);
  const Gradients analytic = graph.backward(output);

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (NodeId id : graph.parameters()) {
    const Node& n = graph.node(id);
    const std::string name = n.name;
    NdArray base = n.value;
    const NdArray& grad = analytic.at(name);

    std::vector<std::size_t> idx(base.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (options.max_entries != 0 && idx.size() > options.max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_entries);
      std::sort(idx.begin(), idx.end());
    }

    GradCheckEntry entry;
    entry.name = name;
    for (std::size_t i : idx) {
      NdArray probe = base;
      probe[i] = base[i] + options.step;
      const double plus = graph.forward({{name, probe}}, output).item();
      probe[i] = base[i] - options.step;
      const double minus = graph.forward({{name, probe}}, output).item();
      const double fd = (plus - minus) / (2.0 * options.step);
      if (!std::isfinite(fd))
        throw std::runtime_error("grad_check: non-finite difference for '" +
                                 name + "'");
      const double err = std::abs(grad[i] - fd) / std::max(1.0, std::abs(fd));
      entry.max_rel_error = std::max(entry.max_rel_error, err);
      ++entry.checked;
    }
    graph.forward({{name, base}}, output);
    entry.passed = entry.max_rel_error < options.tolerance;
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace srl::ag
