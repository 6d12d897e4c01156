#pragma once

#include <string>
#include <utility>
#include <vector>

#include "srl/autograd.hpp"
#include "srl/ndarray.hpp"
#include "srl/rng.hpp"

namespace srl::nn {

struct Conv2dParams {
  NdArray kernel;  // out x in x kh x kw
  NdArray bias;    // out
  ag::Conv2dGeometry geometry;

  std::size_t out_channels() const { return kernel.dim(0); }
  std::size_t in_channels() const { return kernel.dim(1); }
};

struct LinearParams {
  NdArray weight;  // out x in
  NdArray bias;    // out

  std::size_t out_features() const { return weight.dim(0); }
  std::size_t in_features() const { return weight.dim(1); }
};

/// Gates stacked as [input, forget, cell, output] along the first axis.
struct LstmParams {
  NdArray w_ih;  // 4H x in
  NdArray w_hh;  // 4H x H
  NdArray bias;  // 4H
  std::size_t hidden = 0;

  std::size_t input_size() const { return w_ih.dim(1); }
};

/// Glorot-uniform kernel, zero bias. "Same" zero padding for odd kernels.
Conv2dParams make_conv2d(std::size_t out_ch, std::size_t in_ch, std::size_t kh,
                         std::size_t kw, std::size_t stride, Rng& rng);
LinearParams make_linear(std::size_t out, std::size_t in, Rng& rng);
/// Forget-gate bias starts at +1.
LstmParams make_lstm(std::size_t input_size, std::size_t hidden, Rng& rng);

/// Named, mutable view of a model's tensors, in a stable order.
using ParameterRefs = std::vector<std::pair<std::string, NdArray*>>;

void append_refs(ParameterRefs& refs, const std::string& prefix,
                 Conv2dParams& p);
void append_refs(ParameterRefs& refs, const std::string& prefix,
                 LinearParams& p);
void append_refs(ParameterRefs& refs, const std::string& prefix,
                 LstmParams& p);

/// Puts model tensors into a graph, as named parameters when trainable and
/// as constants otherwise.
class Binder {
 public:
  Binder(ag::Graph& graph, std::string prefix, bool trainable)
      : graph_(graph), prefix_(std::move(prefix)), trainable_(trainable) {}

  ag::Var operator()(const std::string& name, const NdArray& value) const;
  ag::Graph& graph() const { return graph_; }

 private:
  ag::Graph& graph_;
  std::string prefix_;
  bool trainable_;
};

struct Conv2dVars {
  ag::Var kernel, bias;
  ag::Conv2dGeometry geometry;
};
struct LinearVars {
  ag::Var weight, bias;
};
struct LstmVars {
  ag::Var w_ih, w_hh, bias;
  std::size_t hidden = 0;
};

Conv2dVars bind(const Binder& b, const std::string& name, const Conv2dParams& p);
LinearVars bind(const Binder& b, const std::string& name, const LinearParams& p);
LstmVars bind(const Binder& b, const std::string& name, const LstmParams& p);

ag::Var conv2d(ag::Var x, const Conv2dVars& p);
ag::Var linear(ag::Var x, const LinearVars& p);
/// Hidden state per step, (T x hidden). h0 and c0 have length hidden.
ag::Var lstm(ag::Var sequence, const LstmVars& p, ag::Var h0, ag::Var c0);
ag::Var lstm(ag::Var sequence, const LstmVars& p);

// Value-level conveniences.
NdArray conv2d(const NdArray& input, const Conv2dParams& p);
NdArray linear(const NdArray& input, const LinearParams& p);
NdArray lstm(const NdArray& sequence, const LstmParams& p, const NdArray& h0,
             const NdArray& c0);
NdArray l2_normalize(const NdArray& v);

}  // namespace srl::nn
