#include "srl/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace srl::nn {

namespace {

NdArray glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  NdArray a(std::move(shape));
  for (auto& v : a.data()) v = rng.uniform(-limit, limit);
  return a;
}

}  // namespace

Conv2dParams make_conv2d(std::size_t out_ch, std::size_t in_ch, std::size_t kh,
                         std::size_t kw, std::size_t stride, Rng& rng) {
  if (kh == 0 || kw == 0 || out_ch == 0 || in_ch == 0)
    throw std::invalid_argument("make_conv2d: zero extent");
  Conv2dParams p;
  p.kernel = glorot(Shape{out_ch, in_ch, kh, kw}, in_ch * kh * kw,
                    out_ch * kh * kw, rng);
  p.bias = NdArray(Shape{out_ch});
  p.geometry = {stride, stride, (kh - 1) / 2, (kw - 1) / 2};
  return p;
}

LinearParams make_linear(std::size_t out, std::size_t in, Rng& rng) {
  LinearParams p;
  p.weight = glorot(Shape{out, in}, in, out, rng);
  p.bias = NdArray(Shape{out});
  return p;
}

LstmParams make_lstm(std::size_t input_size, std::size_t hidden, Rng& rng) {
  LstmParams p;
  p.hidden = hidden;
  p.w_ih = glorot(Shape{4 * hidden, input_size}, input_size, hidden, rng);
  p.w_hh = glorot(Shape{4 * hidden, hidden}, hidden, hidden, rng);
  p.bias = NdArray(Shape{4 * hidden});
  for (std::size_t i = hidden; i < 2 * hidden; ++i) p.bias[i] = 1.0;
  return p;
}

void append_refs(ParameterRefs& refs, const std::string& prefix,
                 Conv2dParams& p) {
  refs.emplace_back(prefix + ".kernel", &p.kernel);
  refs.emplace_back(prefix + ".bias", &p.bias);
}

void append_refs(ParameterRefs& refs, const std::string& prefix,
                 LinearParams& p) {
  refs.emplace_back(prefix + ".weight", &p.weight);
  refs.emplace_back(prefix + ".bias", &p.bias);
}

void append_refs(ParameterRefs& refs, const std::string& prefix,
                 LstmParams& p) {
  refs.emplace_back(prefix + ".w_ih", &p.w_ih);
  refs.emplace_back(prefix + ".w_hh", &p.w_hh);
  refs.emplace_back(prefix + ".bias", &p.bias);
}

ag::Var Binder::operator()(const std::string& name, const NdArray& value) const {
  if (trainable_) return graph_.parameter(prefix_ + name, value);
  return graph_.constant(value);
}

Conv2dVars bind(const Binder& b, const std::string& name, const Conv2dParams& p) {
  return {b(name + ".kernel", p.kernel), b(name + ".bias", p.bias), p.geometry};
}

LinearVars bind(const Binder& b, const std::string& name, const LinearParams& p) {
  return {b(name + ".weight", p.weight), b(name + ".bias", p.bias)};
}

LstmVars bind(const Binder& b, const std::string& name, const LstmParams& p) {
  return {b(name + ".w_ih", p.w_ih), b(name + ".w_hh", p.w_hh),
          b(name + ".bias", p.bias), p.hidden};
}

ag::Var conv2d(ag::Var x, const Conv2dVars& p) {
  return ag::conv2d(x, p.kernel, p.bias, p.geometry);
}

ag::Var linear(ag::Var x, const LinearVars& p) {
  return ag::linear(x, p.weight, p.bias);
}

ag::Var lstm(ag::Var sequence, const LstmVars& p, ag::Var h0, ag::Var c0) {
  const Shape seq = sequence.shape();
  if (seq.size() != 2)
    throw std::invalid_argument("lstm: sequence must be (T x in), got " +
                                shape_to_string(seq));
  const std::size_t H = p.hidden;
  if (h0.value().size() != H || c0.value().size() != H)
    throw std::invalid_argument("lstm: initial state length must be " +
                                std::to_string(H));
  if (p.w_ih.shape()[0] != 4 * H || p.w_hh.shape() != Shape{4 * H, H})
    throw std::invalid_argument("lstm: weights inconsistent with hidden size");

  // Input projections for every step at once.
  ag::Var pre = ag::linear(sequence, p.w_ih, p.bias);
  ag::Var h = h0, c = c0;
  std::vector<ag::Var> outputs;
  outputs.reserve(seq[0]);
  for (std::size_t t = 0; t < seq[0]; ++t) {
    ag::Var z = ag::add(ag::row(pre, t), ag::matvec(p.w_hh, h));
    ag::Var i = ag::sigmoid(ag::slice(z, 0, H));
    ag::Var f = ag::sigmoid(ag::slice(z, H, H));
    ag::Var g = ag::tanh(ag::slice(z, 2 * H, H));
    ag::Var o = ag::sigmoid(ag::slice(z, 3 * H, H));
    c = ag::add(ag::mul(f, c), ag::mul(i, g));
    h = ag::mul(o, ag::tanh(c));
    outputs.push_back(h);
  }
  return ag::stack_rows(outputs);
}

ag::Var lstm(ag::Var sequence, const LstmVars& p) {
  ag::Graph& g = *sequence.graph;
  return lstm(sequence, p, g.constant(NdArray(Shape{p.hidden})),
              g.constant(NdArray(Shape{p.hidden})));
}

NdArray conv2d(const NdArray& input, const Conv2dParams& p) {
  ag::Graph g;
  Binder b(g, "", false);
  return conv2d(g.constant(input), bind(b, "conv", p)).value();
}

NdArray linear(const NdArray& input, const LinearParams& p) {
  ag::Graph g;
  Binder b(g, "", false);
  return linear(g.constant(input), bind(b, "fc", p)).value();
}

NdArray lstm(const NdArray& sequence, const LstmParams& p, const NdArray& h0,
             const NdArray& c0) {
  ag::Graph g;
  Binder b(g, "", false);
  return lstm(g.constant(sequence), bind(b, "lstm", p), g.constant(h0),
              g.constant(c0))
      .value();
}

NdArray l2_normalize(const NdArray& v) {
  ag::Graph g;
  return ag::l2_normalize(g.constant(v)).value();
}

}  // namespace srl::nn
