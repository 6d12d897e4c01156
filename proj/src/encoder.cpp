#include "srl/encoder.hpp"

#include <stdexcept>
#include <string>

#include "srl/dsp.hpp"

namespace srl {

EncoderConfig EncoderConfig::desk(std::size_t bins) {
  EncoderConfig c;
  c.bins = bins;
  return c;
}

EncoderConfig EncoderConfig::canonical(std::size_t bins) {
  EncoderConfig c;
  c.channels = {64, 128, 256, 256, 256};
  c.hidden = 1024;
  c.embedding_dim = 512;
  c.bins = bins;
  return c;
}

EncoderConfig EncoderConfig::tiny(std::size_t bins) {
  EncoderConfig c;
  c.channels = {2, 3, 3, 2, 2};
  c.hidden = 6;
  c.embedding_dim = 4;
  c.bins = bins;
  return c;
}

std::size_t EncoderConfig::pooled_bins() const {
  std::size_t f = bins;
  const std::size_t pad = (kernel - 1) / 2;
  for (auto s : strides) f = (f + 2 * pad - kernel) / s + 1;
  return f;
}

void EncoderConfig::validate() const {
  if (channels.size() != strides.size() || channels.empty())
    throw std::invalid_argument("encoder: channels and strides differ in length");
  if (kernel % 2 == 0) throw std::invalid_argument("encoder: kernel must be odd");
  if (bins < kernel) throw std::invalid_argument("encoder: too few bins");
  if (embedding_dim == 0 || hidden == 0)
    throw std::invalid_argument("encoder: zero layer width");
}

EncoderModel EncoderModel::create(const EncoderConfig& config,
                                  std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  EncoderModel m;
  m.config = config;
  std::size_t in = 1;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    m.conv.push_back(nn::make_conv2d(config.channels[i], in, config.kernel,
                                     config.kernel, config.strides[i], rng));
    in = config.channels[i];
  }
  m.fc1 = nn::make_linear(config.hidden, in * config.pooled_bins(), rng);
  m.embedding = nn::make_linear(config.embedding_dim, config.hidden, rng);
  return m;
}

nn::ParameterRefs EncoderModel::parameters() {
  nn::ParameterRefs refs;
  for (std::size_t i = 0; i < conv.size(); ++i)
    nn::append_refs(refs, "enc.conv" + std::to_string(i + 1), conv[i]);
  nn::append_refs(refs, "enc.fc1", fc1);
  nn::append_refs(refs, "enc.embedding", embedding);
  return refs;
}

EncoderVars bind_encoder(ag::Graph& graph, const EncoderModel& model,
                         bool constants) {
  nn::Binder b(graph, "enc.", !model.frozen && !constants);
  EncoderVars v;
  for (std::size_t i = 0; i < model.conv.size(); ++i)
    v.conv.push_back(nn::bind(b, "conv" + std::to_string(i + 1), model.conv[i]));
  v.fc1 = nn::bind(b, "fc1", model.fc1);
  v.embedding = nn::bind(b, "embedding", model.embedding);
  v.log_compress = model.config.log_compress;
  return v;
}

ag::Var embed(const EncoderVars& enc, ag::Var magnitude) {
  const Shape shape = magnitude.shape();
  if (shape.size() != 2 || shape[0] == 0)
    throw std::invalid_argument("embed: expected a (frames x bins) grid");
  ag::Var x = magnitude;
  if (shape[0] > dsp::kEncoderMaxFrames) x = ag::slice(x, 0, dsp::kEncoderMaxFrames);
  if (enc.log_compress) x = ag::log1p(x);
  x = ag::reshape(x, Shape{1, x.shape()[0], x.shape()[1]});
  for (const auto& c : enc.conv) x = ag::relu(nn::conv2d(x, c));
  x = ag::mean_over_time(x);
  x = ag::relu(nn::linear(x, enc.fc1));
  return nn::linear(x, enc.embedding);
}

NdArray embed(const NdArray& magnitude, const EncoderModel& model) {
  if (magnitude.rank() != 2)
    throw std::invalid_argument("embed: expected a (frames x bins) grid");
  if (magnitude.dim(1) != model.config.bins)
    throw std::invalid_argument("embed: grid has " +
                                std::to_string(magnitude.dim(1)) +
                                " bins, encoder expects " +
                                std::to_string(model.config.bins));
  ag::Graph g;
  auto vars = bind_encoder(g, model, true);
  return embed(vars, g.constant(magnitude)).value();
}

NdArray enroll(const NdArray& magnitude, const EncoderModel& model) {
  if (magnitude.rank() != 2)
    throw std::invalid_argument("enroll: expected a (frames x bins) grid");
  const std::size_t frames = magnitude.dim(0), bins = magnitude.dim(1);
  const std::size_t seg = dsp::kEncoderMaxFrames;
  NdArray acc(Shape{model.dim()});
  std::size_t count = 0;
  for (std::size_t start = 0; start < frames; start += seg) {
    const std::size_t n = std::min(seg, frames - start);
    std::vector<double> v(magnitude.values().begin() + static_cast<std::ptrdiff_t>(start * bins),
                          magnitude.values().begin() + static_cast<std::ptrdiff_t>((start + n) * bins));
    acc += embed(NdArray(Shape{n, bins}, std::move(v)), model);
    ++count;
  }
  for (auto& x : acc.data()) x /= static_cast<double>(count);
  return acc;
}

NdArray classify(const NdArray& magnitude, const EncoderModel& model,
                 const nn::LinearParams& head) {
  if (head.in_features() != model.dim())
    throw std::invalid_argument("classify: head expects " +
                                std::to_string(head.in_features()) +
                                " inputs, d-vector has " +
                                std::to_string(model.dim()));
  return nn::linear(embed(magnitude, model), head);
}

EncoderModel freeze(EncoderModel model) {
  model.frozen = true;
  return model;
}

}  // namespace srl
