#include "srl/separator.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace srl {

SeparatorConfig SeparatorConfig::desk(std::size_t bins, std::size_t dvector_dim) {
  SeparatorConfig c;
  c.bins = bins;
  c.dvector_dim = dvector_dim;
  return c;
}

SeparatorConfig SeparatorConfig::canonical(std::size_t bins,
                                           std::size_t dvector_dim) {
  SeparatorConfig c;
  c.channels = {64, 64, 64, 64, 64, 64, 64, 8};
  c.lstm_hidden = 400;
  c.fc_hidden = 600;
  c.bins = bins;
  c.dvector_dim = dvector_dim;
  return c;
}

SeparatorConfig SeparatorConfig::tiny(std::size_t bins, std::size_t dvector_dim) {
  SeparatorConfig c;
  c.channels = std::vector<std::size_t>(8, 2);
  c.lstm_hidden = 5;
  c.fc_hidden = 7;
  c.bins = bins;
  c.dvector_dim = dvector_dim;
  return c;
}

void SeparatorConfig::validate() const {
  if (channels.empty()) throw std::invalid_argument("separator: no conv layers");
  if (kernel % 2 == 0) throw std::invalid_argument("separator: kernel must be odd");
  if (bins == 0 || dvector_dim == 0 || lstm_hidden == 0 || fc_hidden == 0)
    throw std::invalid_argument("separator: zero layer width");
}

SeparatorModel SeparatorModel::create(const SeparatorConfig& config,
                                      std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  SeparatorModel m;
  m.config = config;
  std::size_t in = 1;
  for (auto ch : config.channels) {
    m.conv.push_back(nn::make_conv2d(ch, in, config.kernel, config.kernel, 1, rng));
    in = ch;
  }
  m.lstm = nn::make_lstm(in * config.bins + config.dvector_dim,
                         config.lstm_hidden, rng);
  m.fc1 = nn::make_linear(config.fc_hidden, config.lstm_hidden, rng);
  m.fc2 = nn::make_linear(config.bins, config.fc_hidden, rng);
  return m;
}

nn::ParameterRefs SeparatorModel::parameters() {
  nn::ParameterRefs refs;
  for (std::size_t i = 0; i < conv.size(); ++i)
    nn::append_refs(refs, "sep.conv" + std::to_string(i + 1), conv[i]);
  nn::append_refs(refs, "sep.lstm", lstm);
  nn::append_refs(refs, "sep.fc1", fc1);
  nn::append_refs(refs, "sep.fc2", fc2);
  return refs;
}

SeparatorVars bind_separator(ag::Graph& graph, const SeparatorModel& model,
                             bool trainable) {
  nn::Binder b(graph, "sep.", trainable);
  SeparatorVars v;
  for (std::size_t i = 0; i < model.conv.size(); ++i)
    v.conv.push_back(nn::bind(b, "conv" + std::to_string(i + 1), model.conv[i]));
  v.lstm = nn::bind(b, "lstm", model.lstm);
  v.fc1 = nn::bind(b, "fc1", model.fc1);
  v.fc2 = nn::bind(b, "fc2", model.fc2);
  v.log_compress = model.config.log_compress;
  v.dvector_dim = model.config.dvector_dim;
  return v;
}

ag::Var predict_mask(const SeparatorVars& sep, ag::Var noisy, ag::Var dvector) {
  const Shape shape = noisy.shape();
  if (shape.size() != 2)
    throw std::invalid_argument("predict_mask: expected a (frames x bins) grid");
  if (dvector.shape() != Shape{sep.dvector_dim})
    throw std::invalid_argument("predict_mask: d-vector of shape " +
                                shape_to_string(dvector.shape()) +
                                ", model expects (" +
                                std::to_string(sep.dvector_dim) + ")");
  ag::Var x = sep.log_compress ? ag::log1p(noisy) : noisy;
  x = ag::reshape(x, Shape{1, shape[0], shape[1]});
  for (const auto& c : sep.conv) x = ag::relu(nn::conv2d(x, c));
  x = ag::append_columns(ag::channels_to_frames(x), dvector);
  x = nn::lstm(x, sep.lstm);
  x = ag::relu(nn::linear(x, sep.fc1));
  return ag::sigmoid(nn::linear(x, sep.fc2));
}

SeparationVars separate(const SeparatorVars& sep, ag::Var noisy, ag::Var dvector) {
  ag::Var mask = predict_mask(sep, noisy, dvector);
  return {mask, ag::mask_apply(mask, noisy), ag::mask_residual(mask, noisy)};
}

NdArray predict_mask(const NdArray& noisy, const NdArray& dvector,
                     const SeparatorModel& model) {
  ag::Graph g;
  auto vars = bind_separator(g, model, false);
  return predict_mask(vars, g.constant(noisy), g.constant(dvector)).value();
}

SeparationOutput separate(const NdArray& noisy, const NdArray& dvector,
                          const SeparatorModel& model) {
  return apply_mask(noisy, predict_mask(noisy, dvector, model));
}

SeparationOutput apply_mask(const NdArray& noisy, const NdArray& mask) {
  ag::Graph g;
  ag::Var m = g.constant(mask), x = g.constant(noisy);
  return {ag::mask_apply(m, x).value(), ag::mask_residual(m, x).value(), mask};
}

}  // namespace srl
