#pragma once

#include <vector>

#include "srl/layers.hpp"

namespace srl {

struct SeparatorConfig {
  std::vector<std::size_t> channels = std::vector<std::size_t>(8, 16);
  std::size_t kernel = 3;
  std::size_t lstm_hidden = 64;
  std::size_t fc_hidden = 128;
  std::size_t bins = 257;
  std::size_t dvector_dim = 64;
  bool log_compress = false;

  static SeparatorConfig desk(std::size_t bins = 257, std::size_t dvector_dim = 64);
  static SeparatorConfig canonical(std::size_t bins = 257,
                                   std::size_t dvector_dim = 512);
  static SeparatorConfig tiny(std::size_t bins = 33, std::size_t dvector_dim = 4);
  void validate() const;
};

/// Mask network: convolution stack over the magnitude grid, d-vector
/// appended to every frame of the last convolution's output, one LSTM,
/// two fully-connected layers with a sigmoid output per bin.
struct SeparatorModel {
  SeparatorConfig config;
  std::vector<nn::Conv2dParams> conv;
  nn::LstmParams lstm;
  nn::LinearParams fc1;
  nn::LinearParams fc2;

  static SeparatorModel create(const SeparatorConfig& config, std::uint64_t seed);
  /// Named "sep.*".
  nn::ParameterRefs parameters();
};

struct SeparatorVars {
  std::vector<nn::Conv2dVars> conv;
  nn::LstmVars lstm;
  nn::LinearVars fc1, fc2;
  bool log_compress = false;
  std::size_t dvector_dim = 0;
};

SeparatorVars bind_separator(ag::Graph& graph, const SeparatorModel& model,
                             bool trainable);

/// Soft mask in [0, 1], same shape as `noisy` (frames x bins).
ag::Var predict_mask(const SeparatorVars& sep, ag::Var noisy, ag::Var dvector);

struct SeparationVars {
  ag::Var mask, enhanced, residual;
};
SeparationVars separate(const SeparatorVars& sep, ag::Var noisy, ag::Var dvector);

struct SeparationOutput {
  NdArray enhanced;  // mask * noisy
  NdArray residual;  // noisy - enhanced
  NdArray mask;
};

NdArray predict_mask(const NdArray& noisy, const NdArray& dvector,
                     const SeparatorModel& model);
SeparationOutput separate(const NdArray& noisy, const NdArray& dvector,
                          const SeparatorModel& model);
/// Splits `noisy` with a given mask; enhanced + residual == noisy exactly.
SeparationOutput apply_mask(const NdArray& noisy, const NdArray& mask);

}  // namespace srl
