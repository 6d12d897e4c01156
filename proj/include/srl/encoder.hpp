#pragma once

#include <optional>
#include <vector>

#include "srl/layers.hpp"

namespace srl {

struct EncoderConfig {
  std::vector<std::size_t> channels{8, 16, 32, 32, 32};
  std::vector<std::size_t> strides{1, 2, 1, 2, 1};
  std::size_t kernel = 3;
  std::size_t hidden = 128;
  std::size_t embedding_dim = 64;
  std::size_t bins = 257;
  bool log_compress = false;

  static EncoderConfig desk(std::size_t bins = 257);
  /// 512-dimensional d-vector with wider layers.
  static EncoderConfig canonical(std::size_t bins = 257);
  /// Few channels; for gradient checks on small grids.
  static EncoderConfig tiny(std::size_t bins = 33);

  /// Frequency extent after the strided convolutions.
  std::size_t pooled_bins() const;
  void validate() const;
};

/// Five convolutions, time pooling, two fully-connected layers; the second
/// one's raw output is the d-vector. An optional head maps it to speaker
/// logits during pretraining.
struct EncoderModel {
  EncoderConfig config;
  std::vector<nn::Conv2dParams> conv;
  nn::LinearParams fc1;
  nn::LinearParams embedding;
  std::optional<nn::LinearParams> head;
  bool frozen = false;

  static EncoderModel create(const EncoderConfig& config, std::uint64_t seed);
  std::size_t dim() const { return embedding.out_features(); }
  /// Trunk tensors (no head), named "enc.*".
  nn::ParameterRefs parameters();
};

struct EncoderVars {
  std::vector<nn::Conv2dVars> conv;
  nn::LinearVars fc1;
  nn::LinearVars embedding;
  bool log_compress = false;
};

/// Places the trunk in `graph`; as constants when the model is frozen or
/// `constants` is set.
EncoderVars bind_encoder(ag::Graph& graph, const EncoderModel& model,
                         bool constants = false);

/// d-vector of a (frames x bins) magnitude grid, truncated to 300 frames.
ag::Var embed(const EncoderVars& enc, ag::Var magnitude);

/// Raw d-vector of a magnitude grid.
NdArray embed(const NdArray& magnitude, const EncoderModel& model);

/// Enrollment vector: mean of the embeddings of consecutive segments of at
/// most 300 frames.
NdArray enroll(const NdArray& magnitude, const EncoderModel& model);

/// Speaker logits through `head`.
NdArray classify(const NdArray& magnitude, const EncoderModel& model,
                 const nn::LinearParams& head);

EncoderModel freeze(EncoderModel model);

}  // namespace srl
