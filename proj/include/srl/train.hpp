#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "srl/encoder.hpp"
#include "srl/losses.hpp"
#include "srl/separator.hpp"

namespace srl {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::map<std::string, NdArray> m, v;
  std::size_t step = 0;
  double lr = 1e-3;
};

/// One bias-corrected Adam update of every tensor in `params` using the
/// gradient of the same name.
void adam_step(const nn::ParameterRefs& params, const ag::Gradients& grads,
               OptimizerState& state, const AdamConfig& hyper = {});

struct TrainSchedule {
  double initial_lr = 1e-3;
  double lr_decay = 0.99;
  std::size_t max_epochs = 150;
  std::size_t patience = 10;  // 0 disables early stopping
  std::size_t batch_size = 4;

  void validate() const;
};

double lr_for_epoch(const TrainSchedule& schedule, std::size_t epoch);

/// Per-example tensors used by the training loop. The d-vector and the
/// anchor embedding come from the frozen encoder and are fixed.
struct TrainItem {
  std::string id;
  NdArray noisy;   // magnitude
  NdArray clean;   // magnitude
  NdArray dvector;
  NdArray anchor_embedding;
};

TrainItem make_train_item(const ExampleFeatures& ex, const EncoderModel& encoder,
                          AnchorMode anchor);
std::vector<TrainItem> make_train_items(const std::vector<ExampleFeatures>& examples,
                                        const EncoderModel& encoder, AnchorMode anchor);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown train;
  double val_mse = 0.0;
};

struct FitResult {
  SeparatorModel model;  // parameters of the best validation epoch
  std::vector<EpochLog> log;
  double best_val_mse = 0.0;
  std::optional<std::size_t> best_epoch;
  std::size_t steps = 0;
  bool aborted = false;
  std::string abort_reason;
};

struct FitOptions {
  std::function<void(const EpochLog&)> on_epoch;
  /// Called after every optimizer step with the current parameters.
  std::function<void(std::size_t step, const SeparatorModel&)> on_step;
};

/// Trains `model` on `train`. Epochs before cfg.srl_start_epoch use the MSE
/// term alone. Early stopping watches the validation MSE; when `validation`
/// is empty the training MSE is used instead.
FitResult fit(const std::vector<TrainItem>& train,
              const std::vector<TrainItem>& validation, SeparatorModel model,
              const EncoderModel& encoder, const LossConfig& cfg,
              const TrainSchedule& schedule, std::uint64_t seed,
              const FitOptions& options = {});

/// Mean MSE of the model's enhanced magnitude over `items`.
double mean_mse(const std::vector<TrainItem>& items, const SeparatorModel& model);

void write_log_header(std::ostream& os);
void write_log_row(std::ostream& os, const EpochLog& entry);
void write_log_csv(std::ostream& os, const std::vector<EpochLog>& log);

struct SpeakerUtterance {
  NdArray magnitude;
  std::size_t label = 0;
};

/// Utterances of a fresh synthetic speaker pool, labelled 0..speakers-1.
std::vector<SpeakerUtterance> speaker_corpus(std::size_t speakers,
                                             std::size_t utterances_per_speaker,
                                             double duration_s, std::uint64_t seed,
                                             const dsp::FrameParams& params);

struct PretrainResult {
  EncoderModel encoder;  // frozen, without head
  nn::LinearParams head;
  std::vector<double> epoch_loss;
};

/// Speaker classification with a softmax head.
PretrainResult pretrain_encoder(const std::vector<SpeakerUtterance>& data,
                                EncoderModel model, const TrainSchedule& schedule,
                                std::uint64_t seed);

/// Fraction of `data` whose arg-max logit matches the label.
double speaker_accuracy(const std::vector<SpeakerUtterance>& data,
                        const EncoderModel& encoder, const nn::LinearParams& head);

}  // namespace srl
