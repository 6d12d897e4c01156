#pragma once

#include <optional>
#include <span>
#include <string>

#include "srl/data.hpp"
#include "srl/encoder.hpp"

namespace srl {

enum class AnchorMode { Reference, Clean };
enum class LossMode { MseOnly, Srl, TripletSrl };

std::string to_string(AnchorMode a);
std::string to_string(LossMode m);
AnchorMode parse_anchor(const std::string& s);
LossMode parse_loss_mode(const std::string& s);

struct LossConfig {
  double beta = 0.3;
  double alpha = 1.0;
  LossMode mode = LossMode::MseOnly;
  AnchorMode anchor = AnchorMode::Clean;
  std::size_t srl_start_epoch = 5;

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;
  double mse = 0.0;
  std::optional<double> d_sr_pos;
  std::optional<double> d_sr_neg;
  std::optional<double> l_tri;
};

/// Mean of squared differences.
double mse_loss(const NdArray& estimate, const NdArray& clean);

/// |N(a) - N(b)| with N the L2 normalisation; in [0, 2].
double srl_distance(const NdArray& a, const NdArray& b);

/// beta * D_SR(P+) + L_mse
double srl_objective(double beta, double d_sr_pos, double mse);
/// max(0, D_SR(P+) - D_SR(P-) + alpha)
double triplet_hinge(double d_sr_pos, double d_sr_neg, double alpha);
/// beta * L_tri + L_mse
double triplet_objective(double beta, double l_tri, double mse);

struct LossVars {
  ag::Var total, mse;
  std::optional<ag::Var> d_sr_pos, d_sr_neg, l_tri;
};

/// Loss of one example under `mode`. The anchor embedding is a constant;
/// enhanced and residual carry gradient through the encoder.
LossVars build_loss(LossMode mode, const LossConfig& cfg, const EncoderVars& enc,
                    ag::Var anchor_embedding, ag::Var enhanced, ag::Var residual,
                    ag::Var clean);

struct LossItem {
  NdArray anchor;    // anchor magnitude grid
  NdArray enhanced;  // x^P
  NdArray residual;  // x^N, used by the triplet loss
  NdArray clean;
};

/// Batch-mean of beta * D_SR(P+) + L_mse.
LossBreakdown srl_total(std::span<const LossItem> batch, const LossConfig& cfg,
                        const EncoderModel& encoder);
/// Batch-mean of beta * L_tri + L_mse.
LossBreakdown triplet_srl_total(std::span<const LossItem> batch,
                                const LossConfig& cfg, const EncoderModel& encoder);

/// Reference-utterance or clean-target magnitude grid.
const NdArray& select_anchor(const ExampleFeatures& example, AnchorMode mode);

}  // namespace srl
