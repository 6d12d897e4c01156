#include "srl/losses.hpp"

#include <algorithm>
#include <stdexcept>

namespace srl {

std::string to_string(AnchorMode a) {
  return a == AnchorMode::Reference ? "reference" : "clean";
}

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::MseOnly: return "mse";
    case LossMode::Srl: return "srl";
    case LossMode::TripletSrl: return "triplet";
  }
  return "?";
}

AnchorMode parse_anchor(const std::string& s) {
  if (s == "reference" || s == "ref") return AnchorMode::Reference;
  if (s == "clean") return AnchorMode::Clean;
  throw std::invalid_argument("unknown anchor '" + s + "' (reference|clean)");
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "mse") return LossMode::MseOnly;
  if (s == "srl") return LossMode::Srl;
  if (s == "triplet") return LossMode::TripletSrl;
  throw std::invalid_argument("unknown loss mode '" + s + "' (mse|srl|triplet)");
}

void LossConfig::validate() const {
  if (!(beta >= 0.0)) throw std::invalid_argument("loss: beta must be >= 0");
  if (!(alpha >= 0.0)) throw std::invalid_argument("loss: alpha must be >= 0");
}

double mse_loss(const NdArray& estimate, const NdArray& clean) {
  ag::Graph g;
  return ag::mse(g.constant(estimate), g.constant(clean)).value().item();
}

double srl_distance(const NdArray& a, const NdArray& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("srl_distance: dimension mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  ag::Graph g;
  return ag::distance(ag::l2_normalize(g.constant(a)), ag::l2_normalize(g.constant(b)))
      .value()
      .item();
}

double srl_objective(double beta, double d_sr_pos, double mse) {
  return beta * d_sr_pos + mse;
}

double triplet_hinge(double d_sr_pos, double d_sr_neg, double alpha) {
  const double x = d_sr_pos - d_sr_neg + alpha;
  return x > 0.0 ? x : 0.0;
}

double triplet_objective(double beta, double l_tri, double mse) {
  return beta * l_tri + mse;
}

LossVars build_loss(LossMode mode, const LossConfig& cfg, const EncoderVars& enc,
                    ag::Var anchor_embedding, ag::Var enhanced, ag::Var residual,
                    ag::Var clean) {
  ag::Graph& g = *enhanced.graph;
  LossVars out;
  out.mse = ag::mse(enhanced, clean);
  if (mode == LossMode::MseOnly) {
    out.total = out.mse;
    return out;
  }
  ag::Var anchor = ag::l2_normalize(ag::detach(anchor_embedding));
  ag::Var pos = ag::distance(anchor, ag::l2_normalize(embed(enc, enhanced)));
  out.d_sr_pos = pos;
  if (mode == LossMode::Srl) {
    out.total = ag::add(ag::scale(pos, cfg.beta), out.mse);
    return out;
  }
  ag::Var neg = ag::distance(anchor, ag::l2_normalize(embed(enc, residual)));
  ag::Var hinge =
      ag::relu(ag::add(ag::sub(pos, neg), g.constant(NdArray::scalar(cfg.alpha))));
  out.d_sr_neg = neg;
  out.l_tri = hinge;
  out.total = ag::add(ag::scale(hinge, cfg.beta), out.mse);
  return out;
}

namespace {

LossBreakdown batch_total(std::span<const LossItem> batch, LossMode mode,
                          const LossConfig& cfg, const EncoderModel& encoder) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  cfg.validate();
  LossBreakdown sum;
  if (mode != LossMode::MseOnly) sum.d_sr_pos = 0.0;
  if (mode == LossMode::TripletSrl) sum.d_sr_neg = sum.l_tri = 0.0;
  for (const auto& item : batch) {
    ag::Graph g;
    auto enc = bind_encoder(g, encoder, true);
    ag::Var anchor = embed(enc, g.constant(item.anchor));
    ag::Var residual = g.constant(item.residual.empty() ? item.enhanced : item.residual);
    auto vars = build_loss(mode, cfg, enc, anchor, g.constant(item.enhanced), residual,
                           g.constant(item.clean));
    sum.total += vars.total.value().item();
    sum.mse += vars.mse.value().item();
    if (vars.d_sr_pos) *sum.d_sr_pos += vars.d_sr_pos->value().item();
    if (vars.d_sr_neg) *sum.d_sr_neg += vars.d_sr_neg->value().item();
    if (vars.l_tri) *sum.l_tri += vars.l_tri->value().item();
  }
  const auto n = static_cast<double>(batch.size());
  sum.total /= n;
  sum.mse /= n;
  for (auto* o : {&sum.d_sr_pos, &sum.d_sr_neg, &sum.l_tri})
    if (*o) **o /= n;
  return sum;
}

}  // namespace

LossBreakdown srl_total(std::span<const LossItem> batch, const LossConfig& cfg,
                        const EncoderModel& encoder) {
  if (cfg.mode != LossMode::Srl)
    throw std::invalid_argument("srl_total: loss mode must be srl");
  return batch_total(batch, LossMode::Srl, cfg, encoder);
}

LossBreakdown triplet_srl_total(std::span<const LossItem> batch,
                                const LossConfig& cfg, const EncoderModel& encoder) {
  if (cfg.mode != LossMode::TripletSrl)
    throw std::invalid_argument("triplet_srl_total: loss mode must be triplet");
  for (const auto& item : batch)
    if (item.residual.empty())
      throw std::invalid_argument("triplet_srl_total: item without residual");
  return batch_total(batch, LossMode::TripletSrl, cfg, encoder);
}

const NdArray& select_anchor(const ExampleFeatures& example, AnchorMode mode) {
  if (mode == AnchorMode::Clean) return example.clean;
  if (example.reference.empty())
    throw std::invalid_argument("select_anchor: example '" + example.id +
                                "' has no reference utterance");
  return example.reference;
}

}  // namespace srl
