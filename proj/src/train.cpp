#include "srl/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include "srl/data.hpp"
#include "srl/rng.hpp"
#include "srl/text.hpp"

namespace srl {

void adam_step(const nn::ParameterRefs& params, const ag::Gradients& grads,
               OptimizerState& state, const AdamConfig& hyper) {
  if (!(state.lr > 0.0)) throw std::invalid_argument("adam_step: lr must be > 0");
  for (const auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g == grads.end())
      throw std::invalid_argument("adam_step: no gradient for '" + name + "'");
    if (!g->second.same_shape(*p))
      throw std::invalid_argument("adam_step: gradient of '" + name + "' has shape " +
                                  shape_to_string(g->second.shape()) + ", parameter " +
                                  shape_to_string(p->shape()));
    for (auto* moments : {&state.m, &state.v}) {
      auto [it, fresh] = moments->try_emplace(name, p->shape());
      if (!fresh && !it->second.same_shape(*p))
        throw std::invalid_argument("adam_step: moment shape mismatch for '" + name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (const auto& [name, p] : params) {
    const NdArray& g = grads.at(name);
    NdArray& m = state.m.at(name);
    NdArray& v = state.v.at(name);
    for (std::size_t i = 0; i < p->size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      (*p)[i] -= state.lr * mhat / (std::sqrt(vhat) + hyper.epsilon);
    }
  }
}

void TrainSchedule::validate() const {
  if (!(initial_lr > 0.0)) throw std::invalid_argument("schedule: initial lr must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0))
    throw std::invalid_argument("schedule: lr decay must be in (0, 1]");
  if (batch_size == 0) throw std::invalid_argument("schedule: batch size must be > 0");
  if (patience > 0 && max_epochs > 0 && patience >= max_epochs)
    throw std::invalid_argument("schedule: patience must be below max epochs");
}

double lr_for_epoch(const TrainSchedule& schedule, std::size_t epoch) {
  return schedule.initial_lr * std::pow(schedule.lr_decay, static_cast<double>(epoch));
}

TrainItem make_train_item(const ExampleFeatures& ex, const EncoderModel& encoder,
                          AnchorMode anchor) {
  if (ex.reference.empty())
    throw std::invalid_argument("example '" + ex.id + "' has no reference utterance");
  TrainItem item;
  item.id = ex.id;
  item.noisy = ex.noisy.magnitude;
  item.clean = ex.clean;
  item.dvector = enroll(ex.reference, encoder);
  item.anchor_embedding = embed(select_anchor(ex, anchor), encoder);
  return item;
}

std::vector<TrainItem> make_train_items(const std::vector<ExampleFeatures>& examples,
                                        const EncoderModel& encoder, AnchorMode anchor) {
  std::vector<TrainItem> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(make_train_item(ex, encoder, anchor));
  return out;
}

double mean_mse(const std::vector<TrainItem>& items, const SeparatorModel& model) {
  if (items.empty()) throw std::invalid_argument("mean_mse: no items");
  double acc = 0.0;
  for (const auto& it : items)
    acc += mse_loss(separate(it.noisy, it.dvector, model).enhanced, it.clean);
  return acc / static_cast<double>(items.size());
}

namespace {

struct StepOutcome {
  LossBreakdown loss;
  ag::Gradients grads;
};

StepOutcome example_step(const TrainItem& item, const SeparatorModel& model,
                         const EncoderModel& encoder, LossMode mode,
                         const LossConfig& cfg) {
  ag::Graph g;
  auto sep = bind_separator(g, model, true);
  EncoderVars enc;
  if (mode != LossMode::MseOnly) enc = bind_encoder(g, encoder, true);
  auto s = separate(sep, g.constant(item.noisy), g.constant(item.dvector));
  auto vars = build_loss(mode, cfg, enc, g.constant(item.anchor_embedding), s.enhanced,
                         s.residual, g.constant(item.clean));
  StepOutcome out;
  out.loss.total = vars.total.value().item();
  out.loss.mse = vars.mse.value().item();
  // With beta = 0 the embedding terms do not enter the objective; they are
  // left out of the record so that such a run logs exactly like plain MSE.
  if (cfg.beta != 0.0) {
    if (vars.d_sr_pos) out.loss.d_sr_pos = vars.d_sr_pos->value().item();
    if (vars.d_sr_neg) out.loss.d_sr_neg = vars.d_sr_neg->value().item();
    if (vars.l_tri) out.loss.l_tri = vars.l_tri->value().item();
  }
  if (std::isfinite(out.loss.total)) out.grads = g.backward(vars.total);
  return out;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& x) {
  acc.total += x.total;
  acc.mse += x.mse;
  auto add = [](std::optional<double>& a, const std::optional<double>& b) {
    if (b) a = a.value_or(0.0) + *b;
  };
  add(acc.d_sr_pos, x.d_sr_pos);
  add(acc.d_sr_neg, x.d_sr_neg);
  add(acc.l_tri, x.l_tri);
}

void divide(LossBreakdown& acc, double n) {
  acc.total /= n;
  acc.mse /= n;
  for (auto* o : {&acc.d_sr_pos, &acc.d_sr_neg, &acc.l_tri})
    if (*o) **o /= n;
}

bool all_finite(const ag::Gradients& grads) {
  return std::all_of(grads.begin(), grads.end(),
                     [](const auto& kv) { return kv.second.all_finite(); });
}

}  // namespace

FitResult fit(const std::vector<TrainItem>& train,
              const std::vector<TrainItem>& validation, SeparatorModel model,
              const EncoderModel& encoder, const LossConfig& cfg,
              const TrainSchedule& schedule, std::uint64_t seed,
              const FitOptions& options) {
  cfg.validate();
  schedule.validate();
  if (!encoder.frozen) throw std::invalid_argument("fit: encoder must be frozen");
  if (train.empty()) throw std::invalid_argument("fit: empty training set");

  FitResult r;
  r.model = model;
  r.best_val_mse = std::numeric_limits<double>::infinity();
  OptimizerState state;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < schedule.max_epochs; ++epoch) {
    state.lr = lr_for_epoch(schedule, epoch);
    const LossMode mode = epoch < cfg.srl_start_epoch ? LossMode::MseOnly : cfg.mode;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(seed, epoch));
    rng.shuffle(order.begin(), order.end());

    LossBreakdown epoch_loss;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t end = std::min(order.size(), start + schedule.batch_size);
      ag::Gradients sum;
      for (std::size_t k = start; k < end; ++k) {
        const TrainItem& item = train[order[k]];
        StepOutcome step = example_step(item, model, encoder, mode, cfg);
        if (!std::isfinite(step.loss.total) || !all_finite(step.grads)) {
          r.aborted = true;
          r.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) +
                           ", example '" + item.id + "'";
          return r;
        }
        accumulate(epoch_loss, step.loss);
        for (auto& [name, g] : step.grads) {
          auto [it, fresh] = sum.try_emplace(name, std::move(g));
          if (!fresh) it->second += g;
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& [name, g] : sum)
        for (auto& x : g.data()) x *= inv;
      adam_step(model.parameters(), sum, state);
      ++r.steps;
      if (options.on_step) options.on_step(r.steps, model);
    }
    divide(epoch_loss, static_cast<double>(train.size()));

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = state.lr;
    entry.train = epoch_loss;
    entry.val_mse = validation.empty() ? mean_mse(train, model) : mean_mse(validation, model);
    if (!std::isfinite(entry.val_mse)) {
      r.aborted = true;
      r.abort_reason = "non-finite validation loss at epoch " + std::to_string(epoch);
      return r;
    }
    r.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);

    if (entry.val_mse < r.best_val_mse) {
      r.best_val_mse = entry.val_mse;
      r.best_epoch = epoch;
      r.model = model;
      since_best = 0;
    } else if (schedule.patience > 0 && ++since_best >= schedule.patience) {
      break;
    }
  }
  return r;
}

void write_log_header(std::ostream& os) {
  os << "epoch,lr,train_total,train_mse,train_dsr_pos,train_dsr_neg,val_mse\n";
}

void write_log_row(std::ostream& os, const EpochLog& e) {
  auto opt = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
  };
  os << e.epoch << ',' << format_double(e.lr) << ',' << format_double(e.train.total) << ','
     << format_double(e.train.mse) << ',' << opt(e.train.d_sr_pos) << ','
     << opt(e.train.d_sr_neg) << ',' << format_double(e.val_mse) << '\n';
}

void write_log_csv(std::ostream& os, const std::vector<EpochLog>& log) {
  write_log_header(os);
  for (const auto& e : log) write_log_row(os, e);
}

std::vector<SpeakerUtterance> speaker_corpus(std::size_t speakers,
                                             std::size_t utterances_per_speaker,
                                             double duration_s, std::uint64_t seed,
                                             const dsp::FrameParams& params) {
  auto pool = SyntheticSpeaker::draw_pool(speakers, seed);
  std::vector<SpeakerUtterance> out;
  out.reserve(speakers * utterances_per_speaker);
  for (std::size_t s = 0; s < speakers; ++s)
    for (std::size_t u = 0; u < utterances_per_speaker; ++u) {
      auto w = synth_utterance(pool[s], mix_seed(mix_seed(seed, s), u), duration_s,
                               params.sample_rate);
      out.push_back({dsp::stft(w, params).magnitude, s});
    }
  return out;
}

PretrainResult pretrain_encoder(const std::vector<SpeakerUtterance>& data,
                                EncoderModel model, const TrainSchedule& schedule,
                                std::uint64_t seed) {
  schedule.validate();
  std::set<std::size_t> labels;
  for (const auto& u : data) labels.insert(u.label);
  if (labels.size() < 3)
    throw std::invalid_argument("pretrain_encoder: need at least 3 speakers, got " +
                                std::to_string(labels.size()));
  const std::size_t classes = *labels.rbegin() + 1;

  model.frozen = false;
  model.head.reset();
  Rng init(mix_seed(seed, 0x4ead));
  nn::LinearParams head = nn::make_linear(classes, model.dim(), init);

  PretrainResult r;
  OptimizerState state;
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < schedule.max_epochs; ++epoch) {
    state.lr = lr_for_epoch(schedule, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(seed, epoch));
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
      const std::size_t end = std::min(order.size(), start + schedule.batch_size);
      ag::Gradients sum;
      for (std::size_t k = start; k < end; ++k) {
        const auto& u = data[order[k]];
        ag::Graph g;
        auto enc = bind_encoder(g, model);
        auto hv = nn::bind(nn::Binder(g, "enc.", true), "head", head);
        auto loss =
            ag::softmax_cross_entropy(nn::linear(embed(enc, g.constant(u.magnitude)), hv),
                                      u.label);
        const double value = loss.value().item();
        if (!std::isfinite(value))
          throw std::runtime_error("pretrain_encoder: non-finite loss at epoch " +
                                   std::to_string(epoch));
        epoch_loss += value;
        for (auto& [name, grad] : g.backward(loss)) {
          auto [it, fresh] = sum.try_emplace(name, std::move(grad));
          if (!fresh) it->second += grad;
        }
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& [name, grad] : sum)
        for (auto& x : grad.data()) x *= inv;
      auto refs = model.parameters();
      nn::append_refs(refs, "enc.head", head);
      adam_step(refs, sum, state);
    }
    r.epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  r.encoder = freeze(std::move(model));
  r.head = std::move(head);
  return r;
}

double speaker_accuracy(const std::vector<SpeakerUtterance>& data,
                        const EncoderModel& encoder, const nn::LinearParams& head) {
  if (data.empty()) throw std::invalid_argument("speaker_accuracy: no data");
  std::size_t hits = 0;
  for (const auto& u : data) {
    const NdArray logits = classify(u.magnitude, encoder, head);
    const auto best = std::max_element(logits.values().begin(), logits.values().end()) -
                      logits.values().begin();
    if (static_cast<std::size_t>(best) == u.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace srl
