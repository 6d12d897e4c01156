#include "srl/gradsuite.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "srl/encoder.hpp"
#include "srl/layers.hpp"
#include "srl/losses.hpp"
#include "srl/rng.hpp"
#include "srl/separator.hpp"

namespace srl {

namespace {

NdArray uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  NdArray a(std::move(shape));
  for (auto& v : a.data()) v = rng.uniform(lo, hi);
  return a;
}

// Values bounded away from zero so ReLU-type kinks are never within a step.
NdArray off_kink(Shape shape, Rng& rng) {
  NdArray a(std::move(shape));
  for (auto& v : a.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return a;
}

// Contracts an output with fixed random weights into a scalar.
ag::Var project(ag::Var y, Rng& rng) {
  return ag::sum(ag::mul(y, y.graph->constant(uniform(y.shape(), rng))));
}

GradSuiteEntry check(const std::string& name, ag::Graph& g, ag::Var out,
                     const ag::GradCheckOptions& opts) {
  const auto report = ag::grad_check(g, out, {}, opts);
  GradSuiteEntry e;
  e.component = name;
  e.passed = report.passed;
  e.max_rel_error = report.max_rel_error();
  for (const auto& r : report.entries) e.checked += r.checked;
  return e;
}

struct Instance {
  EncoderModel encoder;
  SeparatorModel separator;
  NdArray noisy[2], clean[2], reference[2];
};

Instance instance(std::uint64_t seed, bool log_compress) {
  Rng rng(seed);
  Instance t;
  auto ec = EncoderConfig::tiny(33);
  ec.log_compress = log_compress;
  t.encoder = EncoderModel::create(ec, mix_seed(seed, 1));
  for (auto& [name, p] : t.encoder.parameters())
    if (name.ends_with("bias"))
      for (auto& v : p->data()) v = rng.uniform(0.05, 0.3);
  t.encoder = freeze(std::move(t.encoder));
  auto sc = SeparatorConfig::tiny(33, t.encoder.dim());
  sc.log_compress = log_compress;
  t.separator = SeparatorModel::create(sc, mix_seed(seed, 2));
  // Zero biases would leave dead receptive fields exactly on the ReLU kink.
  for (auto& [name, p] : t.separator.parameters())
    if (name.starts_with("sep.conv") && name.ends_with("bias"))
      for (auto& v : p->data()) v = rng.uniform(-0.1, 0.1);
  for (int i = 0; i < 2; ++i) {
    t.noisy[i] = uniform(Shape{8, 33}, rng, 0.0, 1.0);
    t.clean[i] = uniform(Shape{8, 33}, rng, 0.0, 0.6);
    t.reference[i] = uniform(Shape{8, 33}, rng, 0.0, 0.6);
  }
  return t;
}

struct Objective {
  ag::Var total;
  std::vector<double> hinge_arguments;
};

// Batch mean of the training objective over the two instance items.
Objective objective(ag::Graph& g, const Instance& t, LossMode mode, AnchorMode anchor,
                    double alpha) {
  LossConfig cfg;
  cfg.mode = mode;
  cfg.anchor = anchor;
  cfg.alpha = alpha;
  auto sep = bind_separator(g, t.separator, true);
  auto enc = bind_encoder(g, t.encoder);
  Objective o;
  ag::Var acc{};
  for (int i = 0; i < 2; ++i) {
    const NdArray& a = anchor == AnchorMode::Clean ? t.clean[i] : t.reference[i];
    auto s = separate(sep, g.constant(t.noisy[i]),
                      g.constant(enroll(t.reference[i], t.encoder)));
    auto v = build_loss(mode, cfg, enc, embed(enc, g.constant(a)), s.enhanced, s.residual,
                        g.constant(t.clean[i]));
    if (v.d_sr_neg)
      o.hinge_arguments.push_back(v.d_sr_pos->value().item() - v.d_sr_neg->value().item() +
                                  alpha);
    acc = i == 0 ? v.total : ag::add(acc, v.total);
  }
  o.total = ag::scale(acc, 0.5);
  return o;
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options) {
  const auto& opts = options.check;
  std::vector<GradSuiteEntry> out;
  Rng rng(mix_seed(options.seed, 0x9c));

  {
    ag::Graph g;
    auto x = g.parameter("x", uniform(Shape{2, 6, 7}, rng));
    auto k = g.parameter("k", uniform(Shape{3, 2, 3, 3}, rng));
    auto b = g.parameter("b", uniform(Shape{3}, rng));
    auto k2 = g.parameter("k2", uniform(Shape{2, 3, 3, 3}, rng));
    auto b2 = g.parameter("b2", uniform(Shape{2}, rng));
    auto y = ag::conv2d(x, k, b, {1, 1, 1, 1});
    auto z = ag::conv2d(y, k2, b2, {2, 2, 1, 1});
    out.push_back(check("conv2d", g, ag::add(project(y, rng), project(z, rng)), opts));
  }
  {
    ag::Graph g;
    auto x = g.parameter("x", uniform(Shape{4, 5}, rng));
    auto w = g.parameter("w", uniform(Shape{3, 5}, rng));
    auto b = g.parameter("b", uniform(Shape{3}, rng));
    auto v = g.parameter("v", uniform(Shape{5}, rng));
    auto y = ag::add(project(ag::linear(x, w, b), rng), project(ag::linear(v, w, b), rng));
    out.push_back(check("linear", g, y, opts));
  }
  {
    ag::Graph g;
    Rng init(mix_seed(options.seed, 3));
    auto params = nn::make_lstm(3, 2, init);
    for (auto& v : params.bias.data()) v += init.uniform(-0.5, 0.5);
    auto lv = nn::bind(nn::Binder(g, "", true), "lstm", params);
    auto x = g.parameter("x", uniform(Shape{4, 3}, rng));
    auto h0 = g.parameter("h0", uniform(Shape{2}, rng));
    auto c0 = g.parameter("c0", uniform(Shape{2}, rng));
    out.push_back(check("lstm", g, project(nn::lstm(x, lv, h0, c0), rng), opts));
  }
  {
    ag::Graph g;
    auto x = g.parameter("x", off_kink(Shape{12}, rng));
    auto y = ag::add(project(ag::sigmoid(x), rng),
                     ag::add(project(ag::relu(x), rng), project(ag::tanh(x), rng)));
    auto p = g.parameter("p", uniform(Shape{5}, rng, 0.1, 2.0));
    y = ag::add(y, project(ag::log1p(p), rng));
    out.push_back(check("activations (sigmoid, relu, tanh, log1p)", g, y, opts));
  }
  {
    ag::Graph g;
    auto v = g.parameter("v", uniform(Shape{9}, rng));
    auto u = g.parameter("u", uniform(Shape{9}, rng));
    auto y = ag::add(project(ag::l2_normalize(v), rng),
                     ag::distance(ag::l2_normalize(v), ag::l2_normalize(u)));
    out.push_back(check("l2_normalize and distance", g, y, opts));
  }
  {
    ag::Graph g;
    auto a = g.parameter("a", uniform(Shape{5, 4}, rng));
    auto b = g.parameter("b", uniform(Shape{5, 4}, rng));
    out.push_back(check("mse_loss", g, ag::mse(a, b), opts));
  }
  {
    ag::Graph g;
    auto logits = g.parameter("logits", uniform(Shape{6}, rng, -2.0, 2.0));
    out.push_back(check("softmax cross-entropy", g, ag::softmax_cross_entropy(logits, 2), opts));
  }
  {
    ag::Graph g;
    auto m = g.parameter("m", uniform(Shape{3, 4}, rng, 0.05, 0.95));
    auto x = g.parameter("x", uniform(Shape{3, 4}, rng, 0.0, 2.0));
    auto y = ag::add(project(ag::mask_apply(m, x), rng), project(ag::mask_residual(m, x), rng));
    out.push_back(check("mask apply and residual", g, y, opts));
  }

  const Instance base = instance(mix_seed(options.seed, 7), options.log_compress);
  {
    ag::Graph g;
    EncoderModel enc = base.encoder;
    enc.frozen = false;
    auto ev = bind_encoder(g, enc);
    auto e = embed(ev, g.constant(base.reference[0]));
    out.push_back(check("speaker encoder embedding", g, project(e, rng), opts));
  }
  {
    ag::Graph g;
    auto o = objective(g, base, LossMode::MseOnly, AnchorMode::Clean, 1.0);
    out.push_back(check("separator with mse objective", g, o.total, opts));
  }
  for (auto anchor : {AnchorMode::Reference, AnchorMode::Clean}) {
    ag::Graph g;
    auto o = objective(g, base, LossMode::Srl, anchor, 1.0);
    out.push_back(check("srl_total, " + to_string(anchor) + " anchor", g, o.total, opts));
  }
  // The hinge branch depends on the instance; search for one of each kind
  // whose arguments keep clear of the kink.
  for (auto anchor : {AnchorMode::Reference, AnchorMode::Clean}) {
    bool found[2] = {false, false};
    for (std::uint64_t k = 0; k < 64 && !(found[0] && found[1]); ++k) {
      const Instance t = instance(mix_seed(options.seed, 100 + k), options.log_compress);
      for (double alpha : {1.0, 0.0}) {
        ag::Graph g;
        auto o = objective(g, t, LossMode::TripletSrl, anchor, alpha);
        bool all_active = true, all_inactive = true, clear = true;
        for (double h : o.hinge_arguments) {
          all_active = all_active && h > 0.0;
          all_inactive = all_inactive && h < 0.0;
          clear = clear && std::abs(h) > 1e-3;
        }
        if (!clear || !(all_active || all_inactive)) continue;
        const int branch = all_active ? 1 : 0;
        if (found[branch]) continue;
        found[branch] = true;
        out.push_back(check("triplet_srl_total, " + to_string(anchor) + " anchor, hinge " +
                                (all_active ? "active" : "inactive"),
                            g, o.total, opts));
      }
    }
    for (int branch = 0; branch < 2; ++branch)
      if (!found[branch])
        out.push_back({"triplet_srl_total, " + to_string(anchor) + " anchor, hinge " +
                           (branch ? "active" : "inactive") + " (no instance found)",
                       0.0, 0, false});
  }

  if (options.inject_wrong_grad) {
    ag::Graph g;
    auto x = g.parameter("x", uniform(Shape{6}, rng, 0.5, 1.5));
    out.push_back(check("injected wrong gradient", g, project(ag::debug_wrong_grad(x), rng), opts));
  }
  return out;
}

}  // namespace srl
