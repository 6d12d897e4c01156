#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "srl/encoder.hpp"

using namespace srl;

TEST_SUITE("encoder") {

TEST_CASE("presets") {
  const auto desk = EncoderConfig::desk();
  CHECK(desk.channels == std::vector<std::size_t>{8, 16, 32, 32, 32});
  CHECK(desk.strides == std::vector<std::size_t>{1, 2, 1, 2, 1});
  CHECK(desk.embedding_dim == 64);
  CHECK(desk.pooled_bins() == 65);
  CHECK(EncoderConfig::canonical().embedding_dim == 512);
  auto m = EncoderModel::create(desk, 1);
  CHECK(m.conv.size() == 5);
  CHECK(m.dim() == 64);
  CHECK(m.fc1.weight.shape() == Shape{128, 32 * 65});
  CHECK(m.parameters().size() == 14);
}

TEST_CASE("embed") {
  Rng rng(2);
  const auto m = EncoderModel::create(EncoderConfig::tiny(33), 3);
  const NdArray x = oracle::random(Shape{40, 33}, rng, 0.0, 1.0);
  const NdArray e = embed(x, m);
  CHECK(e.shape() == Shape{4});
  CHECK(embed(x, m) == e);
  CHECK(embed(NdArray(Shape{5, 33}), m).all_finite());
  CHECK_THROWS_WITH(embed(NdArray(Shape{5, 32}), m), doctest::Contains("bins"));
}

TEST_CASE("embedding is taken from at most 300 frames") {
  Rng rng(3);
  const auto m = EncoderModel::create(EncoderConfig::tiny(9), 4);
  const NdArray x = oracle::random(Shape{450, 9}, rng, 0.0, 1.0);
  std::vector<double> head(x.values().begin(), x.values().begin() + 300 * 9);
  CHECK(embed(x, m) == embed(NdArray(Shape{300, 9}, head), m));
}

TEST_CASE("enrollment averages segment embeddings") {
  Rng rng(4);
  const auto m = EncoderModel::create(EncoderConfig::tiny(9), 5);
  const NdArray x = oracle::random(Shape{420, 9}, rng, 0.0, 1.0);
  std::vector<double> a(x.values().begin(), x.values().begin() + 300 * 9);
  std::vector<double> b(x.values().begin() + 300 * 9, x.values().end());
  const NdArray ea = embed(NdArray(Shape{300, 9}, a), m);
  const NdArray eb = embed(NdArray(Shape{120, 9}, b), m);
  const NdArray en = enroll(x, m);
  for (std::size_t i = 0; i < en.size(); ++i) CHECK(en[i] == doctest::Approx((ea[i] + eb[i]) / 2));
  const NdArray short_grid = oracle::random(Shape{50, 9}, rng, 0.0, 1.0);
  CHECK(enroll(short_grid, m) == embed(short_grid, m));
}

TEST_CASE("classify") {
  Rng rng(5);
  const auto m = EncoderModel::create(EncoderConfig::desk(), 6);
  const auto head = nn::make_linear(10, 64, rng);
  double ce = 0.0;
  const int n = 10;
  for (int t = 0; t < n; ++t) {
    const NdArray logits = classify(oracle::random(Shape{30, 257}, rng, 0.0, 1.0), m, head);
    double z = 0.0;
    for (double v : logits.data()) z += std::exp(v);
    ce += std::log(z) - logits[static_cast<std::size_t>(t)];
  }
  ce /= n;
  CHECK(ce > 0.8 * std::log(10.0));
  CHECK(ce < 1.2 * std::log(10.0));
  CHECK_THROWS(classify(NdArray(Shape{30, 257}), m, nn::make_linear(10, 32, rng)));
}

TEST_CASE("freezing binds constants but keeps the graph differentiable") {
  Rng rng(6);
  auto m = EncoderModel::create(EncoderConfig::tiny(9), 7);
  {
    ag::Graph g;
    bind_encoder(g, m);
    CHECK(g.parameters().size() == 14);
  }
  m = freeze(m);
  CHECK(m.frozen);
  ag::Graph g;
  auto enc = bind_encoder(g, m);
  CHECK(g.parameters().empty());
  ag::Var x = g.parameter("x", oracle::random(Shape{8, 9}, rng, 0.1, 1.0));
  ag::Var d = ag::distance(ag::l2_normalize(embed(enc, x)),
                           ag::l2_normalize(g.constant(oracle::random(Shape{4}, rng))));
  const auto grads = g.backward(d);
  double norm = 0.0;
  for (double v : grads.at("x").data()) norm += v * v;
  CHECK(norm > 0.0);
  CHECK(ag::grad_check(g, d, {}).passed);
}

TEST_CASE("trainable encoder passes grad_check") {
  Rng rng(7);
  auto m = EncoderModel::create(EncoderConfig::tiny(9), 8);
  for (auto& [name, p] : m.parameters())
    if (name.ends_with("bias"))
      for (auto& v : p->data()) v = rng.uniform(0.05, 0.3);
  ag::Graph g;
  auto enc = bind_encoder(g, m);
  ag::Var e = embed(enc, g.constant(oracle::random(Shape{8, 9}, rng, 0.0, 1.0)));
  auto rep = ag::grad_check(g, ag::sum(ag::mul(e, g.constant(oracle::random(Shape{4}, rng)))), {});
  CHECK(rep.passed);
}

}  // TEST_SUITE
