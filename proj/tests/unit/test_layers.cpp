#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "srl/layers.hpp"

using namespace srl;

TEST_SUITE("layers") {

TEST_CASE("conv2d examples") {
  Rng rng(1);
  SUBCASE("identity kernel is bit-exact identity") {
    nn::Conv2dParams p{NdArray(Shape{1, 1, 1, 1}, 1.0), NdArray(Shape{1}), {1, 1, 0, 0}};
    const NdArray x = oracle::random(Shape{1, 5, 7}, rng);
    CHECK(nn::conv2d(x, p) == x);
  }
  SUBCASE("3x3 identity kernel with same padding") {
    NdArray k(Shape{1, 1, 3, 3});
    k[4] = 1.0;
    nn::Conv2dParams p{k, NdArray(Shape{1}), {1, 1, 1, 1}};
    const NdArray x = oracle::random(Shape{1, 6, 4}, rng);
    CHECK(nn::conv2d(x, p) == x);
  }
  SUBCASE("all-ones 2x2 kernel sums the input") {
    nn::Conv2dParams p{NdArray(Shape{1, 1, 2, 2}, 1.0), NdArray(Shape{1}), {1, 1, 0, 0}};
    const NdArray x(Shape{1, 2, 2}, {1, 2, 3, 4});
    CHECK(nn::conv2d(x, p) == NdArray(Shape{1, 1, 1}, {10}));
  }
  SUBCASE("random input against the loop oracle") {
    for (auto [s, pad] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 1}, {1, 0}, {2, 0}}) {
      const NdArray x = oracle::random(Shape{2, 8, 8}, rng);
      nn::Conv2dParams p{oracle::random(Shape{3, 2, 3, 3}, rng), oracle::random(Shape{3}, rng),
                         {s, s, pad, pad}};
      const NdArray want = oracle::conv2d(x, p.kernel, p.bias, s, s, pad, pad);
      const NdArray got = nn::conv2d(x, p);
      REQUIRE(got.shape() == want.shape());
      CHECK(max_abs_diff(got, want) < 1e-12);
    }
  }
  SUBCASE("output size formula") {
    nn::Conv2dParams p{NdArray(Shape{1, 1, 3, 3}), NdArray(Shape{1}), {2, 2, 1, 1}};
    CHECK(nn::conv2d(NdArray(Shape{1, 7, 10}), p).shape() == Shape{1, 4, 5});
  }
  SUBCASE("channel mismatch") {
    nn::Conv2dParams p{NdArray(Shape{1, 2, 1, 1}), NdArray(Shape{1}), {1, 1, 0, 0}};
    CHECK_THROWS_WITH(nn::conv2d(NdArray(Shape{3, 2, 2}), p), doctest::Contains("channel"));
  }
}

TEST_CASE("linear examples") {
  Rng rng(2);
  nn::LinearParams id{NdArray::matrix(2, 2, {1, 0, 0, 1}), NdArray(Shape{2})};
  CHECK(nn::linear(NdArray::vector({5, -3}), id) == NdArray::vector({5, -3}));
  nn::LinearParams p{NdArray::matrix(1, 2, {1, 1}), NdArray::vector({1})};
  CHECK(nn::linear(NdArray::vector({2, 3}), p) == NdArray::vector({6}));
  CHECK_THROWS(nn::linear(NdArray::vector({2, 3, 4}), p));

  nn::LinearParams r = nn::make_linear(8, 16, rng);
  for (auto& b : r.bias.data()) b = rng.uniform(-1, 1);
  const NdArray x = oracle::random(Shape{16}, rng);
  const auto want = oracle::affine(r.weight, x.values(), r.bias);
  CHECK(max_abs_diff(nn::linear(x, r), NdArray::vector(want)) < 1e-12);
}

TEST_CASE("initialisation") {
  Rng rng(3);
  auto c = nn::make_conv2d(4, 2, 3, 3, 2, rng);
  const double lim = std::sqrt(6.0 / (2 * 9 + 4 * 9));
  for (double v : c.kernel.data()) CHECK(std::abs(v) <= lim);
  CHECK(c.bias == NdArray(Shape{4}));
  CHECK(c.geometry.pad_h == 1);
  CHECK(c.geometry.stride_w == 2);
  auto l = nn::make_lstm(5, 3, rng);
  CHECK(l.w_ih.shape() == Shape{12, 5});
  CHECK(l.w_hh.shape() == Shape{12, 3});
  for (std::size_t i = 0; i < 12; ++i) CHECK(l.bias[i] == (i >= 3 && i < 6 ? 1.0 : 0.0));
}

TEST_CASE("lstm") {
  Rng rng(4);
  SUBCASE("zero weights give zero output") {
    nn::LstmParams p{NdArray(Shape{8, 3}), NdArray(Shape{8, 2}), NdArray(Shape{8}), 2};
    const NdArray out = nn::lstm(oracle::random(Shape{4, 3}, rng), p, NdArray(Shape{2}),
                                 NdArray(Shape{2}));
    CHECK(out == NdArray(Shape{4, 2}));
  }
  SUBCASE("matches the scalar oracle") {
    for (std::size_t T : {1, 5}) {
      auto p = nn::make_lstm(3, 4, rng);
      for (auto& b : p.bias.data()) b += rng.uniform(-0.5, 0.5);
      const NdArray seq = oracle::random(Shape{T, 3}, rng);
      const NdArray got = nn::lstm(seq, p, NdArray(Shape{4}), NdArray(Shape{4}));
      CHECK(max_abs_diff(got, oracle::lstm(seq, p.w_ih, p.w_hh, p.bias, 4)) < 1e-12);
    }
  }
  SUBCASE("dimension mismatch") {
    auto p = nn::make_lstm(3, 4, rng);
    CHECK_THROWS(nn::lstm(NdArray(Shape{2, 3}), p, NdArray(Shape{3}), NdArray(Shape{4})));
    CHECK_THROWS(nn::lstm(NdArray(Shape{2, 5}), p, NdArray(Shape{4}), NdArray(Shape{4})));
  }
}

TEST_CASE("layer gradients pass grad_check on 16 instances") {
  for (int t = 0; t < 16; ++t) {
    Rng rng(mix_seed(11, static_cast<std::uint64_t>(t)));
    {
      ag::Graph g;
      nn::Binder b(g, "", true);
      auto p = nn::make_conv2d(2, 2, 3, 3, 1 + t % 2, rng);
      for (auto& v : p.bias.data()) v = rng.uniform(-1, 1);
      auto vars = nn::bind(b, "conv", p);
      ag::Var x = g.parameter("x", oracle::random(Shape{2, 5, 5}, rng));
      ag::Var y = nn::conv2d(x, vars);
      auto rep = ag::grad_check(
          g, ag::sum(ag::mul(ag::tanh(y), g.constant(oracle::random(y.shape(), rng)))), {});
      CHECK(rep.passed);
    }
    {
      ag::Graph g;
      nn::Binder b(g, "", true);
      auto vars = nn::bind(b, "fc", nn::make_linear(3, 5, rng));
      ag::Var y = ag::sigmoid(nn::linear(g.parameter("x", oracle::random(Shape{5}, rng)), vars));
      CHECK(ag::grad_check(g, ag::sum(ag::mul(y, g.constant(oracle::random(Shape{3}, rng)))), {})
                .passed);
    }
    {
      ag::Graph g;
      nn::Binder b(g, "", true);
      auto vars = nn::bind(b, "lstm", nn::make_lstm(3, 2, rng));
      ag::Var seq = g.parameter("seq", oracle::random(Shape{4, 3}, rng));
      auto rep = ag::grad_check(g, ag::sum(nn::lstm(seq, vars)), {});
      CHECK(rep.passed);
      CHECK(rep.entries.size() == 4);
    }
  }
}

TEST_CASE("l2_normalize") {
  CHECK(max_abs_diff(nn::l2_normalize(NdArray::vector({3, 4})), NdArray::vector({0.6, 0.8})) <
        1e-15);
  const NdArray unit = NdArray::vector({0.6, 0.8});
  CHECK(max_abs_diff(nn::l2_normalize(unit), unit) < 1e-15);
  CHECK(nn::l2_normalize(NdArray::vector({0, 0})) == NdArray::vector({0, 0}));
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const NdArray v = oracle::random(Shape{7}, rng);
    const NdArray n = nn::l2_normalize(v);
    double norm = 0.0;
    for (double x : n.data()) norm += x * x;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-12);
    NdArray s = v;
    const double c = rng.uniform(1e-3, 1e3);
    for (auto& x : s.data()) x *= c;
    CHECK(max_abs_diff(nn::l2_normalize(s), n) < 1e-12);
  }
}

}  // TEST_SUITE
