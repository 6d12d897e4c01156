#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "oracles.hpp"
#include "srl/checkpoint.hpp"
#include "srl/metrics.hpp"
#include "srl/train.hpp"
#include "toy.hpp"

using namespace srl;
namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

NdArray to_float(NdArray a) {
  for (auto& v : a.data()) v = static_cast<float>(v);
  return a;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "srlsep-unit";
  fs::create_directories(dir);
  return dir / name;
}

std::string error_of(std::vector<unsigned char> bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("tensor round trip at 32-bit precision") {
  Rng rng(1);
  Checkpoint c;
  c.put("a", oracle::random(Shape{3, 4}, rng));
  c.put("b.scalar", NdArray::scalar(0.1));
  c.put("c", oracle::random(Shape{2, 1, 3, 3}, rng));
  const auto back = decode_checkpoint(encode_checkpoint(c));
  REQUIRE(back.tensors.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.tensors[i].first == c.tensors[i].first);
    CHECK(back.tensors[i].second == to_float(c.tensors[i].second));
  }
  CHECK(back.get("b.scalar").rank() == 0);
  CHECK_THROWS_AS(back.get("missing"), CheckpointError);
  CHECK(back.find("missing") == nullptr);
}

TEST_CASE("save load save is byte identical") {
  const auto model = toy::separator(3, 4);
  const auto p1 = scratch("a.srlf"), p2 = scratch("b.srlf");
  save_checkpoint(p1.string(), to_checkpoint(model, TrainingMeta{7, 0.25}));
  save_checkpoint(p2.string(), load_checkpoint(p1.string()));
  CHECK(read_bytes(p1) == read_bytes(p2));
  const auto meta = training_meta(load_checkpoint(p1.string()));
  REQUIRE(meta);
  CHECK(meta->epoch == 7);
  CHECK(meta->best_val_mse == 0.25);
  CHECK_FALSE(training_meta(to_checkpoint(model)));
}

TEST_CASE("corruption is reported") {
  Checkpoint c;
  c.put("w", NdArray::matrix(1, 2, {1, 2}));
  const auto good = encode_checkpoint(c);

  auto magic = good;
  magic[0] = 'X';
  CHECK(error_of(magic).find("magic") != std::string::npos);

  auto version = good;
  version[4] = 2;
  const auto msg = error_of(version);
  CHECK(msg.find("version 2") != std::string::npos);
  CHECK(msg.find("version 1") != std::string::npos);

  auto length = good;
  length[12] = 0xff;
  length[13] = 0xff;
  CHECK(error_of(length).find("offset 12") != std::string::npos);

  auto truncated = good;
  truncated.resize(good.size() - 3);
  CHECK(error_of(truncated).find("truncated") != std::string::npos);

  auto trailing = good;
  trailing.push_back(0);
  CHECK(error_of(trailing).find("trailing") != std::string::npos);

  CHECK(error_of({}).find("truncated") != std::string::npos);
  CHECK_THROWS(load_checkpoint(scratch("does-not-exist.srlf").string()));
}

TEST_CASE("models rebuild from their tensors") {
  auto sep = toy::separator(4, 4);
  auto back = separator_from_checkpoint(to_checkpoint(sep));
  CHECK(back.config.channels == sep.config.channels);
  CHECK(back.config.bins == sep.config.bins);
  CHECK(back.config.dvector_dim == sep.config.dvector_dim);
  auto back_params = back.parameters();
  auto params = sep.parameters();
  REQUIRE(back_params.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK(*back_params[i].second == *params[i].second);

  auto enc = EncoderModel::create(EncoderConfig::tiny(33), 5);
  enc.config.log_compress = true;
  const auto enc_back = encoder_from_checkpoint(to_checkpoint(enc));
  CHECK(enc_back.frozen);
  CHECK(enc_back.config.strides == enc.config.strides);
  CHECK(enc_back.config.log_compress);
  CHECK(enc_back.dim() == enc.dim());

  Checkpoint wrong;
  wrong.put("sep.conv1.kernel", NdArray(Shape{2, 2}));
  CHECK_THROWS_AS(separator_from_checkpoint(wrong), CheckpointError);
  CHECK_THROWS_AS(encoder_from_checkpoint(Checkpoint{}), CheckpointError);
}

TEST_CASE("trained model survives a checkpoint") {
  const auto ds = build_dataset(toy::corpus(8, 4, 1));
  const auto feats = toy::features(ds);
  const auto enc = toy::encoder(1);
  const auto items = make_train_items(feats, enc, AnchorMode::Clean);
  TrainSchedule schedule{1e-3, 0.99, 1, 0, 4};
  LossConfig loss;
  const auto trained = fit(items, {}, toy::separator(2, enc.dim()), enc, loss, schedule, 3);
  REQUIRE(trained.steps == 1);

  const auto path = scratch("trained.srlf");
  save_checkpoint(path.string(), to_checkpoint(trained.model));
  const auto reloaded = separator_from_checkpoint(load_checkpoint(path.string()));

  SeparatorModel rounded = trained.model;
  for (auto& [name, p] : rounded.parameters()) *p = to_float(*p);

  const auto a = evaluate(feats, &trained.model, &enc);
  const auto b = evaluate(feats, &reloaded, &enc);
  const auto c = evaluate(feats, &rounded, &enc);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(b.rows[i].si_sdr_enhanced == c.rows[i].si_sdr_enhanced);
    CHECK(std::abs(a.rows[i].si_sdr_enhanced - b.rows[i].si_sdr_enhanced) < 1e-4);
  }
}

}  // TEST_SUITE
