#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "srl/data.hpp"
#include "srl/dsp.hpp"
#include "srl/encoder.hpp"
#include "srl/losses.hpp"
#include "srl/separator.hpp"
#include "srl/train.hpp"

namespace srl {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PretrainConfig {
  std::size_t num_speakers = 24;
  std::size_t utterances_per_speaker = 8;
  double duration_s = 1.0;
  TrainSchedule schedule{1e-3, 0.99, 30, 0, 4};
};

/// Every knob of a run. Text form: one `dotted.key = value` per line, `#`
/// starts a comment.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string preset = "desk";  // desk | canonical
  bool log_compress = false;
  DatasetConfig data;
  dsp::FrameParams frame;
  LossConfig loss;
  TrainSchedule train;
  PretrainConfig pretrain;
  std::string data_dir = "data";
  std::string encoder_path = "encoder.srlf";
  std::string checkpoint_path = "separator.srlf";

  /// Sets one key from its text value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  static RunConfig parse(std::istream& is);
  static RunConfig parse_file(const std::string& path);
  std::string serialize() const;
  void validate() const;

  EncoderConfig encoder_config() const;
  SeparatorConfig separator_config() const;
  /// Dataset parameters with the run seed and frame sample rate applied.
  DatasetConfig dataset_config() const;

  bool operator==(const RunConfig& other) const { return serialize() == other.serialize(); }
};

}  // namespace srl
