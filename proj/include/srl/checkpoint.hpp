#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "srl/encoder.hpp"
#include "srl/separator.hpp"

namespace srl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named tensors stored as 32-bit floats, in insertion order.
struct Checkpoint {
  std::vector<std::pair<std::string, NdArray>> tensors;

  void put(const std::string& name, const NdArray& value);
  const NdArray& get(const std::string& name) const;
  const NdArray* find(const std::string& name) const;
};

// "SRLF", u32 version, u32 count, then per tensor: u32 name length, name,
// u32 rank, u32 extents, float32 data. Little-endian throughout.
std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct TrainingMeta {
  std::size_t epoch = 0;  // epochs completed
  double best_val_mse = 0.0;
};

Checkpoint to_checkpoint(const SeparatorModel& model,
                         const std::optional<TrainingMeta>& meta = std::nullopt);
Checkpoint to_checkpoint(const EncoderModel& model);

/// Rebuilds the architecture from the tensor shapes.
SeparatorModel separator_from_checkpoint(const Checkpoint& ckpt);
EncoderModel encoder_from_checkpoint(const Checkpoint& ckpt);
std::optional<TrainingMeta> training_meta(const Checkpoint& ckpt);

}  // namespace srl
