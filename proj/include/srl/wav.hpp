#pragma once

#include <filesystem>
#include <span>
#include <vector>
#include <stdexcept>

#include "srl/dsp.hpp"

namespace srl {

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// PCM 16-bit or IEEE float 32-bit; the first channel of multichannel data.
dsp::Waveform read_wav(const std::filesystem::path& path);
dsp::Waveform parse_wav(std::span<const unsigned char> bytes);

/// Mono 16-bit PCM, canonical 44-byte header.
void write_wav(const std::filesystem::path& path, const dsp::Waveform& w);
std::vector<unsigned char> encode_wav(const dsp::Waveform& w);

}  // namespace srl
