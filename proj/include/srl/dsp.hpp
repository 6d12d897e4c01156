#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "srl/ndarray.hpp"

namespace srl::dsp {

struct FrameParams {
  std::size_t window_length = 400;  // 25 ms at 16 kHz
  std::size_t hop_length = 160;     // 10 ms
  std::size_t fft_size = 512;
  double sample_rate = 16000.0;

  std::size_t bins() const { return fft_size / 2 + 1; }
  void validate() const;
  bool operator==(const FrameParams&) const = default;
};

/// Frame cap on the speaker-encoder path.
inline constexpr std::size_t kEncoderMaxFrames = 300;

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;

  std::size_t size() const { return samples.size(); }
};

struct Spectrogram {
  NdArray magnitude;  // frames x bins, >= 0
  NdArray phase;      // frames x bins, in (-pi, pi]
  FrameParams params;

  std::size_t frames() const { return magnitude.dim(0); }
  std::size_t bins() const { return magnitude.dim(1); }
};

/// In-place radix-2 transform; size must be a power of two. The inverse
/// includes the 1/N factor.
void fft(std::vector<std::complex<double>>& data, bool inverse = false);

/// Symmetric Hamming window, 0.54 - 0.46 cos(2 pi n / (L - 1)).
std::vector<double> hamming(std::size_t length);

/// floor((n - window) / hop) + 1; zero when n < window.
std::size_t frame_count(std::size_t num_samples, const FrameParams& p);
/// Samples covered by `frames` frames.
std::size_t covered_length(std::size_t frames, const FrameParams& p);

Spectrogram stft(const Waveform& w, const FrameParams& p);

/// Weighted overlap-add normalised by the summed squared window.
Waveform istft(const Spectrogram& spec);

Waveform reconstruct_with_phase(const NdArray& magnitude, const NdArray& phase,
                                const FrameParams& p);

/// First `max_frames` rows of a (frames x bins) grid.
NdArray truncate_frames(const NdArray& grid, std::size_t max_frames = kEncoderMaxFrames);

}  // namespace srl::dsp
