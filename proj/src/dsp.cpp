#include "srl/dsp.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace srl::dsp {

void FrameParams::validate() const {
  if (window_length == 0 || hop_length == 0)
    throw std::invalid_argument("frame params: zero window or hop");
  if (fft_size < window_length)
    throw std::invalid_argument("frame params: fft size smaller than window");
  if ((fft_size & (fft_size - 1)) != 0)
    throw std::invalid_argument("frame params: fft size must be a power of two");
  if (!(sample_rate > 0.0))
    throw std::invalid_argument("frame params: sample rate must be positive");
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft: size " + std::to_string(n) +
                                " is not a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  // Twiddles from the angle directly; recurrence by multiplication drifts.
  std::vector<std::complex<double>> twiddle(n / 2);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                       static_cast<double>(n);
    twiddle[k] = {std::cos(ang), std::sin(ang)};
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * twiddle[k * stride];
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= static_cast<double>(n);
}

std::vector<double> hamming(std::size_t length) {
  std::vector<double> w(length, 1.0);
  if (length < 2) return w;
  for (std::size_t n = 0; n < length; ++n)
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                  static_cast<double>(length - 1));
  return w;
}

std::size_t frame_count(std::size_t num_samples, const FrameParams& p) {
  if (num_samples < p.window_length) return 0;
  return (num_samples - p.window_length) / p.hop_length + 1;
}

std::size_t covered_length(std::size_t frames, const FrameParams& p) {
  return frames == 0 ? 0 : (frames - 1) * p.hop_length + p.window_length;
}

Spectrogram stft(const Waveform& w, const FrameParams& p) {
  p.validate();
  const std::size_t frames = frame_count(w.size(), p);
  if (frames == 0)
    throw std::invalid_argument("stft: signal of " + std::to_string(w.size()) +
                                " samples is shorter than one window (" +
                                std::to_string(p.window_length) + ")");
  const auto window = hamming(p.window_length);
  const std::size_t bins = p.bins();
  Spectrogram s{NdArray(Shape{frames, bins}), NdArray(Shape{frames, bins}), p};
  std::vector<std::complex<double>> buf(p.fft_size);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    const double* src = w.samples.data() + t * p.hop_length;
    for (std::size_t n = 0; n < p.window_length; ++n) buf[n] = src[n] * window[n];
    fft(buf);
    for (std::size_t k = 0; k < bins; ++k) {
      s.magnitude.at(t, k) = std::abs(buf[k]);
      double ph = std::arg(buf[k]);
      if (ph <= -std::numbers::pi) ph = std::numbers::pi;
      s.phase.at(t, k) = ph;
    }
  }
  return s;
}

Waveform istft(const Spectrogram& spec) {
  const FrameParams& p = spec.params;
  p.validate();
  if (!spec.magnitude.same_shape(spec.phase))
    throw std::invalid_argument("istft: magnitude/phase shape mismatch");
  if (spec.magnitude.rank() != 2 || spec.bins() != p.bins())
    throw std::invalid_argument("istft: grid " +
                                shape_to_string(spec.magnitude.shape()) +
                                " inconsistent with fft size " +
                                std::to_string(p.fft_size));
  const std::size_t frames = spec.frames();
  const std::size_t bins = p.bins();
  const std::size_t length = covered_length(frames, p);
  const auto window = hamming(p.window_length);

  std::vector<double> num(length, 0.0), den(length, 0.0);
  std::vector<std::complex<double>> buf(p.fft_size);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < bins; ++k)
      buf[k] = std::polar(spec.magnitude.at(t, k), spec.phase.at(t, k));
    for (std::size_t k = bins; k < p.fft_size; ++k)
      buf[k] = std::conj(buf[p.fft_size - k]);
    fft(buf, true);
    const std::size_t off = t * p.hop_length;
    for (std::size_t n = 0; n < p.window_length; ++n) {
      num[off + n] += buf[n].real() * window[n];
      den[off + n] += window[n] * window[n];
    }
  }
  Waveform out{std::vector<double>(length, 0.0), p.sample_rate};
  for (std::size_t i = 0; i < length; ++i)
    out.samples[i] = den[i] < 1e-8 ? 0.0 : num[i] / den[i];
  return out;
}

Waveform reconstruct_with_phase(const NdArray& magnitude, const NdArray& phase,
                                const FrameParams& p) {
  if (!magnitude.same_shape(phase))
    throw std::invalid_argument("reconstruct_with_phase: magnitude " +
                                shape_to_string(magnitude.shape()) +
                                " vs phase " + shape_to_string(phase.shape()));
  return istft(Spectrogram{magnitude, phase, p});
}

NdArray truncate_frames(const NdArray& grid, std::size_t max_frames) {
  if (grid.rank() != 2) throw std::invalid_argument("truncate_frames: rank != 2");
  if (grid.dim(0) <= max_frames) return grid;
  const std::size_t cols = grid.dim(1);
  std::vector<double> v(grid.values().begin(),
                        grid.values().begin() + static_cast<std::ptrdiff_t>(max_frames * cols));
  return NdArray(Shape{max_frames, cols}, std::move(v));
}

}  // namespace srl::dsp
