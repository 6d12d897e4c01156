#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "srl/dsp.hpp"

namespace srl {

struct SyntheticSpeaker {
  int id = 0;
  double f0_base = 150.0;  // Hz, in [90, 300]
  std::array<double, 12> harmonics{};  // relative amplitudes in [0, 1]
  double vibrato_rate = 5.0;   // Hz
  double vibrato_depth = 0.01; // relative to f0

  /// Speakers drawn for one pool share `pool_seed`; f0 values are
  /// stratified over [90, 300] so that the pool is spread out.
  static std::vector<SyntheticSpeaker> draw_pool(std::size_t count,
                                                 std::uint64_t pool_seed);
};

inline constexpr double kPeakLevel = 0.5;

/// Harmonic voice with a piecewise f0 contour, vibrato, syllable envelope
/// with silences and a -40 dB noise floor, peak-normalised to 0.5.
dsp::Waveform synth_utterance(const SyntheticSpeaker& speaker, std::uint64_t seed,
                              double duration_s, double sample_rate = 16000.0);

double rms(const std::vector<double>& x);

/// Rounds to a 2^-40 grid. Sums of two values on the grid below 2 are exact.
double snap(double x);

struct MixResult {
  dsp::Waveform noisy;
  std::vector<double> scaled_interference;  // gain * interference, snapped
  double gain = 0.0;
  bool saturated = false;
};

/// noisy = clean + g * interference with g = rms(clean) /
/// (rms(interference) * 10^(snr/20)). The interference is looped or trimmed
/// to the clean length.
MixResult mix(const dsp::Waveform& clean, const dsp::Waveform& interference,
              double snr_db);

enum class Split { Train, Validation };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestRow {
  std::string id;
  Split split = Split::Train;
  int target_speaker = 0;
  int interference_speaker = 0;
  double snr_db = 0.0;
  std::string source;  // generator seed or comma-separated paths
};

struct DatasetManifest {
  std::vector<ManifestRow> rows;

  /// id<TAB>split<TAB>target<TAB>interferer<TAB>snr-db<TAB>seed-or-paths
  void write(std::ostream& os) const;
  static DatasetManifest read(std::istream& is);
};

struct TrainingExample {
  std::string id;
  Split split = Split::Train;
  int target_speaker = 0;
  int interference_speaker = 0;
  double snr_db = 0.0;
  double gain = 0.0;
  int headroom_halvings = 0;  // target scaled by 2^-n to keep the mix unclipped
  dsp::Waveform clean;
  dsp::Waveform reference;
  dsp::Waveform interference;  // as added to the mixture, i.e. gain-scaled
  dsp::Waveform noisy;
};

struct DatasetConfig {
  std::size_t num_speakers = 12;
  std::size_t utterances_per_speaker = 20;
  double duration_s = 3.0;
  double snr_min_db = -5.0;
  double snr_max_db = 5.0;
  double validation_fraction = 0.25;
  double sample_rate = 16000.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<SyntheticSpeaker> speakers;
  std::vector<TrainingExample> examples;
  std::size_t saturated = 0;
};

/// Speaker-disjoint train/validation corpus; every speaker is the target of
/// `utterances_per_speaker` examples.
Dataset build_dataset(const DatasetConfig& config);

/// Spectrogram features of one example.
struct ExampleFeatures {
  std::string id;
  double snr_db = 0.0;
  dsp::Spectrogram noisy;
  NdArray clean;         // magnitude
  NdArray reference;     // magnitude, may be empty
  NdArray interference;  // magnitude of the scaled interference
  dsp::Waveform clean_wave;
};

ExampleFeatures compute_features(const TrainingExample& ex,
                                 const dsp::FrameParams& params);

}  // namespace srl
