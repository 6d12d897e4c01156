#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "srl/data.hpp"
#include "srl/encoder.hpp"
#include "srl/separator.hpp"

namespace srl {

inline constexpr double kSiSdrCeiling = 100.0;
inline constexpr double kSiSdrFloor = -100.0;

/// Scale-invariant SDR in dB, clamped to [-100, 100].
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

enum class MaskSource { Model, Identity, Oracle };
std::string to_string(MaskSource m);
MaskSource parse_mask_source(const std::string& s);

struct ExampleMetrics {
  std::string id;
  double snr_db = 0.0;
  double si_sdr_noisy = 0.0;
  double si_sdr_enhanced = 0.0;
  double improvement = 0.0;
};

struct EvaluationReport {
  std::vector<ExampleMetrics> rows;
  ExampleMetrics mean;
  ExampleMetrics stddev;  // sample standard deviation, 0 for one row

  void write_csv(std::ostream& os) const;
};

/// Oracle ratio mask |C| / (|C| + |I|), 0 where both vanish.
NdArray oracle_mask(const NdArray& clean, const NdArray& interference);

/// Enhanced waveform: masked noisy magnitude with the noisy phase.
dsp::Waveform enhance(const ExampleFeatures& ex, const NdArray& mask);

/// SI-SDR of the enhanced and the resynthesised noisy signal against the clean
/// signal over the samples covered by the frames. `separator` and `encoder`
/// are only used with MaskSource::Model.
EvaluationReport evaluate(const std::vector<ExampleFeatures>& examples,
                          const SeparatorModel* separator, const EncoderModel* encoder,
                          MaskSource source = MaskSource::Model);

}  // namespace srl
