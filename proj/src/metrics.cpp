#include "srl/metrics.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "srl/text.hpp"

namespace srl {

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size())
    throw std::invalid_argument("si_sdr: lengths differ (" +
                                std::to_string(estimate.size()) + " vs " +
                                std::to_string(reference.size()) + ")");
  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    dot += estimate[i] * reference[i];
    ref_energy += reference[i] * reference[i];
  }
  if (!(ref_energy > 0.0)) throw std::invalid_argument("si_sdr: zero-energy reference");
  const double alpha = dot / ref_energy;
  double target = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference[i];
    const double e = estimate[i] - s;
    target += s * s;
    noise += e * e;
  }
  if (noise == 0.0) return target > 0.0 ? kSiSdrCeiling : kSiSdrFloor;
  if (target == 0.0) return kSiSdrFloor;
  return std::clamp(10.0 * std::log10(target / noise), kSiSdrFloor, kSiSdrCeiling);
}

std::string to_string(MaskSource m) {
  switch (m) {
    case MaskSource::Model: return "model";
    case MaskSource::Identity: return "identity";
    case MaskSource::Oracle: return "oracle";
  }
  return "?";
}

MaskSource parse_mask_source(const std::string& s) {
  if (s == "model") return MaskSource::Model;
  if (s == "identity") return MaskSource::Identity;
  if (s == "oracle") return MaskSource::Oracle;
  throw std::invalid_argument("unknown mask '" + s + "' (model|identity|oracle)");
}

NdArray oracle_mask(const NdArray& clean, const NdArray& interference) {
  if (!clean.same_shape(interference))
    throw std::invalid_argument("oracle_mask: shape mismatch");
  NdArray m(clean.shape());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double d = clean[i] + interference[i];
    m[i] = d > 0.0 ? clean[i] / d : 0.0;
  }
  return m;
}

dsp::Waveform enhance(const ExampleFeatures& ex, const NdArray& mask) {
  const auto split = apply_mask(ex.noisy.magnitude, mask);
  return dsp::reconstruct_with_phase(split.enhanced, ex.noisy.phase, ex.noisy.params);
}

namespace {

ExampleMetrics summarize(const std::vector<ExampleMetrics>& rows, bool stddev,
                         const ExampleMetrics& mean) {
  ExampleMetrics out;
  out.id = stddev ? "std" : "mean";
  const double n = static_cast<double>(rows.size());
  auto stat = [&](auto field) {
    double acc = 0.0;
    if (!stddev) {
      for (const auto& r : rows) acc += r.*field;
      return acc / n;
    }
    if (rows.size() < 2) return 0.0;
    for (const auto& r : rows) acc += (r.*field - mean.*field) * (r.*field - mean.*field);
    return std::sqrt(acc / (n - 1.0));
  };
  out.snr_db = stat(&ExampleMetrics::snr_db);
  out.si_sdr_noisy = stat(&ExampleMetrics::si_sdr_noisy);
  out.si_sdr_enhanced = stat(&ExampleMetrics::si_sdr_enhanced);
  out.improvement = stat(&ExampleMetrics::improvement);
  return out;
}

}  // namespace

void EvaluationReport::write_csv(std::ostream& os) const {
  os << "example_id,snr_db,si_sdr_noisy,si_sdr_enhanced,improvement\n";
  auto line = [&](const ExampleMetrics& r) {
    os << r.id << ',' << format_double(r.snr_db) << ',' << format_double(r.si_sdr_noisy)
       << ',' << format_double(r.si_sdr_enhanced) << ',' << format_double(r.improvement)
       << '\n';
  };
  for (const auto& r : rows) line(r);
  line(mean);
  line(stddev);
}

EvaluationReport evaluate(const std::vector<ExampleFeatures>& examples,
                          const SeparatorModel* separator, const EncoderModel* encoder,
                          MaskSource source) {
  if (examples.empty()) throw std::invalid_argument("evaluate: empty split");
  if (source == MaskSource::Model && (!separator || !encoder))
    throw std::invalid_argument("evaluate: model masks need a separator and an encoder");
  EvaluationReport report;
  for (const auto& ex : examples) {
    NdArray mask;
    switch (source) {
      case MaskSource::Model:
        if (ex.reference.empty())
          throw std::invalid_argument("evaluate: example '" + ex.id +
                                      "' has no reference utterance");
        mask = predict_mask(ex.noisy.magnitude, enroll(ex.reference, *encoder), *separator);
        break;
      case MaskSource::Identity:
        mask = NdArray(ex.noisy.magnitude.shape(), 1.0);
        break;
      case MaskSource::Oracle:
        mask = oracle_mask(ex.clean, ex.interference);
        break;
    }
    const auto enhanced = enhance(ex, mask);
    const auto noisy = dsp::istft(ex.noisy);
    const std::span<const double> clean(ex.clean_wave.samples.data(), noisy.size());
    if (ex.clean_wave.size() < noisy.size())
      throw std::invalid_argument("evaluate: clean signal shorter than the frames");
    ExampleMetrics m;
    m.id = ex.id;
    m.snr_db = ex.snr_db;
    m.si_sdr_noisy = si_sdr(noisy.samples, clean);
    m.si_sdr_enhanced = si_sdr(enhanced.samples, clean);
    m.improvement = m.si_sdr_enhanced - m.si_sdr_noisy;
    report.rows.push_back(m);
  }
  report.mean = summarize(report.rows, false, {});
  report.stddev = summarize(report.rows, true, report.mean);
  return report;
}

}  // namespace srl
