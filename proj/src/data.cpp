#include "srl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "srl/rng.hpp"
#include "srl/text.hpp"

namespace srl {

namespace {

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("manifest line " + std::to_string(line) +
                                ": bad number '" + s + "'");
  return v;
}

int parse_int(const std::string& s, std::size_t line) {
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("manifest line " + std::to_string(line) +
                                ": bad integer '" + s + "'");
  return v;
}

}  // namespace

std::vector<SyntheticSpeaker> SyntheticSpeaker::draw_pool(std::size_t count,
                                                          std::uint64_t pool_seed) {
  Rng rng(pool_seed);
  std::vector<std::size_t> strata(count);
  for (std::size_t i = 0; i < count; ++i) strata[i] = i;
  rng.shuffle(strata.begin(), strata.end());
  std::vector<SyntheticSpeaker> pool(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& s = pool[i];
    s.id = static_cast<int>(i);
    const double pos = (static_cast<double>(strata[i]) + rng.uniform(0.1, 0.9)) /
                       static_cast<double>(count);
    s.f0_base = 90.0 * std::pow(300.0 / 90.0, pos);
    s.harmonics[0] = 1.0;
    for (std::size_t k = 1; k < s.harmonics.size(); ++k)
      s.harmonics[k] = rng.uniform(0.15, 1.0) * std::pow(static_cast<double>(k + 1), -0.7);
    s.vibrato_rate = rng.uniform(4.0, 7.0);
    s.vibrato_depth = rng.uniform(0.005, 0.02);
  }
  return pool;
}

double snap(double x) {
  constexpr double kGrid = 0x1.0p40;
  return std::round(x * kGrid) / kGrid;
}

double rms(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

dsp::Waveform synth_utterance(const SyntheticSpeaker& speaker, std::uint64_t seed,
                              double duration_s, double sample_rate) {
  if (!(duration_s >= 1.0 && duration_s <= 10.0))
    throw std::invalid_argument("synth_utterance: duration must lie in [1, 10] s");
  Rng rng(mix_seed(seed, 0x5eed0000ULL + static_cast<std::uint64_t>(speaker.id)));
  const auto n = static_cast<std::size_t>(std::lround(duration_s * sample_rate));

  // Layout: gap, voiced, gap, voiced, ..., gap.
  const std::size_t segments = 3 + rng.index(4);
  std::vector<double> gaps(segments + 1), voiced(segments);
  double gap_total = 0.0, voiced_total = 0.0;
  for (auto& g : gaps) gap_total += (g = rng.uniform(0.05, 0.2) * sample_rate);
  for (auto& v : voiced) voiced_total += (v = rng.uniform(0.6, 1.4));
  const double gap_budget = std::min(gap_total, 0.3 * static_cast<double>(n));
  for (auto& g : gaps) g *= gap_budget / gap_total;
  for (auto& v : voiced) v *= (static_cast<double>(n) - gap_budget) / voiced_total;

  std::vector<double> contour(segments), level(segments);
  for (std::size_t s = 0; s < segments; ++s) {
    contour[s] = rng.uniform(0.98, 1.02);
    level[s] = rng.uniform(0.6, 1.0);
  }
  const double vib_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  std::vector<double> x(n, 0.0);
  double phase = 0.0;
  double cursor = 0.0;
  std::size_t i = 0;
  const double ramp = 0.02 * sample_rate;
  for (std::size_t s = 0; s <= segments; ++s) {
    cursor += gaps[s];
    const std::size_t gap_end = std::min(n, static_cast<std::size_t>(cursor));
    for (; i < gap_end; ++i)
      phase += 2.0 * std::numbers::pi * speaker.f0_base * contour[std::min(s, segments - 1)] /
               sample_rate;
    if (s == segments) break;
    const std::size_t start = i;
    cursor += voiced[s];
    const std::size_t end = std::min(n, static_cast<std::size_t>(cursor));
    const double len = static_cast<double>(end - start);
    const double r = std::min(ramp, len / 4.0);
    for (; i < end; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      const double f = speaker.f0_base * contour[s] *
                       (1.0 + speaker.vibrato_depth *
                                  std::sin(2.0 * std::numbers::pi * speaker.vibrato_rate * t +
                                           vib_phase));
      phase += 2.0 * std::numbers::pi * f / sample_rate;
      const double pos = static_cast<double>(i - start);
      double env = 1.0;
      if (pos < r) env = 0.5 - 0.5 * std::cos(std::numbers::pi * pos / r);
      else if (len - pos < r) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (len - pos) / r);
      double v = 0.0;
      for (std::size_t k = 0; k < speaker.harmonics.size(); ++k) {
        if (f * static_cast<double>(k + 1) >= 0.5 * sample_rate) break;
        v += speaker.harmonics[k] * std::sin(static_cast<double>(k + 1) * phase);
      }
      x[i] = level[s] * env * v;
    }
  }
  for (; i < n; ++i) x[i] = 0.0;

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double floor = (peak > 0.0 ? peak : 1.0) * std::pow(10.0, -40.0 / 20.0);
  for (auto& v : x) v += floor * rng.normal();
  peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double gain = kPeakLevel / peak;
  for (auto& v : x) v = snap(v * gain);
  return {std::move(x), sample_rate};
}

MixResult mix(const dsp::Waveform& clean, const dsp::Waveform& interference,
              double snr_db) {
  if (clean.sample_rate != interference.sample_rate)
    throw std::invalid_argument("mix: sample rates differ");
  if (clean.samples.empty() || interference.samples.empty())
    throw std::invalid_argument("mix: empty waveform");
  const std::size_t n = clean.size();
  std::vector<double> looped(n);
  for (std::size_t i = 0; i < n; ++i)
    looped[i] = interference.samples[i % interference.size()];
  const double ri = rms(looped);
  if (ri == 0.0) throw std::invalid_argument("mix: zero-energy interference");

  MixResult out;
  out.gain = rms(clean.samples) / (ri * std::pow(10.0, snr_db / 20.0));
  out.scaled_interference.resize(n);
  out.noisy = {std::vector<double>(n), clean.sample_rate};
  for (std::size_t i = 0; i < n; ++i) {
    out.scaled_interference[i] = snap(out.gain * looped[i]);
    double v = clean.samples[i] + out.scaled_interference[i];
    if (std::abs(v) > 1.0) {
      v = std::clamp(v, -1.0, 1.0);
      out.saturated = true;
    }
    out.noisy.samples[i] = v;
  }
  return out;
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "validation"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "validation" || s == "val") return Split::Validation;
  throw std::invalid_argument("unknown split '" + s + "'");
}

void DatasetManifest::write(std::ostream& os) const {
  for (const auto& r : rows)
    os << r.id << '\t' << to_string(r.split) << '\t' << r.target_speaker << '\t'
       << r.interference_speaker << '\t' << format_double(r.snr_db) << '\t'
       << r.source << '\n';
}

DatasetManifest DatasetManifest::read(std::istream& is) {
  DatasetManifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) f.push_back(field);
    if (f.size() != 6)
      throw std::invalid_argument("manifest line " + std::to_string(line_no) +
                                  ": expected 6 tab-separated fields, got " +
                                  std::to_string(f.size()));
    ManifestRow r;
    r.id = f[0];
    r.split = parse_split(f[1]);
    r.target_speaker = parse_int(f[2], line_no);
    r.interference_speaker = parse_int(f[3], line_no);
    r.snr_db = parse_double(f[4], line_no);
    r.source = f[5];
    m.rows.push_back(std::move(r));
  }
  return m;
}

void DatasetConfig::validate() const {
  if (num_speakers < 3)
    throw std::invalid_argument("dataset: need at least 3 speakers (target, "
                                "interferer, held-out), got " +
                                std::to_string(num_speakers));
  if (utterances_per_speaker == 0)
    throw std::invalid_argument("dataset: utterances per speaker must be positive");
  if (!(duration_s >= 1.0 && duration_s <= 10.0))
    throw std::invalid_argument("dataset: duration must lie in [1, 10] s");
  if (snr_min_db > snr_max_db)
    throw std::invalid_argument("dataset: snr range is empty");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("dataset: validation fraction must lie in (0, 1)");
}

Dataset build_dataset(const DatasetConfig& config) {
  config.validate();
  const std::size_t n = config.num_speakers;
  Dataset ds;
  ds.speakers = SyntheticSpeaker::draw_pool(n, mix_seed(config.seed, 1));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng split_rng(mix_seed(config.seed, 2));
  split_rng.shuffle(order.begin(), order.end());
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(config.validation_fraction * static_cast<double>(n))),
      1, n - 2);
  std::vector<Split> split(n, Split::Train);
  for (std::size_t i = 0; i < n_val; ++i) split[order[i]] = Split::Validation;

  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::size_t> pool;
    for (std::size_t o = 0; o < n; ++o)
      if (o != s && split[o] == split[s]) pool.push_back(o);
    if (pool.empty())
      for (std::size_t o = 0; o < n; ++o)
        if (o != s) pool.push_back(o);

    for (std::size_t u = 0; u < config.utterances_per_speaker; ++u) {
      const std::size_t index = s * config.utterances_per_speaker + u;
      const std::uint64_t ex_seed = mix_seed(config.seed, 1000 + index);
      Rng rng(ex_seed);
      const std::size_t other = pool[rng.index(pool.size())];
      const double snr = rng.uniform(config.snr_min_db, config.snr_max_db);

      TrainingExample ex;
      char id[32];
      std::snprintf(id, sizeof id, "ex%05zu", index);
      ex.id = id;
      ex.split = split[s];
      ex.target_speaker = static_cast<int>(s);
      ex.interference_speaker = static_cast<int>(other);
      ex.snr_db = snr;
      ex.clean = synth_utterance(ds.speakers[s], mix_seed(ex_seed, 1), config.duration_s,
                                 config.sample_rate);
      ex.reference = synth_utterance(ds.speakers[s], mix_seed(ex_seed, 2),
                                     config.duration_s, config.sample_rate);
      const auto interferer = synth_utterance(ds.speakers[other], mix_seed(ex_seed, 3),
                                              config.duration_s, config.sample_rate);
      auto m = mix(ex.clean, interferer, snr);
      // Headroom: halve the target until the mixture fits in [-1, 1]. Powers
      // of two keep the samples on the grid, so the identity stays exact.
      for (; m.saturated && ex.headroom_halvings < 8; ++ex.headroom_halvings) {
        for (auto& v : ex.clean.samples) v *= 0.5;
        m = mix(ex.clean, interferer, snr);
      }
      ex.gain = m.gain;
      ex.interference = {std::move(m.scaled_interference), config.sample_rate};
      ex.noisy = std::move(m.noisy);
      if (m.saturated) ++ds.saturated;

      ds.manifest.rows.push_back({ex.id, ex.split, ex.target_speaker,
                                  ex.interference_speaker, snr, std::to_string(ex_seed)});
      ds.examples.push_back(std::move(ex));
    }
  }
  return ds;
}

ExampleFeatures compute_features(const TrainingExample& ex,
                                 const dsp::FrameParams& params) {
  ExampleFeatures f;
  f.id = ex.id;
  f.snr_db = ex.snr_db;
  f.noisy = dsp::stft(ex.noisy, params);
  f.clean = dsp::stft(ex.clean, params).magnitude;
  if (!ex.reference.samples.empty())
    f.reference = dsp::stft(ex.reference, params).magnitude;
  if (!ex.interference.samples.empty())
    f.interference = dsp::stft(ex.interference, params).magnitude;
  f.clean_wave = ex.clean;
  return f;
}

}  // namespace srl
