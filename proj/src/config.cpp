#include "srl/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>

#include "srl/text.hpp"

namespace srl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  auto x = parse_number(v);
  if (!x) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return *x;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class F>
Entry size_entry(std::string key, F field) {
  return {key, [field](const RunConfig& c) { return std::to_string(field(c)); },
          [field, key](RunConfig& c, const std::string& v) {
            field(c) = static_cast<std::size_t>(to_uint(key, v));
          }};
}

template <class F>
Entry double_entry(std::string key, F field) {
  return {key, [field](const RunConfig& c) { return format_double(field(c)); },
          [field, key](RunConfig& c, const std::string& v) { field(c) = to_double(key, v); }};
}

template <class F>
Entry string_entry(std::string key, F field) {
  return {key, [field](const RunConfig& c) { return field(c); },
          [field](RunConfig& c, const std::string& v) { field(c) = v; }};
}

#define FIELD(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const std::string& v) { c.seed = to_uint("seed", v); }},
      string_entry("model.preset", FIELD(preset)),
      {"model.log_compress", [](const RunConfig& c) { return std::string(c.log_compress ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) { c.log_compress = to_bool("model.log_compress", v); }},
      size_entry("data.num_speakers", FIELD(data.num_speakers)),
      size_entry("data.utterances_per_speaker", FIELD(data.utterances_per_speaker)),
      double_entry("data.duration_s", FIELD(data.duration_s)),
      double_entry("data.snr_min_db", FIELD(data.snr_min_db)),
      double_entry("data.snr_max_db", FIELD(data.snr_max_db)),
      double_entry("data.validation_fraction", FIELD(data.validation_fraction)),
      size_entry("frame.window_length", FIELD(frame.window_length)),
      size_entry("frame.hop_length", FIELD(frame.hop_length)),
      size_entry("frame.fft_size", FIELD(frame.fft_size)),
      double_entry("frame.sample_rate", FIELD(frame.sample_rate)),
      {"loss.mode", [](const RunConfig& c) { return to_string(c.loss.mode); },
       [](RunConfig& c, const std::string& v) {
         try {
           c.loss.mode = parse_loss_mode(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(std::string("config: loss.mode: ") + e.what());
         }
       }},
      {"loss.anchor", [](const RunConfig& c) { return to_string(c.loss.anchor); },
       [](RunConfig& c, const std::string& v) {
         try {
           c.loss.anchor = parse_anchor(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(std::string("config: loss.anchor: ") + e.what());
         }
       }},
      double_entry("loss.beta", FIELD(loss.beta)),
      double_entry("loss.alpha", FIELD(loss.alpha)),
      size_entry("loss.srl_start_epoch", FIELD(loss.srl_start_epoch)),
      double_entry("train.initial_lr", FIELD(train.initial_lr)),
      double_entry("train.lr_decay", FIELD(train.lr_decay)),
      size_entry("train.max_epochs", FIELD(train.max_epochs)),
      size_entry("train.patience", FIELD(train.patience)),
      size_entry("train.batch_size", FIELD(train.batch_size)),
      size_entry("pretrain.num_speakers", FIELD(pretrain.num_speakers)),
      size_entry("pretrain.utterances_per_speaker", FIELD(pretrain.utterances_per_speaker)),
      double_entry("pretrain.duration_s", FIELD(pretrain.duration_s)),
      double_entry("pretrain.initial_lr", FIELD(pretrain.schedule.initial_lr)),
      double_entry("pretrain.lr_decay", FIELD(pretrain.schedule.lr_decay)),
      size_entry("pretrain.max_epochs", FIELD(pretrain.schedule.max_epochs)),
      size_entry("pretrain.batch_size", FIELD(pretrain.schedule.batch_size)),
      string_entry("paths.data_dir", FIELD(data_dir)),
      string_entry("paths.encoder", FIELD(encoder_path)),
      string_entry("paths.checkpoint", FIELD(checkpoint_path)),
  };
  return table;
}

#undef FIELD

const Entry& lookup(const std::string& key) {
  for (const auto& e : entries())
    if (e.key == key) return e;
  throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  lookup(key).set(*this, value);
}

std::string RunConfig::get(const std::string& key) const { return lookup(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return k;
}

RunConfig RunConfig::parse(std::istream& is) {
  RunConfig c;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(n) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      c.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(n) + ": " + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  return parse(f);
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  for (const auto& e : entries()) os << e.key << " = " << e.get(*this) << '\n';
  return os.str();
}

void RunConfig::validate() const {
  if (preset != "desk" && preset != "canonical")
    throw ConfigError("config: model.preset must be desk or canonical, got '" + preset + "'");
  try {
    frame.validate();
    dataset_config().validate();
    loss.validate();
    train.validate();
    pretrain.schedule.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (pretrain.num_speakers < 3)
    throw ConfigError("config: pretrain.num_speakers must be at least 3");
}

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig c = preset == "canonical" ? EncoderConfig::canonical(frame.bins())
                                          : EncoderConfig::desk(frame.bins());
  c.log_compress = log_compress;
  return c;
}

SeparatorConfig RunConfig::separator_config() const {
  const std::size_t dim = encoder_config().embedding_dim;
  SeparatorConfig c = preset == "canonical" ? SeparatorConfig::canonical(frame.bins(), dim)
                                            : SeparatorConfig::desk(frame.bins(), dim);
  c.log_compress = log_compress;
  return c;
}

DatasetConfig RunConfig::dataset_config() const {
  DatasetConfig d = data;
  d.seed = seed;
  d.sample_rate = frame.sample_rate;
  return d;
}

}  // namespace srl
