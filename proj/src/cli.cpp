#include "srl/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "srl/checkpoint.hpp"
#include "srl/config.hpp"
#include "srl/gradsuite.hpp"
#include "srl/metrics.hpp"
#include "srl/rng.hpp"
#include "srl/text.hpp"
#include "srl/train.hpp"
#include "srl/wav.hpp"

namespace fs = std::filesystem;

namespace srl::cli {

namespace {

// Errors the user fixes by changing flags or the config file.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const char* const kWavKinds[] = {"clean", "reference", "interference", "noisy"};

std::string wav_name(const std::string& id, const char* kind) {
  return "wav/" + id + "." + kind + ".wav";
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

struct Common {
  std::string config_path;
  std::string out;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // config key -> value
  std::string loss;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::parse_file(c.config_path);
  if (!c.loss.empty()) {
    static const std::map<std::string, std::pair<std::string, std::string>> presets = {
        {"mse", {"mse", ""}},
        {"srl-ref", {"srl", "reference"}},
        {"srl-clean", {"srl", "clean"}},
        {"triplet-ref", {"triplet", "reference"}},
        {"triplet-clean", {"triplet", "clean"}},
    };
    auto it = presets.find(c.loss);
    if (it == presets.end())
      throw ConfigError("--loss must be one of mse, srl-ref, srl-clean, triplet-ref, "
                        "triplet-clean; got '" + c.loss + "'");
    cfg.set("loss.mode", it->second.first);
    if (!it->second.second.empty()) cfg.set("loss.anchor", it->second.second);
  }
  for (const auto& [key, value] : c.flags) cfg.set(key, value);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw std::runtime_error("cannot create directory '" + dir.string() + "'");
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
  return f;
}

EncoderModel load_encoder(const std::string& path, const RunConfig& cfg) {
  if (!fs::exists(path))
    throw std::runtime_error("encoder checkpoint '" + path +
                             "' not found; run pretrain-encoder first");
  auto enc = encoder_from_checkpoint(load_checkpoint(path));
  if (enc.config.bins != cfg.frame.bins())
    throw std::runtime_error("encoder '" + path + "' expects " +
                             std::to_string(enc.config.bins) + " frequency bins, frame settings give " +
                             std::to_string(cfg.frame.bins()));
  return enc;
}

SeparatorModel load_separator(const std::string& path, const EncoderModel& enc,
                              const RunConfig& cfg) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint '" + path + "' not found");
  auto sep = separator_from_checkpoint(load_checkpoint(path));
  if (sep.config.dvector_dim != enc.dim())
    throw std::runtime_error("separator expects " + std::to_string(sep.config.dvector_dim) +
                             "-dimensional d-vectors, encoder gives " + std::to_string(enc.dim()));
  if (sep.config.bins != cfg.frame.bins())
    throw std::runtime_error("separator expects " + std::to_string(sep.config.bins) +
                             " frequency bins, frame settings give " +
                             std::to_string(cfg.frame.bins()));
  return sep;
}

dsp::Waveform read_checked(const fs::path& p, double sample_rate) {
  auto w = read_wav(p);
  if (w.sample_rate != sample_rate)
    throw std::runtime_error("'" + p.string() + "' is sampled at " + format_double(w.sample_rate) +
                             " Hz, the configuration expects " + format_double(sample_rate) +
                             " Hz");
  return w;
}

std::vector<ExampleFeatures> features_of(const std::vector<TrainingExample>& examples,
                                         const dsp::FrameParams& frame) {
  std::vector<ExampleFeatures> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(compute_features(ex, frame));
  return out;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const RunConfig& cfg, const Common& c, std::ostream&, std::ostream& err) {
  const fs::path dir = c.out.empty() ? fs::path(cfg.data_dir) : fs::path(c.out);
  const auto ds = build_dataset(cfg.dataset_config());
  write_corpus(dir, ds);
  auto f = open_out(dir / "config.txt");
  f << cfg.serialize();
  err << "wrote " << ds.examples.size() << " examples to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_pretrain(const RunConfig& cfg, const Common& c, std::ostream&, std::ostream& err) {
  const std::string path = c.out.empty() ? cfg.encoder_path : c.out;
  const auto& pc = cfg.pretrain;
  // A quarter of the utterances (at least one per speaker) are held out.
  const std::size_t held = std::max<std::size_t>(1, pc.utterances_per_speaker / 4);
  const std::size_t per = pc.utterances_per_speaker + held;
  const auto all = speaker_corpus(pc.num_speakers, per, pc.duration_s,
                                  mix_seed(cfg.seed, 0xe4c), cfg.frame);
  std::vector<SpeakerUtterance> train, test;
  for (std::size_t i = 0; i < all.size(); ++i)
    (i % per < pc.utterances_per_speaker ? train : test).push_back(all[i]);

  auto model = EncoderModel::create(cfg.encoder_config(), mix_seed(cfg.seed, 0xe4c0));
  const auto r = pretrain_encoder(train, std::move(model), pc.schedule, cfg.seed);
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e)
    err << "epoch " << e << " cross-entropy " << format_double(r.epoch_loss[e]) << "\n";
  err << "train accuracy " << speaker_accuracy(train, r.encoder, r.head)
      << ", held-out accuracy " << speaker_accuracy(test, r.encoder, r.head) << "\n";
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) ensure_dir(parent);
  save_checkpoint(path, to_checkpoint(r.encoder));
  err << "wrote " << path << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const Common& c, const std::string& data_dir,
              const std::string& encoder_path, std::ostream&, std::ostream& err) {
  const auto encoder = load_encoder(encoder_path.empty() ? cfg.encoder_path : encoder_path, cfg);
  const fs::path data = data_dir.empty() ? fs::path(cfg.data_dir) : fs::path(data_dir);
  const auto train_ex = read_corpus(data, Split::Train, cfg.frame.sample_rate);
  const auto val_ex = read_corpus(data, Split::Validation, cfg.frame.sample_rate);
  if (train_ex.empty()) throw std::runtime_error("no training examples in " + data.string());

  const auto train = make_train_items(features_of(train_ex, cfg.frame), encoder, cfg.loss.anchor);
  const auto validation =
      make_train_items(features_of(val_ex, cfg.frame), encoder, cfg.loss.anchor);

  const fs::path dir = c.out.empty() ? fs::path("run") : fs::path(c.out);
  ensure_dir(dir);
  {
    auto f = open_out(dir / "config.txt");
    f << cfg.serialize();
  }
  auto log = open_out(dir / "train_log.csv");
  write_log_header(log);
  log.flush();

  SeparatorConfig sc = cfg.separator_config();
  sc.dvector_dim = encoder.dim();
  FitOptions opts;
  opts.on_epoch = [&](const EpochLog& e) {
    write_log_row(log, e);
    log.flush();
    err << "epoch " << e.epoch << " lr " << format_double(e.lr) << " train "
        << format_double(e.train.total) << " val_mse " << format_double(e.val_mse) << "\n";
  };
  const auto r = fit(train, validation, SeparatorModel::create(sc, mix_seed(cfg.seed, 0x5e9)),
                     encoder, cfg.loss, cfg.train, cfg.seed, opts);

  const fs::path ckpt = dir / "separator.srlf";
  if (r.best_epoch) {
    save_checkpoint(ckpt.string(),
                    to_checkpoint(r.model, TrainingMeta{r.log.size(), r.best_val_mse}));
    err << "wrote " << ckpt.string() << " (best epoch " << *r.best_epoch << ")\n";
  } else {
    err << "no epoch completed, checkpoint not written\n";
  }
  if (r.aborted) {
    err << "training aborted: " << r.abort_reason << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_separate(const RunConfig& cfg, const Common& c, const std::string& checkpoint,
                 const std::string& encoder_path, const std::string& noisy_path,
                 const std::string& reference_path, std::ostream&, std::ostream& err) {
  if (noisy_path.empty() || reference_path.empty())
    throw UsageError("separate needs --noisy and --reference");
  const auto encoder = load_encoder(encoder_path.empty() ? cfg.encoder_path : encoder_path, cfg);
  const auto sep = load_separator(checkpoint.empty() ? cfg.checkpoint_path : checkpoint,
                                  encoder, cfg);
  const auto noisy = read_checked(noisy_path, cfg.frame.sample_rate);
  const auto reference = read_checked(reference_path, cfg.frame.sample_rate);

  const auto spec = dsp::stft(noisy, cfg.frame);
  const auto dvec = enroll(dsp::stft(reference, cfg.frame).magnitude, encoder);
  const auto o = separate(spec.magnitude, dvec, sep);
  const auto enhanced = dsp::reconstruct_with_phase(o.enhanced, spec.phase, cfg.frame);
  const auto residual = dsp::reconstruct_with_phase(o.residual, spec.phase, cfg.frame);

  fs::path out = c.out.empty() ? fs::path("enhanced.wav") : fs::path(c.out);
  if (!out.parent_path().empty()) ensure_dir(out.parent_path());
  fs::path res = out;
  res.replace_filename(out.stem().string() + ".residual" + out.extension().string());
  write_wav(out, enhanced);
  write_wav(res, residual);
  err << "wrote " << out.string() << " and " << res.string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, const Common& c, const std::string& checkpoint,
                 const std::string& encoder_path, const std::string& data_dir,
                 const std::string& split_name, const std::string& mask_name, std::ostream& out,
                 std::ostream& err) {
  MaskSource source;
  Split split;
  try {
    source = parse_mask_source(mask_name);
    split = parse_split(split_name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::optional<EncoderModel> encoder;
  std::optional<SeparatorModel> sep;
  if (source == MaskSource::Model) {
    encoder = load_encoder(encoder_path.empty() ? cfg.encoder_path : encoder_path, cfg);
    sep = load_separator(checkpoint.empty() ? cfg.checkpoint_path : checkpoint, *encoder, cfg);
  }
  const fs::path data = data_dir.empty() ? fs::path(cfg.data_dir) : fs::path(data_dir);
  const auto examples = read_corpus(data, split, cfg.frame.sample_rate);
  if (examples.empty())
    throw std::runtime_error("split '" + split_name + "' of " + data.string() + " is empty");
  const auto report = evaluate(features_of(examples, cfg.frame), sep ? &*sep : nullptr,
                               encoder ? &*encoder : nullptr, source);
  if (c.out.empty()) {
    report.write_csv(out);
  } else {
    auto f = open_out(c.out);
    report.write_csv(f);
  }
  err << std::fixed << std::setprecision(3) << "mean SI-SDR improvement "
      << report.mean.improvement << " +/- " << report.stddev.improvement << " dB over "
      << report.rows.size() << " examples (noisy " << report.mean.si_sdr_noisy << " dB)\n";
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, const Common& c, bool inject, std::ostream& out,
                  std::ostream& err) {
  GradSuiteOptions opts;
  opts.seed = cfg.seed;
  opts.log_compress = cfg.log_compress;
  opts.inject_wrong_grad = inject;
  const auto entries = run_gradient_suite(opts);
  std::ostringstream report;
  std::size_t failed = 0;
  for (const auto& e : entries) {
    report << (e.passed ? "PASS " : "FAIL ") << std::scientific << std::setprecision(3)
           << e.max_rel_error << "  " << std::setw(5) << e.checked << "  " << e.component << "\n";
    if (!e.passed) ++failed;
  }
  report << entries.size() << " components checked, " << failed << " failed (tolerance "
         << std::defaultfloat << opts.check.tolerance << ", step " << opts.check.step << ")\n";
  out << report.str();
  if (!c.out.empty()) {
    auto f = open_out(c.out);
    f << report.str();
  }
  if (failed) {
    err << "gradient check failed\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

void write_corpus(const fs::path& dir, const Dataset& ds) {
  ensure_dir(dir / "wav");
  DatasetManifest manifest = ds.manifest;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const auto& ex = ds.examples[i];
    const dsp::Waveform* waves[] = {&ex.clean, &ex.reference, &ex.interference, &ex.noisy};
    std::string source;
    for (int k = 0; k < 4; ++k) {
      const std::string rel = wav_name(ex.id, kWavKinds[k]);
      write_wav(dir / rel, *waves[k]);
      source += (k ? "," : "") + rel;
    }
    manifest.rows[i].source = source;
  }
  auto f = open_out(dir / "manifest.tsv");
  manifest.write(f);
}

std::vector<TrainingExample> read_corpus(const fs::path& dir, std::optional<Split> split,
                                         double sample_rate) {
  std::ifstream f(dir / "manifest.tsv");
  if (!f) throw std::runtime_error("no manifest.tsv in '" + dir.string() + "'");
  const auto manifest = DatasetManifest::read(f);
  std::vector<TrainingExample> out;
  for (const auto& row : manifest.rows) {
    if (split && row.split != *split) continue;
    const auto paths = split_commas(row.source);
    if (paths.size() != 4)
      throw std::runtime_error("manifest row '" + row.id +
                               "' must list clean, reference, interference and noisy WAVs");
    TrainingExample ex;
    ex.id = row.id;
    ex.split = row.split;
    ex.target_speaker = row.target_speaker;
    ex.interference_speaker = row.interference_speaker;
    ex.snr_db = row.snr_db;
    dsp::Waveform* waves[] = {&ex.clean, &ex.reference, &ex.interference, &ex.noisy};
    for (int k = 0; k < 4; ++k) *waves[k] = read_checked(dir / paths[k], sample_rate);
    out.push_back(std::move(ex));
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Target-speaker separation with speaker representation losses", "srlsep"};
  app.require_subcommand(1);
  Common c;
  std::string data_dir, encoder_path, checkpoint, noisy, reference, split = "validation",
                                                                  mask = "model";
  bool inject = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", c.config_path, "key = value configuration file");
    sub->add_option("--seed", c.flags["seed"], "global seed");
    sub->add_option("--out", c.out, "output path");
    sub->add_option("--set", c.sets, "override a configuration key (key=value)");
  };
  auto loss_flags = [&](CLI::App* sub) {
    sub->add_option("--loss", c.loss, "mse | srl-ref | srl-clean | triplet-ref | triplet-clean");
    sub->add_option("--alpha", c.flags["loss.alpha"], "triplet margin");
    sub->add_option("--beta", c.flags["loss.beta"], "weight of the speaker representation term");
    sub->add_option("--anchor", c.flags["loss.anchor"], "reference | clean");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  common(gen);
  gen->add_option("--num-speakers", c.flags["data.num_speakers"], "speakers in the corpus");

  auto* pre = app.add_subcommand("pretrain-encoder", "train the speaker encoder");
  common(pre);

  auto* tr = app.add_subcommand("train", "train the separator");
  common(tr);
  loss_flags(tr);
  tr->add_option("--max-epochs", c.flags["train.max_epochs"], "epoch limit");
  tr->add_option("--data", data_dir, "corpus directory");
  tr->add_option("--encoder", encoder_path, "encoder checkpoint");

  auto* sp = app.add_subcommand("separate", "extract the target speaker from one mixture");
  common(sp);
  sp->add_option("--checkpoint", checkpoint, "separator checkpoint");
  sp->add_option("--encoder", encoder_path, "encoder checkpoint");
  sp->add_option("--noisy", noisy, "mixture WAV")->required();
  sp->add_option("--reference", reference, "enrollment WAV of the target speaker")->required();

  auto* ev = app.add_subcommand("evaluate", "SI-SDR improvement over a corpus split");
  common(ev);
  ev->add_option("--checkpoint", checkpoint, "separator checkpoint");
  ev->add_option("--encoder", encoder_path, "encoder checkpoint");
  ev->add_option("--data", data_dir, "corpus directory");
  ev->add_option("--split", split, "train | validation");
  ev->add_option("--mask", mask, "model | identity | oracle");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
  common(gc);
  gc->add_flag("--inject-wrong-grad", inject, "add a deliberately wrong op (must fail)");

  std::vector<std::string> argv_store{"srlsep"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  for (auto it = c.flags.begin(); it != c.flags.end();)
    it = it->second.empty() ? c.flags.erase(it) : std::next(it);

  RunConfig cfg;
  try {
    cfg = resolve(c);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(cfg, c, out, err);
    if (pre->parsed()) return cmd_pretrain(cfg, c, out, err);
    if (tr->parsed()) return cmd_train(cfg, c, data_dir, encoder_path, out, err);
    if (sp->parsed())
      return cmd_separate(cfg, c, checkpoint, encoder_path, noisy, reference, out, err);
    if (ev->parsed())
      return cmd_evaluate(cfg, c, checkpoint, encoder_path, data_dir, split, mask, out, err);
    if (gc->parsed()) return cmd_gradcheck(cfg, c, inject, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace srl::cli
