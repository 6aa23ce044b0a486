#pragma once

// End-to-end plumbing shared by the CLI and the acceptance suite: corpus
// scanning, the epoch loop with per-module plateau schedules, bundle
// saving/loading with the feature configuration embedded, tracking through
// the HMM, evaluation reports, significance tests, activation profiles and
// the HMM hyperparameter sweep. A run is reproducible from RunConfig +
// corpus alone; every random draw flows from the explicit seed.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "beatfuse/ensemble.hpp"
#include "beatfuse/hmm.hpp"
#include "beatfuse/metrics.hpp"
#include "beatfuse/serialize.hpp"
#include "beatfuse/svg.hpp"
#include "beatfuse/synth.hpp"

namespace beatfuse {

namespace fs = std::filesystem;

struct RunConfig {
  std::string variant = "da2";
  FeatureConfig features;
  int separator_hidden = 64;
  int tracker_hidden = 25;
  int num_layers = 3;
  OptimizerConfig optimizer;
  HmmConfig hmm;
  std::uint64_t seed = 42;
  int runs = 1;
  int epochs = 50;
};

// ---------------------------------------------------------------------------
// Corpus scanning and loading.

struct CorpusEntry {
  std::string id;
  fs::path mixture, drum, nodrum, beats;
  bool has_stems = false;
};

inline std::vector<CorpusEntry> scan_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw data_error("corpus: not a directory: " + dir.string());
  std::vector<CorpusEntry> entries;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".beats") continue;
    CorpusEntry entry;
    entry.id = e.path().stem().string();
    entry.beats = e.path();
    entry.mixture = dir / (entry.id + ".wav");
    entry.drum = dir / (entry.id + ".drum.wav");
    entry.nodrum = dir / (entry.id + ".nodrum.wav");
    if (!fs::exists(entry.mixture))
      throw data_error("corpus: missing audio for " + entry.id);
    entry.has_stems = fs::exists(entry.drum) && fs::exists(entry.nodrum);
    entries.push_back(std::move(entry));
  }
  if (entries.empty()) throw data_error("corpus: no .beats files in " + dir.string());
  std::sort(entries.begin(), entries.end(),
            [](const CorpusEntry& a, const CorpusEntry& b) { return a.id < b.id; });
  return entries;
}

inline TrainItem load_train_item(const CorpusEntry& entry, const FeatureConfig& fcfg,
                                 bool need_stems) {
  TrainItem item;
  item.id = entry.id;
  const AudioClip mix = read_wav(entry.mixture);
  item.mix_feat = extract_features(mix, fcfg);
  if (need_stems) {
    if (!entry.has_stems)
      throw data_error("corpus: item " + entry.id + " is missing stem files");
    item.ref_stems = reference_stem_features(read_wav(entry.drum), read_wav(entry.nodrum), fcfg);
    if (item.ref_stems->drum.frames() != item.mix_feat.frames())
      throw data_error("corpus: stems of " + entry.id + " are not aligned with the mixture");
  }
  const BeatSequence anns = read_beats(entry.beats);
  item.labels = labels_from_annotations(anns, item.mix_feat.frames(), item.mix_feat.frame_rate);
  return item;
}

inline std::vector<TrainItem> load_corpus_items(const fs::path& dir, const FeatureConfig& fcfg,
                                                bool need_stems,
                                                std::ostream* progress = nullptr) {
  std::vector<TrainItem> items;
  const auto entries = scan_corpus(dir);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    items.push_back(load_train_item(entries[i], fcfg, need_stems));
    if (progress && (i + 1) % 50 == 0)
      *progress << "  loaded " << (i + 1) << "/" << entries.size() << " items\n";
  }
  return items;
}

// ---------------------------------------------------------------------------
// Feature configuration <-> manifest glue.

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void feature_config_to_manifest(Manifest& m, const FeatureConfig& cfg) {
  m["feature.sample_rate"] = std::to_string(cfg.sample_rate);
  m["feature.hop"] = std::to_string(cfg.hop);
  m["feature.window_sizes"] = detail::join_ints(cfg.window_sizes);
  m["feature.bands_per_octave"] = detail::join_ints(cfg.bands_per_octave);
  m["feature.fmin"] = detail::fmt_double(cfg.fmin);
  m["feature.fmax"] = detail::fmt_double(cfg.fmax);
}

inline FeatureConfig feature_config_from_manifest(const Manifest& m) {
  FeatureConfig cfg;
  cfg.sample_rate = std::stoi(manifest_get(m, "feature.sample_rate"));
  cfg.hop = std::stoi(manifest_get(m, "feature.hop"));
  cfg.window_sizes = detail::split_ints(manifest_get(m, "feature.window_sizes"));
  cfg.bands_per_octave = detail::split_ints(manifest_get(m, "feature.bands_per_octave"));
  cfg.fmin = std::stod(manifest_get(m, "feature.fmin"));
  cfg.fmax = std::stod(manifest_get(m, "feature.fmax"));
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Training.

namespace detail {

inline std::string loss_cell(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream os;
  os << std::setprecision(10) << *v;
  return os.str();
}

inline void observe_module(std::optional<Optimizer>& opt, const std::optional<double>& val) {
  if (opt && val) opt->observe_validation(*val);
}

}  // namespace detail

struct EpochRecord {
  int epoch = 0;
  ModuleLosses train, val;
  std::map<std::string, double> lr;  // per module
};

inline std::map<std::string, double> learning_rates(const EnsembleOptimizers& opt) {
  std::map<std::string, double> lr;
  if (opt.separator) lr["separator"] = opt.separator->learning_rate();
  lr["mix"] = opt.mix->learning_rate();
  if (opt.drum) lr["drum"] = opt.drum->learning_rate();
  if (opt.nodrum) lr["nodrum"] = opt.nodrum->learning_rate();
  if (opt.fuser) lr["fuser"] = opt.fuser->learning_rate();
  return lr;
}

inline void write_log_header(std::ostream& out) {
  out << "epoch\tsep_train\tmix_train\tdrum_train\tnodrum_train\tfuser_train"
      << "\tsep_val\tmix_val\tdrum_val\tnodrum_val\tfuser_val"
      << "\tsep_lr\tmix_lr\tdrum_lr\tnodrum_lr\tfuser_lr\n";
}

inline void write_log_row(std::ostream& out, const EpochRecord& rec) {
  auto lr_cell = [&](const char* key) {
    const auto it = rec.lr.find(key);
    if (it == rec.lr.end()) return std::string("NA");
    return detail::fmt_double(it->second);
  };
  out << rec.epoch << '\t' << detail::loss_cell(rec.train.separator) << '\t'
      << detail::loss_cell(rec.train.mix) << '\t' << detail::loss_cell(rec.train.drum) << '\t'
      << detail::loss_cell(rec.train.nodrum) << '\t' << detail::loss_cell(rec.train.fuser)
      << '\t' << detail::loss_cell(rec.val.separator) << '\t'
      << detail::loss_cell(rec.val.mix) << '\t' << detail::loss_cell(rec.val.drum) << '\t'
      << detail::loss_cell(rec.val.nodrum) << '\t' << detail::loss_cell(rec.val.fuser) << '\t'
      << lr_cell("separator") << '\t' << lr_cell("mix") << '\t' << lr_cell("drum") << '\t'
      << lr_cell("nodrum") << '\t' << lr_cell("fuser") << '\n';
}

// Runs epochs [first_epoch, total_epochs) on existing params/optimizers.
inline std::vector<EpochRecord> train_epochs(EnsembleParams& params, EnsembleOptimizers& opt,
                                             const std::vector<TrainItem>& train_items,
                                             const std::vector<TrainItem>& val_items,
                                             std::uint64_t run_seed, int first_epoch,
                                             int total_epochs,
                                             std::ostream* progress = nullptr) {
  std::vector<EpochRecord> records;
  for (int epoch = first_epoch; epoch < total_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    SeededRng order_rng(mix_seed(run_seed, 0xE0000u + static_cast<std::uint64_t>(epoch)));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = train_epoch(params, train_items, opt, order_rng);
    rec.val = validate(params, val_items);
    detail::observe_module(opt.separator, rec.val.separator);
    detail::observe_module(opt.mix, rec.val.mix);
    detail::observe_module(opt.drum, rec.val.drum);
    detail::observe_module(opt.nodrum, rec.val.nodrum);
    detail::observe_module(opt.fuser, rec.val.fuser);
    rec.lr = learning_rates(opt);
    if (progress) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      *progress << "  epoch " << epoch << ": train mix=" << detail::loss_cell(rec.train.mix)
                << " fuser=" << detail::loss_cell(rec.train.fuser)
                << " sep=" << detail::loss_cell(rec.train.separator)
                << " | val mix=" << detail::loss_cell(rec.val.mix)
                << " fuser=" << detail::loss_cell(rec.val.fuser) << " (" << std::fixed
                << std::setprecision(1) << secs << " s)\n"
                << std::defaultfloat;
      progress->flush();
    }
    records.push_back(std::move(rec));
  }
  return records;
}

inline void save_training_bundle(const fs::path& dir, const EnsembleParams& params,
                                 const EnsembleOptimizers& opt, const RunConfig& cfg,
                                 std::uint64_t run_seed, int epochs_trained) {
  Manifest extra;
  feature_config_to_manifest(extra, cfg.features);
  extra["seed"] = std::to_string(run_seed);
  extra["epochs_trained"] = std::to_string(epochs_trained);
  extra["tracker_hidden"] = std::to_string(cfg.tracker_hidden);
  extra["separator_hidden"] = std::to_string(cfg.separator_hidden);
  extra["num_layers"] = std::to_string(cfg.num_layers);
  save_bundle(dir, params, std::move(extra));
  if (opt.separator) save_optimizer_state(dir / "opt_separator.f64", *opt.separator);
  save_optimizer_state(dir / "opt_mix.f64", *opt.mix);
  if (opt.drum) save_optimizer_state(dir / "opt_drum.f64", *opt.drum);
  if (opt.nodrum) save_optimizer_state(dir / "opt_nodrum.f64", *opt.nodrum);
  if (opt.fuser) save_optimizer_state(dir / "opt_fuser.f64", *opt.fuser);
}

// Trains one run from scratch (or resumes a saved bundle when `resume` is
// set and the bundle exists) and saves bundle + optimizer state +
// training_log.tsv into out_dir.
inline EnsembleParams train_one_run(const RunConfig& cfg, const std::vector<TrainItem>& train_items,
                                    const std::vector<TrainItem>& val_items,
                                    std::uint64_t run_seed, const fs::path& out_dir,
                                    bool resume = false, std::ostream* progress = nullptr) {
  if (train_items.empty()) throw data_error("train: empty training set");
  const Variant variant = variant_from_string(cfg.variant);

  EnsembleParams params;
  std::optional<EnsembleOptimizers> opt;
  int first_epoch = 0;
  const bool resuming = resume && fs::exists(out_dir / "manifest.txt");
  if (resuming) {
    LoadedBundle bundle = load_bundle(out_dir);
    if (bundle.params.variant != variant)
      throw data_error("resume: bundle variant does not match the requested variant");
    params = std::move(bundle.params);
    opt.emplace(make_optimizers(params, cfg.optimizer));
    if (opt->separator) load_optimizer_state(out_dir / "opt_separator.f64", *opt->separator);
    load_optimizer_state(out_dir / "opt_mix.f64", *opt->mix);
    if (opt->drum) load_optimizer_state(out_dir / "opt_drum.f64", *opt->drum);
    if (opt->nodrum) load_optimizer_state(out_dir / "opt_nodrum.f64", *opt->nodrum);
    if (opt->fuser) load_optimizer_state(out_dir / "opt_fuser.f64", *opt->fuser);
    first_epoch = std::stoi(manifest_get(bundle.manifest, "epochs_trained"));
  } else {
    EnsembleDims dims;
    dims.feature_dim = train_items.front().mix_feat.dims();
    dims.separator_hidden = cfg.separator_hidden;
    dims.tracker_hidden = cfg.tracker_hidden;
    dims.num_layers = cfg.num_layers;
    params = make_ensemble(variant, dims, run_seed);
    opt.emplace(make_optimizers(params, cfg.optimizer));
  }

  const auto records = train_epochs(params, *opt, train_items, val_items, run_seed,
                                    first_epoch, cfg.epochs, progress);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::ofstream log(out_dir / "training_log.tsv", resuming ? std::ios::app : std::ios::out);
  if (!log) throw data_error("train: cannot write training log");
  if (!resuming) write_log_header(log);
  for (const auto& rec : records) write_log_row(log, rec);
  log.close();

  save_training_bundle(out_dir, params, *opt, cfg, run_seed,
                       std::max(first_epoch, cfg.epochs));
  return params;
}

// The five-run protocol: seeds base .. base+runs-1, one bundle per run
// under out_dir/run<i>.
inline void run_train(const RunConfig& cfg, const fs::path& corpus_dir, const fs::path& val_dir,
                      const fs::path& out_dir, bool resume = false,
                      std::ostream* progress = nullptr) {
  const Variant variant = variant_from_string(cfg.variant);
  const bool need_stems = variant_has_stem_trackers(variant);
  if (progress) *progress << "loading training corpus " << corpus_dir << "\n";
  const auto train_items = load_corpus_items(corpus_dir, cfg.features, need_stems, progress);
  if (progress) *progress << "loading validation corpus " << val_dir << "\n";
  const auto val_items = load_corpus_items(val_dir, cfg.features, need_stems, progress);
  for (int r = 0; r < cfg.runs; ++r) {
    const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(r);
    const fs::path run_dir = out_dir / ("run" + std::to_string(r));
    if (progress)
      *progress << "training " << cfg.variant << " run " << r << " (seed " << run_seed
                << ")\n";
    train_one_run(cfg, train_items, val_items, run_seed, run_dir, resume, progress);
  }
}

// ---------------------------------------------------------------------------
// Tracking.

inline ActivationMatrix select_head(const EnsembleOutput& out, const std::string& head) {
  auto require = [&](const std::optional<ActivationMatrix>& act) -> ActivationMatrix {
    if (!act) throw data_error("track: head '" + head + "' is absent in this variant");
    return *act;
  };
  if (head == "mix") return require(out.mix_act);
  if (head == "drum") return require(out.drum_act);
  if (head == "nodrum") return require(out.nodrum_act);
  if (head == "fuser") return require(out.fused_act);
  if (head == "bagging") {
    if (!out.mix_act || !out.drum_act || !out.nodrum_act)
      throw data_error("track: bagging needs all three tracker heads");
    return bagging_fuse(*out.mix_act, *out.drum_act, *out.nodrum_act);
  }
  throw config_error("track: unknown head '" + head + "'");
}

inline void write_activation_csv(const fs::path& path, const ActivationMatrix& act) {
  std::ofstream out(path);
  if (!out) throw data_error("activations: cannot write " + path.string());
  out << "# frame_rate=" << detail::fmt_double(act.frame_rate) << "\n";
  out << "beat,downbeat,nonbeat\n";
  out << std::setprecision(10);
  for (int t = 0; t < act.frames(); ++t)
    out << act.data(0, t) << ',' << act.data(1, t) << ',' << act.data(2, t) << '\n';
}

inline ActivationMatrix read_activation_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("activations: cannot open " + path.string());
  std::string line;
  ActivationMatrix act;
  std::vector<std::array<double, 3>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find("frame_rate=");
      if (eq != std::string::npos) act.frame_rate = std::stod(line.substr(eq + 11));
      continue;
    }
    if (line.rfind("beat,", 0) == 0) continue;  // header
    std::istringstream ls(line);
    std::array<double, 3> row;
    char comma;
    if (!(ls >> row[0] >> comma >> row[1] >> comma >> row[2]))
      throw data_error("activations: malformed line in " + path.string());
    rows.push_back(row);
  }
  if (rows.empty()) throw data_error("activations: no frames in " + path.string());
  if (act.frame_rate <= 0.0)
    throw data_error("activations: missing frame_rate comment in " + path.string());
  act.data.resize(3, static_cast<int>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (int r = 0; r < 3; ++r) act.data(r, t) = rows[t][r];
  return act;
}

struct LoadedModel {
  EnsembleParams params;
  FeatureConfig features;
  Manifest manifest;
};

inline LoadedModel load_model(const fs::path& bundle_dir) {
  LoadedModel model;
  LoadedBundle bundle = load_bundle(bundle_dir);
  model.features = feature_config_from_manifest(bundle.manifest);
  model.params = std::move(bundle.params);
  model.manifest = std::move(bundle.manifest);
  return model;
}

static const std::vector<std::string> kAllHeads = {"mix", "drum", "nodrum", "fuser", "bagging"};

// Tracks one clip through the selected head; optionally dumps every
// available head's activations and the input features.
inline BeatSequence track_clip(const LoadedModel& model, const fs::path& audio_path,
                               const std::string& head, const HmmConfig& hmm_cfg,
                               const fs::path* dump_dir = nullptr,
                               bool dump_features = false) {
  const std::string id = audio_path.stem().string();
  SpectralFeature mix_feat;
  std::optional<StemFeatures> stems;
  if (variant_is_sda(model.params.variant)) {
    const fs::path drum = audio_path.parent_path() / (id + ".drum.wav");
    const fs::path nodrum = audio_path.parent_path() / (id + ".nodrum.wav");
    if (!fs::exists(drum) || !fs::exists(nodrum))
      throw data_error("track: SDA needs stem files next to " + audio_path.string());
    SdaFeatures sda = sda_mode(read_wav(audio_path), read_wav(drum), read_wav(nodrum),
                               model.features);
    mix_feat = std::move(sda.mix);
    stems = std::move(sda.stems);
  } else {
    mix_feat = extract_features(read_wav(audio_path), model.features);
  }

  const EnsembleOutput out =
      ensemble_forward(mix_feat, model.params, stems ? &*stems : nullptr);
  const ActivationMatrix act = select_head(out, head);

  if (dump_dir) {
    for (const auto& h : kAllHeads) {
      try {
        const ActivationMatrix a = select_head(out, h);
        write_activation_csv(*dump_dir / (id + ".act." + h + ".csv"), a);
      } catch (const data_error&) {
        // head absent in this variant
      }
    }
    if (dump_features) {
      std::ofstream fout(*dump_dir / (id + ".features.csv"));
      if (!fout) throw data_error("track: cannot write feature dump");
      write_feature_csv(fout, mix_feat);
    }
  }

  HmmConfig hmm = hmm_cfg;
  hmm.fps = mix_feat.frame_rate;
  return viterbi_decode(act, hmm);
}

inline void run_track(const fs::path& bundle_dir, const std::vector<fs::path>& audio_paths,
                      const fs::path& out_dir, const std::string& head,
                      const HmmConfig& hmm_cfg, bool dump_activations = false,
                      bool dump_features = false, std::ostream* progress = nullptr) {
  const LoadedModel model = load_model(bundle_dir);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw data_error("track: cannot create " + out_dir.string());
  for (const auto& audio : audio_paths) {
    const std::string id = audio.stem().string();
    const fs::path dump = out_dir;
    const BeatSequence beats =
        track_clip(model, audio, head, hmm_cfg, dump_activations ? &dump : nullptr,
                   dump_features);
    write_beats(out_dir / (id + ".beats"), beats);
    if (progress) *progress << "  tracked " << id << " (" << beats.events.size() << " beats)\n";
  }
}

// ---------------------------------------------------------------------------
// Evaluation and significance.

// Per-song scores against ref_dir; multiple est dirs (one per run) are
// averaged per song before aggregation. Songs missing from any est dir are
// listed and skipped.
inline EvalReport run_eval(const std::vector<fs::path>& est_dirs, const fs::path& ref_dir,
                           std::ostream* warnings = nullptr) {
  if (est_dirs.empty()) throw config_error("eval: need at least one estimate directory");
  EvalReport report;
  for (const auto& entry : fs::directory_iterator(ref_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".beats") continue;
    const std::string id = entry.path().stem().string();
    bool missing = false;
    for (const auto& dir : est_dirs)
      if (!fs::exists(dir / (id + ".beats"))) missing = true;
    if (missing) {
      if (warnings) *warnings << "warning: estimates missing for " << id << ", skipped\n";
      continue;
    }
    const BeatSequence ref = read_beats(entry.path());
    SongScores mean;
    mean.id = id;
    double bc = 0.0, dc = 0.0;
    bool have_bc = true, have_dc = true;
    for (const auto& dir : est_dirs) {
      const SongScores s = score_song(id, read_beats(dir / (id + ".beats")), ref);
      mean.beat_f1 += s.beat_f1 / est_dirs.size();
      mean.downbeat_f1 += s.downbeat_f1 / est_dirs.size();
      if (s.beat_cmlt)
        bc += *s.beat_cmlt / est_dirs.size();
      else
        have_bc = false;
      if (s.downbeat_cmlt)
        dc += *s.downbeat_cmlt / est_dirs.size();
      else
        have_dc = false;
    }
    if (have_bc) mean.beat_cmlt = bc;
    if (have_dc) mean.downbeat_cmlt = dc;
    report.songs.push_back(std::move(mean));
  }
  std::sort(report.songs.begin(), report.songs.end(),
            [](const SongScores& a, const SongScores& b) { return a.id < b.id; });
  if (report.songs.empty()) throw data_error("eval: no songs evaluated");
  return report;
}

struct StatsRow {
  std::string pair, set, metric;
  double t = 0.0;
  double p = 1.0;
  int n = 0;
};

inline std::vector<StatsRow> run_stats(const std::vector<fs::path>& a_dirs,
                                       const std::vector<fs::path>& b_dirs,
                                       const fs::path& ref_dir, const std::string& pair_label,
                                       const std::string& set_label,
                                       std::ostream* warnings = nullptr) {
  const EvalReport a = run_eval(a_dirs, ref_dir, warnings);
  const EvalReport b = run_eval(b_dirs, ref_dir, warnings);
  std::map<std::string, SongScores> b_by_id;
  for (const auto& s : b.songs) b_by_id[s.id] = s;

  std::vector<double> d_beat, d_down, d_beat_cmlt, d_down_cmlt;
  for (const auto& sa : a.songs) {
    const auto it = b_by_id.find(sa.id);
    if (it == b_by_id.end()) {
      if (warnings) *warnings << "warning: song " << sa.id << " only on one side, skipped\n";
      continue;
    }
    const auto& sb = it->second;
    d_beat.push_back(sa.beat_f1 - sb.beat_f1);
    d_down.push_back(sa.downbeat_f1 - sb.downbeat_f1);
    if (sa.beat_cmlt && sb.beat_cmlt) d_beat_cmlt.push_back(*sa.beat_cmlt - *sb.beat_cmlt);
    if (sa.downbeat_cmlt && sb.downbeat_cmlt)
      d_down_cmlt.push_back(*sa.downbeat_cmlt - *sb.downbeat_cmlt);
  }

  std::vector<StatsRow> rows;
  auto add = [&](const std::string& metric, const std::vector<double>& diffs) {
    if (diffs.size() < 2) {
      if (warnings) *warnings << "warning: fewer than two paired songs for " << metric << "\n";
      return;
    }
    const TTestResult r = paired_ttest_detail(diffs);
    rows.push_back({pair_label, set_label, metric, r.t, r.p, r.n});
  };
  add("beat_f1", d_beat);
  add("downbeat_f1", d_down);
  add("beat_cmlt", d_beat_cmlt);
  add("downbeat_cmlt", d_down_cmlt);
  return rows;
}

inline void write_stats_tsv(std::ostream& out, const std::vector<StatsRow>& rows) {
  out << "pair\tset\tmetric\tt\tp\tn\n";
  out << std::setprecision(6) << std::fixed;
  for (const auto& r : rows)
    out << r.pair << '\t' << r.set << '\t' << r.metric << '\t' << r.t << '\t' << r.p << '\t'
        << r.n << '\n';
}

// ---------------------------------------------------------------------------
// Activation profiles (TSV + SVG) from dumped activations.

inline void run_profile(const fs::path& act_dir, const fs::path& ref_dir,
                        const fs::path& out_dir, int radius = 10,
                        std::ostream* warnings = nullptr) {
  // Discover heads from "<id>.act.<head>.csv" dumps.
  std::set<std::string> heads;
  std::set<std::string> ids;
  for (const auto& entry : fs::directory_iterator(act_dir)) {
    const std::string name = entry.path().filename().string();
    const auto mid = name.find(".act.");
    if (mid == std::string::npos || entry.path().extension() != ".csv") continue;
    ids.insert(name.substr(0, mid));
    std::string head = name.substr(mid + 5);
    head.resize(head.size() - 4);  // drop .csv
    heads.insert(head);
  }
  if (heads.empty()) throw data_error("profile: no activation dumps in " + act_dir.string());

  struct Key {
    std::string head;
    ProfileKind kind;
  };
  std::vector<Key> keys;
  for (const auto& h : heads) {
    keys.push_back({h, ProfileKind::beat});
    keys.push_back({h, ProfileKind::downbeat});
  }

  std::vector<Eigen::MatrixXd> sums(keys.size(),
                                    Eigen::MatrixXd::Zero(3, 2 * radius + 1));
  std::vector<long> counts(keys.size(), 0);
  long used_songs = 0;
  for (const auto& id : ids) {
    const fs::path ref_path = ref_dir / (id + ".beats");
    if (!fs::exists(ref_path)) {
      if (warnings) *warnings << "warning: no annotations for " << id << ", skipped\n";
      continue;
    }
    const BeatSequence anns = read_beats(ref_path);
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const fs::path act_path = act_dir / (id + ".act." + keys[k].head + ".csv");
      if (!fs::exists(act_path)) continue;
      const ActivationMatrix act = read_activation_csv(act_path);
      counts[k] += accumulate_profile(act, anns, radius, keys[k].kind, sums[k]);
    }
    ++used_songs;
  }
  if (used_songs == 0) throw data_error("profile: no songs with both activations and annotations");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::ofstream tsv(out_dir / "profiles.tsv");
  if (!tsv) throw data_error("profile: cannot write profiles.tsv");
  tsv << "offset";
  for (const auto& k : keys)
    tsv << '\t' << k.head << (k.kind == ProfileKind::beat ? "_beat" : "_downbeat");
  tsv << "\n" << std::setprecision(8);
  std::vector<double> x;
  std::vector<SvgSeries> series(keys.size());
  for (std::size_t k = 0; k < keys.size(); ++k)
    series[k].label = keys[k].head + (keys[k].kind == ProfileKind::beat ? " beat" : " downbeat");
  for (int off = -radius; off <= radius; ++off) {
    x.push_back(off);
    tsv << off;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const int row = keys[k].kind == ProfileKind::beat ? kBeat : kDownbeat;
      const double v =
          counts[k] > 0 ? sums[k](row, off + radius) / static_cast<double>(counts[k]) : 0.0;
      tsv << '\t' << v;
      series[k].y.push_back(v);
    }
    tsv << '\n';
  }
  std::ofstream svg(out_dir / "profiles.svg");
  if (!svg) throw data_error("profile: cannot write profiles.svg");
  write_line_chart_svg(svg, "Averaged activation around annotated events (frames)", x, series);
}

// ---------------------------------------------------------------------------
// HMM hyperparameter sweep against validation beat F1.

struct TuneRow {
  double transition_lambda = 0.0;
  double observation_lambda = 0.0;
  double beat_f1 = 0.0;
  double downbeat_f1 = 0.0;
};

inline std::vector<TuneRow> run_tune(const fs::path& bundle_dir, const fs::path& corpus_dir,
                                     const std::string& head,
                                     const std::vector<double>& transition_grid,
                                     const std::vector<double>& observation_grid,
                                     const HmmConfig& base_cfg,
                                     std::ostream* progress = nullptr) {
  if (transition_grid.empty() || observation_grid.empty())
    throw config_error("tune-hmm: empty lambda grid");
  const LoadedModel model = load_model(bundle_dir);
  const auto entries = scan_corpus(corpus_dir);

  // Activations once per song, then decode per grid point.
  std::vector<ActivationMatrix> acts;
  std::vector<BeatSequence> refs;
  for (const auto& entry : entries) {
    SpectralFeature mix_feat;
    std::optional<StemFeatures> stems;
    if (variant_is_sda(model.params.variant)) {
      SdaFeatures sda = sda_mode(read_wav(entry.mixture), read_wav(entry.drum),
                                 read_wav(entry.nodrum), model.features);
      mix_feat = std::move(sda.mix);
      stems = std::move(sda.stems);
    } else {
      mix_feat = extract_features(read_wav(entry.mixture), model.features);
    }
    const EnsembleOutput out =
        ensemble_forward(mix_feat, model.params, stems ? &*stems : nullptr);
    acts.push_back(select_head(out, head));
    refs.push_back(read_beats(entry.beats));
  }

  std::vector<TuneRow> rows;
  for (double tl : transition_grid)
    for (double ol : observation_grid) {
      HmmConfig cfg = base_cfg;
      cfg.transition_lambda = tl;
      cfg.observation_lambda = ol;
      double beat_sum = 0.0, down_sum = 0.0;
      for (std::size_t i = 0; i < acts.size(); ++i) {
        cfg.fps = acts[i].frame_rate;
        const BeatSequence est = viterbi_decode(acts[i], cfg);
        beat_sum += f_measure(est.times(), refs[i].times()).f1;
        down_sum += f_measure(est.downbeat_times(), refs[i].downbeat_times()).f1;
      }
      rows.push_back({tl, ol, beat_sum / acts.size(), down_sum / acts.size()});
      if (progress)
        *progress << "  lambda=(" << tl << ", " << ol << ") beat F1 "
                  << rows.back().beat_f1 << "\n";
    }
  std::sort(rows.begin(), rows.end(),
            [](const TuneRow& a, const TuneRow& b) { return a.beat_f1 > b.beat_f1; });
  return rows;
}

inline void write_tune_tsv(std::ostream& out, const std::vector<TuneRow>& rows) {
  out << "transition_lambda\tobservation_lambda\tbeat_f1\tdownbeat_f1\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& r : rows)
    out << r.transition_lambda << '\t' << r.observation_lambda << '\t' << r.beat_f1 << '\t'
        << r.downbeat_f1 << '\n';
}

}  // namespace beatfuse
