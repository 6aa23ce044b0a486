// beatfuse command line: corpus synthesis, training, tracking, evaluation,
// significance testing, activation profiles and the HMM lambda sweep.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "beatfuse/pipeline.hpp"

namespace fs = std::filesystem;
using namespace beatfuse;

namespace {

struct CliState {
  RunConfig run;
  SynthConfig synth;

  // synth
  std::string synth_out;
  double drumless = 0.0;

  // train
  std::string corpus, val, train_out;
  bool resume = false;

  // track
  std::string model_dir, track_out, head = "fuser";
  std::vector<std::string> audio;
  bool dump_activations = false;
  bool dump_features = false;

  // eval / stats
  std::vector<std::string> est_dirs, a_dirs, b_dirs;
  std::string ref_dir, report_out, pair_label = "a_vs_b", set_label = "test";

  // profile
  std::string act_dir, profile_out;
  int radius = 10;

  // tune
  std::vector<double> transition_grid = {25, 50, 100, 200, 400};
  std::vector<double> observation_grid = {4, 8, 16, 32};
  std::string tune_out;
};

std::vector<fs::path> to_paths(const std::vector<std::string>& v) {
  return std::vector<fs::path>(v.begin(), v.end());
}

void add_feature_options(CLI::App* cmd, FeatureConfig& cfg) {
  cmd->add_option("--sample-rate", cfg.sample_rate, "feature sample rate (Hz)");
  cmd->add_option("--hop", cfg.hop, "hop size in samples");
  cmd->add_option("--windows", cfg.window_sizes, "STFT window sizes (samples)");
  cmd->add_option("--bands-per-octave", cfg.bands_per_octave, "filterbank bands per octave");
  cmd->add_option("--fmin", cfg.fmin, "lowest filter frequency (Hz)");
  cmd->add_option("--fmax", cfg.fmax, "highest filter frequency (Hz)");
}

void add_hmm_options(CLI::App* cmd, HmmConfig& cfg) {
  cmd->add_option("--beats-per-bar", cfg.beats_per_bar, "candidate meters");
  cmd->add_option("--min-bpm", cfg.min_bpm, "slowest tempo");
  cmd->add_option("--max-bpm", cfg.max_bpm, "fastest tempo");
  cmd->add_option("--transition-lambda", cfg.transition_lambda, "tempo-change penalty");
  cmd->add_option("--observation-lambda", cfg.observation_lambda, "beat-window divisor");
  cmd->add_flag("!--no-correct-beats", cfg.correct_beats,
                "emit raw boundary crossings instead of snapping to activation maxima");
}

int dispatch(const CLI::App& app, CliState& st) {
  if (app.got_subcommand("synth")) {
    st.synth.drumless_fraction = st.drumless;
    const auto rows = generate_dataset(st.synth, st.synth_out);
    std::cout << "wrote " << rows.size() << " pieces to " << st.synth_out << "\n"
              << (fs::path(st.synth_out) / "manifest.tsv").string() << "\n";
    return 0;
  }
  if (app.got_subcommand("train")) {
    run_train(st.run, st.corpus, st.val, st.train_out, st.resume, &std::cerr);
    std::cout << "wrote " << st.run.runs << " bundle(s) under " << st.train_out << "\n";
    return 0;
  }
  if (app.got_subcommand("track")) {
    run_track(st.model_dir, to_paths(st.audio), st.track_out, st.head, st.run.hmm,
              st.dump_activations, st.dump_features, &std::cerr);
    std::cout << "wrote beat files to " << st.track_out << "\n";
    return 0;
  }
  if (app.got_subcommand("eval")) {
    const EvalReport report = run_eval(to_paths(st.est_dirs), st.ref_dir, &std::cerr);
    if (st.report_out.empty()) {
      write_eval_tsv(std::cout, report);
    } else {
      std::ofstream out(st.report_out);
      if (!out) throw data_error("eval: cannot write " + st.report_out);
      write_eval_tsv(out, report);
      std::cout << "wrote " << st.report_out << "\n";
    }
    return 0;
  }
  if (app.got_subcommand("stats")) {
    const auto rows = run_stats(to_paths(st.a_dirs), to_paths(st.b_dirs), st.ref_dir,
                                st.pair_label, st.set_label, &std::cerr);
    if (st.report_out.empty()) {
      write_stats_tsv(std::cout, rows);
    } else {
      std::ofstream out(st.report_out);
      if (!out) throw data_error("stats: cannot write " + st.report_out);
      write_stats_tsv(out, rows);
      std::cout << "wrote " << st.report_out << "\n";
    }
    return 0;
  }
  if (app.got_subcommand("profile")) {
    run_profile(st.act_dir, st.ref_dir, st.profile_out, st.radius, &std::cerr);
    std::cout << "wrote " << (fs::path(st.profile_out) / "profiles.tsv").string() << " and "
              << (fs::path(st.profile_out) / "profiles.svg").string() << "\n";
    return 0;
  }
  if (app.got_subcommand("tune-hmm")) {
    const auto rows = run_tune(st.model_dir, st.corpus, st.head, st.transition_grid,
                               st.observation_grid, st.run.hmm, &std::cerr);
    if (st.tune_out.empty()) {
      write_tune_tsv(std::cout, rows);
    } else {
      std::ofstream out(st.tune_out);
      if (!out) throw data_error("tune-hmm: cannot write " + st.tune_out);
      write_tune_tsv(out, rows);
      std::cout << "wrote " << st.tune_out << "\n";
    }
    return 0;
  }
  throw CLI::CallForHelp();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drum-aware ensemble beat and downbeat tracking"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from an INI config file");
  app.allow_config_extras(true);

  CliState st;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--out", st.synth_out, "output directory")->required();
  synth->add_option("--pieces", st.synth.pieces, "number of pieces");
  synth->add_option("--duration", st.synth.duration_s, "piece duration (s)");
  synth->add_option("--drumless", st.drumless, "fraction of drum-less pieces");
  synth->add_option("--seed", st.synth.seed, "corpus seed");
  synth->add_option("--sample-rate", st.synth.sample_rate, "audio sample rate (Hz)");
  synth->add_option("--tempo-min", st.synth.tempo_min_bpm, "slowest tempo (BPM)");
  synth->add_option("--tempo-max", st.synth.tempo_max_bpm, "fastest tempo (BPM)");
  synth->add_option("--meters", st.synth.meters, "candidate meters");

  auto* train = app.add_subcommand("train", "train a model on a corpus");
  train->add_option("--variant", st.run.variant,
                    "baseline | da1 | da2 | sda1 | sda2")->required();
  train->add_option("--corpus", st.corpus, "training corpus directory")->required();
  train->add_option("--val", st.val, "validation corpus directory")->required();
  train->add_option("--out", st.train_out, "output directory for bundles")->required();
  train->add_option("--runs", st.run.runs, "number of seeded runs");
  train->add_option("--seed", st.run.seed, "base seed (run i uses seed+i)");
  train->add_option("--epochs", st.run.epochs, "training epochs");
  train->add_option("--lr", st.run.optimizer.lr, "initial learning rate");
  train->add_option("--lookahead-k", st.run.optimizer.lookahead_k, "lookahead sync period");
  train->add_option("--lookahead-alpha", st.run.optimizer.lookahead_alpha,
                    "lookahead interpolation");
  train->add_option("--tracker-hidden", st.run.tracker_hidden, "tracker hidden units");
  train->add_option("--separator-hidden", st.run.separator_hidden, "separator hidden units");
  train->add_option("--layers", st.run.num_layers, "BLSTM layers per stack");
  train->add_flag("--resume", st.resume, "continue training saved bundles");
  add_feature_options(train, st.run.features);

  auto* track = app.add_subcommand("track", "decode beats for audio files");
  track->add_option("--model", st.model_dir, "model bundle directory")->required();
  track->add_option("--audio", st.audio, "input WAV files")->required();
  track->add_option("--out", st.track_out, "output directory")->required();
  track->add_option("--head", st.head, "fuser | mix | drum | nodrum | bagging");
  track->add_flag("--dump-activations", st.dump_activations,
                  "write per-head activation CSVs");
  track->add_flag("--dump-features", st.dump_features, "write input feature CSVs");
  add_hmm_options(track, st.run.hmm);

  auto* eval = app.add_subcommand("eval", "score estimates against annotations");
  eval->add_option("--est", st.est_dirs, "estimate directories (repeat per run)")->required();
  eval->add_option("--ref", st.ref_dir, "annotation directory")->required();
  eval->add_option("--out", st.report_out, "report TSV path (stdout when omitted)");

  auto* stats = app.add_subcommand("stats", "paired one-tailed t-test between two models");
  stats->add_option("--a", st.a_dirs, "side A estimate directories")->required();
  stats->add_option("--b", st.b_dirs, "side B estimate directories")->required();
  stats->add_option("--ref", st.ref_dir, "annotation directory")->required();
  stats->add_option("--pair", st.pair_label, "pair label for the report");
  stats->add_option("--set", st.set_label, "test-set label for the report");
  stats->add_option("--out", st.report_out, "report TSV path (stdout when omitted)");

  auto* profile = app.add_subcommand("profile", "averaged activation profiles around events");
  profile->add_option("--activations", st.act_dir, "directory of dumped activation CSVs")
      ->required();
  profile->add_option("--ref", st.ref_dir, "annotation directory")->required();
  profile->add_option("--out", st.profile_out, "output directory")->required();
  profile->add_option("--radius", st.radius, "window radius in frames");

  auto* tune = app.add_subcommand("tune-hmm", "grid sweep of HMM lambdas on a corpus");
  tune->add_option("--model", st.model_dir, "model bundle directory")->required();
  tune->add_option("--corpus", st.corpus, "validation corpus directory")->required();
  tune->add_option("--head", st.head, "head to decode");
  tune->add_option("--transition-grid", st.transition_grid, "transition lambda values");
  tune->add_option("--observation-grid", st.observation_grid, "observation lambda values");
  tune->add_option("--out", st.tune_out, "output TSV (stdout when omitted)");
  add_hmm_options(tune, st.run.hmm);

  try {
    app.parse(argc, argv);
    return dispatch(app, st);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
