#pragma once

// Deterministic synthetic corpora: mixture, exact drum stem, exact
// non-drum stem and ground-truth annotations per piece. Percussion is
// filtered noise with exponential decay, tonal material is summed
// sinusoids; stems are quantized to a 2^-20 grid so that
// mixture = drum + nodrum holds samplewise even through float32 WAV files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "beatfuse/audio.hpp"
#include "beatfuse/beats.hpp"
#include "beatfuse/common.hpp"

namespace beatfuse {

struct SynthConfig {
  int pieces = 10;
  double duration_s = 10.0;
  double tempo_min_bpm = 70.0;
  double tempo_max_bpm = 180.0;
  std::vector<int> meters = {3, 4};
  double drumless_fraction = 0.0;
  std::uint64_t seed = 0;
  double amplitude_headroom = 0.4;  // per-stem peak; mixture peak <= 0.8
  int sample_rate = 44100;

  void validate() const {
    if (pieces < 1) throw config_error("synth: pieces must be positive");
    if (duration_s <= 0.0) throw config_error("synth: duration must be positive");
    if (!(tempo_min_bpm > 0.0 && tempo_min_bpm <= tempo_max_bpm))
      throw config_error("synth: bad tempo range");
    if (meters.empty()) throw config_error("synth: need at least one meter");
    for (int m : meters)
      if (m < 2) throw config_error("synth: meters must be >= 2");
    if (drumless_fraction < 0.0 || drumless_fraction > 1.0)
      throw config_error("synth: drumless fraction must lie in [0, 1]");
    if (amplitude_headroom <= 0.0 || amplitude_headroom > 0.4)
      throw config_error("synth: per-stem headroom must lie in (0, 0.4]");
    if (sample_rate <= 0) throw config_error("synth: sample rate must be positive");
  }
};

struct SynthPiece {
  AudioClip mixture, drum, nodrum;
  BeatSequence anns;
  double tempo_bpm = 0.0;
  int meter = 4;
  bool drumless = false;
};

namespace synth_detail {

// Exactly round(drumless_fraction * pieces) indices, chosen by a seeded
// shuffle so membership is a pure function of the config.
inline std::set<int> drumless_indices(const SynthConfig& cfg) {
  const int count = static_cast<int>(std::llround(cfg.drumless_fraction * cfg.pieces));
  std::vector<int> order(cfg.pieces);
  for (int i = 0; i < cfg.pieces; ++i) order[i] = i;
  SeededRng rng(mix_seed(cfg.seed, 0xD0FF));
  rng.shuffle(order);
  return std::set<int>(order.begin(), order.begin() + count);
}

inline void add_noise_burst(std::vector<double>& out, SeededRng& rng, long start, long length,
                            double amp, double decay_s, int sample_rate, int smooth,
                            bool highpass) {
  const long n = static_cast<long>(out.size());
  std::vector<double> noise(length);
  for (long i = 0; i < length; ++i) noise[i] = rng.uniform(-1.0, 1.0);
  if (smooth > 1) {
    std::vector<double> smoothed(length, 0.0);
    double acc = 0.0;
    for (long i = 0; i < length; ++i) {
      acc += noise[i];
      if (i >= smooth) acc -= noise[i - smooth];
      smoothed[i] = acc / smooth;
    }
    noise.swap(smoothed);
  }
  if (highpass)
    for (long i = length - 1; i > 0; --i) noise[i] = 0.5 * (noise[i] - noise[i - 1]);
  for (long i = 0; i < length; ++i) {
    const long dst = start + i;
    if (dst < 0 || dst >= n) continue;
    const double env = std::exp(-static_cast<double>(i) / (decay_s * sample_rate));
    out[dst] += amp * env * noise[i];
  }
}

inline void add_decaying_chord(std::vector<double>& out, long start, long length, double root,
                               double amp, double decay_s, int sample_rate) {
  const long n = static_cast<long>(out.size());
  const double ratios[3] = {1.0, 1.25, 1.5};
  for (long i = 0; i < length; ++i) {
    const long dst = start + i;
    if (dst < 0 || dst >= n) continue;
    const double t = static_cast<double>(i) / sample_rate;
    const double env = std::exp(-t / decay_s);
    double v = 0.0;
    for (double r : ratios) v += std::sin(2.0 * std::numbers::pi * root * r * t);
    out[dst] += amp * env * v / 3.0;
  }
}

inline void add_sustained_tone(std::vector<double>& out, long start, long length, double freq,
                               double amp, int sample_rate) {
  const long n = static_cast<long>(out.size());
  const long fade = std::min<long>(length / 4, sample_rate / 125);  // 8 ms fades
  for (long i = 0; i < length; ++i) {
    const long dst = start + i;
    if (dst < 0 || dst >= n) continue;
    double env = 1.0;
    if (i < fade) env = static_cast<double>(i) / fade;
    if (length - 1 - i < fade) env = std::min(env, static_cast<double>(length - 1 - i) / fade);
    out[dst] += amp * env * std::sin(2.0 * std::numbers::pi * freq * i / sample_rate);
  }
}

inline void scale_to_peak(std::vector<double>& samples, double peak) {
  double max_abs = 0.0;
  for (double s : samples) max_abs = std::max(max_abs, std::abs(s));
  if (max_abs <= 0.0) return;
  const double scale = peak / max_abs;
  for (double& s : samples) s *= scale;
}

// Nearest multiple of 2^-20: sums of two quantized stems with |sum| < 1
// are exact in float32, so the mixture survives WAV round trips bit-exactly.
inline void quantize(std::vector<double>& samples) {
  constexpr double grid = 1048576.0;  // 2^20
  for (double& s : samples) s = std::nearbyint(s * grid) / grid;
}

}  // namespace synth_detail

inline SynthPiece generate_piece(const SynthConfig& cfg, int index) {
  cfg.validate();
  if (index < 0 || index >= cfg.pieces) throw config_error("synth: piece index out of range");
  using namespace synth_detail;

  SeededRng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(index)));
  SynthPiece piece;
  piece.tempo_bpm = rng.uniform(cfg.tempo_min_bpm, cfg.tempo_max_bpm);
  piece.meter = cfg.meters[rng.index(cfg.meters.size())];
  piece.drumless = drumless_indices(cfg).count(index) > 0;

  const int sr = cfg.sample_rate;
  const long n = static_cast<long>(std::llround(cfg.duration_s * sr));
  const double period = 60.0 / piece.tempo_bpm;
  const long period_samples = static_cast<long>(std::llround(period * sr));

  std::vector<double> beat_times;
  for (double t = 0.0; t < cfg.duration_s - 1e-9; t += period) beat_times.push_back(t);
  for (std::size_t k = 0; k < beat_times.size(); ++k)
    piece.anns.events.push_back({beat_times[k], static_cast<int>(k % piece.meter) + 1});

  std::vector<double> drum(n, 0.0), nodrum(n, 0.0);

  const double root = rng.uniform(180.0, 300.0);
  static constexpr int kScaleSemitones[6] = {0, 2, 4, 7, 9, 12};

  if (!piece.drumless) {
    for (std::size_t k = 0; k < beat_times.size(); ++k) {
      const long s0 = static_cast<long>(std::llround(beat_times[k] * sr));
      const int pos = static_cast<int>(k % piece.meter) + 1;
      // kick on every beat: low-passed decaying noise
      add_noise_burst(drum, rng, s0, static_cast<long>(0.09 * sr), 1.0, 0.025, sr,
                      std::max(2, sr / 300), false);
      // snare on beat 2 (and 4 in 4/4)
      if (pos == 2 || (piece.meter == 4 && pos == 4))
        add_noise_burst(drum, rng, s0, static_cast<long>(0.12 * sr), 0.7, 0.04, sr, 1, false);
      // soft eighth-note hats
      for (int eighth = 0; eighth < 2; ++eighth)
        add_noise_burst(drum, rng, s0 + eighth * period_samples / 2,
                        static_cast<long>(0.03 * sr), 0.22, 0.008, sr, 1, true);
    }
  }

  for (std::size_t k = 0; k < beat_times.size(); ++k) {
    const long s0 = static_cast<long>(std::llround(beat_times[k] * sr));
    const int pos = static_cast<int>(k % piece.meter) + 1;
    if (pos == 1)
      add_decaying_chord(nodrum, s0, period_samples * piece.meter, root, 0.9,
                         0.4 * period * piece.meter, sr);
    const double tone =
        root * std::pow(2.0, kScaleSemitones[rng.index(6)] / 12.0);
    add_sustained_tone(nodrum, s0, period_samples, tone, 0.45, sr);
  }

  scale_to_peak(drum, cfg.amplitude_headroom);
  scale_to_peak(nodrum, cfg.amplitude_headroom);
  quantize(drum);
  quantize(nodrum);

  piece.drum = {std::move(drum), sr};
  piece.nodrum = {std::move(nodrum), sr};
  piece.mixture.sample_rate = sr;
  piece.mixture.samples.resize(n);
  for (long i = 0; i < n; ++i)
    piece.mixture.samples[i] = piece.drum.samples[i] + piece.nodrum.samples[i];
  return piece;
}

struct SynthManifestRow {
  std::string id;
  double tempo_bpm = 0.0;
  int meter = 4;
  bool drumless = false;
  double duration_s = 0.0;
};

inline std::string synth_piece_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "piece%04d", index);
  return buf;
}

// Writes <id>.wav, <id>.drum.wav, <id>.nodrum.wav, <id>.beats per piece
// plus manifest.tsv.
inline std::vector<SynthManifestRow> generate_dataset(const SynthConfig& cfg,
                                                      const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw data_error("synth: cannot create " + out_dir.string());

  std::vector<SynthManifestRow> rows;
  for (int index = 0; index < cfg.pieces; ++index) {
    const std::string id = synth_piece_id(index);
    try {
      const SynthPiece piece = generate_piece(cfg, index);
      write_wav(out_dir / (id + ".wav"), piece.mixture);
      write_wav(out_dir / (id + ".drum.wav"), piece.drum);
      write_wav(out_dir / (id + ".nodrum.wav"), piece.nodrum);
      write_beats(out_dir / (id + ".beats"), piece.anns);
      rows.push_back({id, piece.tempo_bpm, piece.meter, piece.drumless, cfg.duration_s});
    } catch (const data_error& e) {
      throw data_error("synth: piece " + id + ": " + e.what());
    }
  }

  std::ofstream manifest(out_dir / "manifest.tsv");
  if (!manifest) throw data_error("synth: cannot write manifest.tsv");
  manifest << "id\ttempo_bpm\tmeter\tdrumless\tduration_s\tsample_rate\tseed\n";
  manifest << std::fixed << std::setprecision(6);
  for (const auto& r : rows)
    manifest << r.id << '\t' << r.tempo_bpm << '\t' << r.meter << '\t' << (r.drumless ? 1 : 0)
             << '\t' << r.duration_s << '\t' << cfg.sample_rate << '\t' << cfg.seed << '\n';
  return rows;
}

}  // namespace beatfuse
