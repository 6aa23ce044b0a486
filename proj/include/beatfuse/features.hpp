#pragma once

// Multi-resolution spectral front end: Hann STFT magnitudes at several
// window sizes, triangular log-spaced filterbanks, ln(1+x) compression and
// positive first differences, concatenated into one T x D feature matrix.

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "beatfuse/audio.hpp"
#include "beatfuse/common.hpp"

namespace beatfuse {

struct FeatureConfig {
  int sample_rate = 44100;
  int hop = 441;
  std::vector<int> window_sizes = {1024, 2048, 4096};
  std::vector<int> bands_per_octave = {3, 6, 12};
  double fmin = 30.0;
  double fmax = 17000.0;

  double frame_rate() const { return static_cast<double>(sample_rate) / hop; }

  void validate() const {
    if (sample_rate <= 0) throw config_error("features: sample_rate must be positive");
    if (hop <= 0) throw config_error("features: hop must be positive");
    if (window_sizes.empty()) throw config_error("features: need at least one window size");
    if (window_sizes.size() != bands_per_octave.size())
      throw config_error("features: one bands_per_octave entry per window size");
    for (std::size_t i = 1; i < window_sizes.size(); ++i)
      if (window_sizes[i] <= window_sizes[i - 1])
        throw config_error("features: window sizes must be strictly increasing");
    for (int w : window_sizes)
      if (w <= 1) throw config_error("features: window sizes must exceed 1");
    for (int b : bands_per_octave)
      if (b <= 0) throw config_error("features: bands_per_octave must be positive");
    if (!(fmin > 0.0 && fmin < fmax)) throw config_error("features: need 0 < fmin < fmax");
    if (fmax > sample_rate / 2.0)
      throw config_error("features: fmax must not exceed the Nyquist frequency");
  }
};

struct FeatureSpan {
  int resolution = 0;  // index into window_sizes
  int bands = 0;
  bool is_difference = false;
};

struct SpectralFeature {
  Eigen::MatrixXd data;  // T x D
  double frame_rate = 0.0;
  std::vector<FeatureSpan> layout;

  int frames() const { return static_cast<int>(data.rows()); }
  int dims() const { return static_cast<int>(data.cols()); }
};

// Hann-windowed magnitude spectrogram. Frames are centered on t*hop with
// symmetric zero padding; T = ceil(num_samples / hop).
inline Eigen::MatrixXd stft_magnitude(const AudioClip& audio, int window_size, int hop) {
  validate_clip(audio, "stft");
  if (window_size <= 1 || hop <= 0) throw config_error("stft: bad window/hop");

  const long n = static_cast<long>(audio.samples.size());
  const long frames = (n + hop - 1) / hop;
  const int bins = window_size / 2 + 1;

  std::vector<double> window(window_size);
  for (int i = 0; i < window_size; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / window_size);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);

  Eigen::MatrixXd mag(frames, bins);
  std::vector<double> frame(window_size);
  std::vector<std::complex<double>> spectrum;
  for (long t = 0; t < frames; ++t) {
    const long start = t * hop - window_size / 2;
    for (int i = 0; i < window_size; ++i) {
      const long src = start + i;
      frame[i] = (src >= 0 && src < n) ? audio.samples[src] * window[i] : 0.0;
    }
    fft.fwd(spectrum, frame);
    for (int k = 0; k < bins; ++k) mag(t, k) = std::abs(spectrum[k]);
  }
  return mag;
}

// Triangular filters with log-spaced target frequencies snapped to FFT bins
// and deduplicated, each normalized to unit sum. Rows are bands.
inline Eigen::MatrixXd triangular_log_filterbank(int window_size, int sample_rate,
                                                 int bands_per_octave, double fmin,
                                                 double fmax) {
  const int bins = window_size / 2 + 1;
  const double bin_hz = static_cast<double>(sample_rate) / window_size;

  std::vector<int> centers;
  const int steps = static_cast<int>(std::floor(bands_per_octave * std::log2(fmax / fmin)));
  for (int i = 0; i <= steps; ++i) {
    const double f = fmin * std::pow(2.0, static_cast<double>(i) / bands_per_octave);
    const int bin = static_cast<int>(std::lround(f / bin_hz));
    if (bin < 1 || bin >= bins) continue;
    if (centers.empty() || centers.back() != bin) centers.push_back(bin);
  }
  if (centers.size() < 3)
    throw config_error("filterbank: band count resolves to zero filters");

  const int bands = static_cast<int>(centers.size()) - 2;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(bands, bins);
  for (int b = 0; b < bands; ++b) {
    const int lo = centers[b], mid = centers[b + 1], hi = centers[b + 2];
    for (int k = lo + 1; k <= mid; ++k)
      fb(b, k) = static_cast<double>(k - lo) / (mid - lo);
    for (int k = mid + 1; k < hi; ++k)
      fb(b, k) = static_cast<double>(hi - k) / (hi - mid);
    fb.row(b) /= fb.row(b).sum();
  }
  return fb;
}

// out[t,b] = ln(1 + sum_k filter_b[k] * mag[t,k])
inline Eigen::MatrixXd log_filtered(const Eigen::MatrixXd& mag, const FeatureConfig& config,
                                    int resolution_index) {
  config.validate();
  if (resolution_index < 0 ||
      resolution_index >= static_cast<int>(config.window_sizes.size()))
    throw config_error("log_filtered: resolution index out of range");
  const int window_size = config.window_sizes[resolution_index];
  if (mag.cols() != window_size / 2 + 1)
    throw config_error("log_filtered: magnitude bin count does not match the window size");

  const Eigen::MatrixXd fb =
      triangular_log_filterbank(window_size, config.sample_rate,
                                config.bands_per_octave[resolution_index], config.fmin,
                                config.fmax);
  Eigen::MatrixXd bands = mag * fb.transpose();
  return bands.unaryExpr([](double x) { return std::log1p(x); });
}

// out[t,b] = max(0, bands[t,b] - bands[t-1,b]); first frame is zero.
inline Eigen::MatrixXd pos_first_diff(const Eigen::MatrixXd& bands) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(bands.rows(), bands.cols());
  if (bands.rows() < 2) return out;
  out.bottomRows(bands.rows() - 1) =
      (bands.bottomRows(bands.rows() - 1) - bands.topRows(bands.rows() - 1)).cwiseMax(0.0);
  return out;
}

// Per resolution: log bands then their positive differences, resolutions
// concatenated along D. Input is downmixed/resampled to the configured rate
// before framing.
inline SpectralFeature extract_features(const AudioClip& audio, const FeatureConfig& config) {
  config.validate();
  validate_clip(audio, "extract_features");
  const AudioClip clip = audio.sample_rate == config.sample_rate
                             ? audio
                             : resample_linear(audio, config.sample_rate);

  std::vector<Eigen::MatrixXd> blocks;
  SpectralFeature feat;
  feat.frame_rate = config.frame_rate();
  long frames = -1;
  int total = 0;
  for (int r = 0; r < static_cast<int>(config.window_sizes.size()); ++r) {
    const Eigen::MatrixXd mag = stft_magnitude(clip, config.window_sizes[r], config.hop);
    Eigen::MatrixXd bands = log_filtered(mag, config, r);
    Eigen::MatrixXd diff = pos_first_diff(bands);
    if (frames < 0) frames = bands.rows();
    feat.layout.push_back({r, static_cast<int>(bands.cols()), false});
    feat.layout.push_back({r, static_cast<int>(diff.cols()), true});
    total += static_cast<int>(bands.cols() + diff.cols());
    blocks.push_back(std::move(bands));
    blocks.push_back(std::move(diff));
  }

  feat.data.resize(frames, total);
  int col = 0;
  for (const auto& block : blocks) {
    feat.data.middleCols(col, block.cols()) = block;
    col += static_cast<int>(block.cols());
  }
  return feat;
}

inline void write_feature_csv(std::ostream& out, const SpectralFeature& feat) {
  out << "# frame_rate=" << feat.frame_rate << "\n";
  bool first = true;
  for (const auto& span : feat.layout)
    for (int b = 0; b < span.bands; ++b) {
      if (!first) out << ',';
      out << "res" << span.resolution << '_' << (span.is_difference ? "diff" : "log") << "_b"
          << b;
      first = false;
    }
  out << "\n";
  const Eigen::IOFormat fmt(Eigen::FullPrecision, Eigen::DontAlignCols, ",", "\n");
  out << feat.data.format(fmt) << "\n";
}

}  // namespace beatfuse
