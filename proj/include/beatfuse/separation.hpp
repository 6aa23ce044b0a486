#pragma once

// Feature-domain drum/non-drum separation. A BLSTM stack with a sigmoid
// head predicts one mask value per feature dimension; the drum stem is
// mask * mixture and the non-drum stem is (1 - mask) * mixture, so the two
// stems partition the mixture feature exactly.

#include <Eigen/Dense>

#include <cmath>
#include <cstdlib>

#include "beatfuse/blstm.hpp"
#include "beatfuse/features.hpp"

namespace beatfuse {

struct StemFeatures {
  SpectralFeature drum;
  SpectralFeature nodrum;
};

struct SeparationTrace {
  StackTrace stack;
  MatrixXd mask;  // D x T
};

inline StemFeatures separate_features(const SpectralFeature& mix, const BlstmStack& separator,
                                      SeparationTrace* trace = nullptr) {
  if (separator.output_kind != OutputKind::sigmoid_mask)
    throw config_error("separator: output head must be a sigmoid mask");
  if (separator.input_dim() != mix.dims() || separator.output_dim() != mix.dims())
    throw config_error("separator: feature dimension mismatch");

  const MatrixXd seq = mix.data.transpose();  // D x T
  const BlstmResult res = blstm_forward(seq, separator, trace ? &trace->stack : nullptr);
  if (trace) trace->mask = res.output;

  StemFeatures stems;
  stems.drum.frame_rate = stems.nodrum.frame_rate = mix.frame_rate;
  stems.drum.layout = stems.nodrum.layout = mix.layout;
  stems.drum.data = mix.data.cwiseProduct(res.output.transpose());
  stems.nodrum.data = mix.data - stems.drum.data;
  return stems;
}

// Mean squared error between produced and reference stem features,
// averaged over both stems.
inline double separation_loss(const StemFeatures& pred, const StemFeatures& ref) {
  if (pred.drum.data.rows() != ref.drum.data.rows() ||
      pred.drum.data.cols() != ref.drum.data.cols() ||
      pred.nodrum.data.rows() != ref.nodrum.data.rows() ||
      pred.nodrum.data.cols() != ref.nodrum.data.cols())
    throw config_error("separation_loss: stem shape mismatch");
  const double n = static_cast<double>(pred.drum.data.size());
  const double mse_drum = (pred.drum.data - ref.drum.data).squaredNorm() / n;
  const double mse_nodrum = (pred.nodrum.data - ref.nodrum.data).squaredNorm() / n;
  return 0.5 * (mse_drum + mse_nodrum);
}

// Gradient of separation_loss w.r.t. the mask head pre-activations.
// All matrices are D x T.
inline MatrixXd separation_preact_grad(const MatrixXd& mask, const MatrixXd& mix,
                                       const MatrixXd& ref_drum, const MatrixXd& ref_nodrum) {
  const double n = static_cast<double>(mix.size());
  const MatrixXd err_drum = mask.cwiseProduct(mix) - ref_drum;
  const MatrixXd err_nodrum = (MatrixXd::Ones(mask.rows(), mask.cols()) - mask).cwiseProduct(mix) - ref_nodrum;
  const MatrixXd d_mask = mix.cwiseProduct(err_drum - err_nodrum) / n;
  return d_mask.cwiseProduct(mask.cwiseProduct(MatrixXd::Ones(mask.rows(), mask.cols()) - mask));
}

// Features of externally provided stem audio, used both for separator
// supervision and for the SDA bypass.
inline StemFeatures reference_stem_features(const AudioClip& drum_audio,
                                            const AudioClip& nodrum_audio,
                                            const FeatureConfig& config) {
  const long len_d = static_cast<long>(drum_audio.samples.size());
  const long len_n = static_cast<long>(nodrum_audio.samples.size());
  if (std::abs(len_d - len_n) > config.hop)
    throw data_error("reference stems: drum/non-drum length mismatch beyond one hop");
  StemFeatures stems;
  stems.drum = extract_features(drum_audio, config);
  stems.nodrum = extract_features(nodrum_audio, config);
  return stems;
}

struct SdaFeatures {
  SpectralFeature mix;
  StemFeatures stems;
};

// SDA: the trainable separator is bypassed; features are computed directly
// from three aligned audio streams.
inline SdaFeatures sda_mode(const AudioClip& mix_audio, const AudioClip& drum_audio,
                            const AudioClip& nodrum_audio, const FeatureConfig& config) {
  const long len_m = static_cast<long>(mix_audio.samples.size());
  for (const auto* stem : {&drum_audio, &nodrum_audio})
    if (std::abs(static_cast<long>(stem->samples.size()) - len_m) > config.hop)
      throw data_error("sda: stem length differs from the mixture beyond one hop");
  SdaFeatures out;
  out.mix = extract_features(mix_audio, config);
  out.stems = reference_stem_features(drum_audio, nodrum_audio, config);
  if (out.stems.drum.frames() != out.mix.frames())
    throw data_error("sda: stem features are not aligned with the mixture");
  return out;
}

}  // namespace beatfuse
