#include <catch2/catch_amalgamated.hpp>

#include "beatfuse/separation.hpp"
#include "beatfuse/synth.hpp"
#include "support/oracles.hpp"

using namespace beatfuse;

namespace {

SpectralFeature random_feature(int frames, int dims, std::uint64_t seed) {
  SeededRng rng(seed);
  SpectralFeature feat;
  feat.frame_rate = 50.0;
  feat.layout = {{0, dims, false}};
  feat.data.resize(frames, dims);
  for (int t = 0; t < frames; ++t)
    for (int d = 0; d < dims; ++d) feat.data(t, d) = rng.uniform(0.0, 2.0);
  return feat;
}

FeatureConfig small_config() {
  FeatureConfig cfg;
  cfg.sample_rate = 16000;
  cfg.hop = 320;
  cfg.window_sizes = {256, 512};
  cfg.bands_per_octave = {1, 2};
  cfg.fmin = 40.0;
  cfg.fmax = 7000.0;
  return cfg;
}

}  // namespace

TEST_CASE("zero head pre-activations give the 0.5 mask", "[separation]") {
  const int D = 6;
  auto sep = make_blstm_stack(D, {4}, D, OutputKind::sigmoid_mask, 9);
  sep.head.weight.setZero();
  sep.head.bias.setZero();
  const SpectralFeature mix = random_feature(11, D, 10);
  const StemFeatures stems = separate_features(mix, sep);
  CHECK((stems.drum.data - 0.5 * mix.data).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((stems.nodrum.data - 0.5 * mix.data).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero mixture separates into zero stems", "[separation]") {
  const int D = 5;
  const auto sep = make_blstm_stack(D, {4}, D, OutputKind::sigmoid_mask, 12);
  SpectralFeature mix = random_feature(7, D, 13);
  mix.data.setZero();
  const StemFeatures stems = separate_features(mix, sep);
  CHECK(stems.drum.data.cwiseAbs().maxCoeff() == 0.0);
  CHECK(stems.nodrum.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("drum + nodrum reproduces the mixture and masks stay in (0,1)", "[separation]") {
  const int D = 8;
  const auto sep = make_blstm_stack(D, {6, 6}, D, OutputKind::sigmoid_mask, 15);
  const SpectralFeature mix = random_feature(23, D, 16);
  SeparationTrace trace;
  const StemFeatures stems = separate_features(mix, sep, &trace);
  CHECK((stems.drum.data + stems.nodrum.data - mix.data).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(trace.mask.minCoeff() > 0.0);
  CHECK(trace.mask.maxCoeff() < 1.0);
}

TEST_CASE("separation loss worked examples", "[separation]") {
  StemFeatures ref;
  ref.drum = random_feature(3, 4, 17);
  ref.nodrum = random_feature(3, 4, 18);
  CHECK(separation_loss(ref, ref) == 0.0);

  StemFeatures pred = ref;
  pred.drum.data.array() += 1.0;
  pred.nodrum.data.array() += 1.0;
  CHECK(separation_loss(pred, ref) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("separation loss matches a scalar recomputation", "[separation]") {
  StemFeatures pred, ref;
  pred.drum = random_feature(3, 4, 19);
  pred.nodrum = random_feature(3, 4, 20);
  ref.drum = random_feature(3, 4, 21);
  ref.nodrum = random_feature(3, 4, 22);
  double sum = 0.0;
  for (int t = 0; t < 3; ++t)
    for (int d = 0; d < 4; ++d) {
      const double ed = pred.drum.data(t, d) - ref.drum.data(t, d);
      const double en = pred.nodrum.data(t, d) - ref.nodrum.data(t, d);
      sum += ed * ed + en * en;
    }
  CHECK(separation_loss(pred, ref) == Catch::Approx(sum / (2.0 * 12.0)).margin(1e-12));
}

TEST_CASE("separator gradients match finite differences", "[separation][grad]") {
  const int D = 4, T = 5;
  auto sep = make_blstm_stack(D, {3}, D, OutputKind::sigmoid_mask, 23);
  const SpectralFeature mix = random_feature(T, D, 24);
  StemFeatures ref;
  ref.drum = random_feature(T, D, 25);
  ref.nodrum = random_feature(T, D, 26);

  SeparationTrace trace;
  separate_features(mix, sep, &trace);
  const MatrixXd d_preact =
      separation_preact_grad(trace.mask, mix.data.transpose(), ref.drum.data.transpose(),
                             ref.nodrum.data.transpose());
  const StackGrads grads = blstm_backward(sep, trace.stack, d_preact);
  const auto check = oracles::finite_difference_check(sep, grads, [&]() {
    return separation_loss(separate_features(mix, sep), ref);
  });
  CHECK(check.worst_rel_err < 1e-4);
}

TEST_CASE("reference stem features: silent drum gives a zero drum feature", "[separation]") {
  const FeatureConfig cfg = small_config();
  AudioClip silent, tone;
  silent.sample_rate = tone.sample_rate = cfg.sample_rate;
  silent.samples.assign(8000, 0.0);
  tone.samples.resize(8000);
  for (std::size_t i = 0; i < tone.samples.size(); ++i)
    tone.samples[i] = 0.3 * std::sin(2.0 * 3.14159265 * 220.0 * i / cfg.sample_rate);
  const StemFeatures stems = reference_stem_features(silent, tone, cfg);
  CHECK(stems.drum.data.cwiseAbs().maxCoeff() == 0.0);
  CHECK(stems.nodrum.data.cwiseAbs().maxCoeff() > 0.0);
  CHECK(stems.drum.frames() == stems.nodrum.frames());
}

TEST_CASE("reference stems reject length mismatches beyond one hop", "[separation]") {
  const FeatureConfig cfg = small_config();
  AudioClip a, b;
  a.sample_rate = b.sample_rate = cfg.sample_rate;
  a.samples.assign(8000, 0.1);
  b.samples.assign(8000 + 2 * cfg.hop, 0.1);
  CHECK_THROWS_AS(reference_stem_features(a, b, cfg), data_error);
}

TEST_CASE("sda mode equals reference stem features on exact synthetic stems", "[separation]") {
  SynthConfig scfg;
  scfg.pieces = 1;
  scfg.duration_s = 2.0;
  scfg.sample_rate = 16000;
  scfg.seed = 30;
  const SynthPiece piece = generate_piece(scfg, 0);
  const FeatureConfig cfg = small_config();
  const SdaFeatures sda = sda_mode(piece.mixture, piece.drum, piece.nodrum, cfg);
  const StemFeatures ref = reference_stem_features(piece.drum, piece.nodrum, cfg);
  CHECK(sda.stems.drum.data == ref.drum.data);
  CHECK(sda.stems.nodrum.data == ref.nodrum.data);
  CHECK(sda.mix.data == extract_features(piece.mixture, cfg).data);
}
