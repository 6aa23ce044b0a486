#pragma once

// The full architecture: separator -> three parallel trackers -> fuser,
// with the baseline / DA1 / DA2 / SDA1 / SDA2 variants. Per-module losses
// are detached: no gradient crosses a module boundary. The fuser sees
// tracker activations (and, for DA2, last-layer hidden states) as
// constants, and trackers see separated features as constants.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "beatfuse/blstm.hpp"
#include "beatfuse/optimizer.hpp"
#include "beatfuse/separation.hpp"

namespace beatfuse {

enum class Variant { baseline, da1, da2, sda1, sda2 };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::da1: return "da1";
    case Variant::da2: return "da2";
    case Variant::sda1: return "sda1";
    default: return "sda2";
  }
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "da1") return Variant::da1;
  if (s == "da2") return Variant::da2;
  if (s == "sda1") return Variant::sda1;
  if (s == "sda2") return Variant::sda2;
  throw config_error("unknown variant: " + s);
}

inline bool variant_has_separator(Variant v) { return v == Variant::da1 || v == Variant::da2; }
inline bool variant_has_stem_trackers(Variant v) { return v != Variant::baseline; }
inline bool variant_has_fuser(Variant v) { return v != Variant::baseline; }
inline bool variant_is_sda(Variant v) { return v == Variant::sda1 || v == Variant::sda2; }
inline bool variant_is_two_stage(Variant v) { return v == Variant::da2 || v == Variant::sda2; }

// Fuser widths are fixed: 10 hidden units for the activation-only fusers,
// 25 for the two-stage ones.
inline int fuser_hidden_units(Variant v) { return variant_is_two_stage(v) ? 25 : 10; }

inline int fuser_input_dim(Variant v, int tracker_hidden) {
  return variant_is_two_stage(v) ? 9 + 3 * 2 * tracker_hidden : 9;
}

struct EnsembleParams {
  Variant variant = Variant::baseline;
  std::optional<BlstmStack> separator;
  BlstmStack tracker_mix;
  std::optional<BlstmStack> tracker_drum;
  std::optional<BlstmStack> tracker_nodrum;
  std::optional<BlstmStack> fuser;

  int tracker_hidden() const { return tracker_mix.layers.back().hidden_dim; }
};

struct EnsembleDims {
  int feature_dim = 0;
  int separator_hidden = 64;
  int tracker_hidden = 25;
  int num_layers = 3;
};

inline EnsembleParams make_ensemble(Variant variant, const EnsembleDims& dims,
                                    std::uint64_t seed) {
  if (dims.feature_dim <= 0) throw config_error("ensemble: feature dimension must be positive");
  EnsembleParams params;
  params.variant = variant;
  const std::vector<int> tracker_layers(dims.num_layers, dims.tracker_hidden);
  params.tracker_mix = make_blstm_stack(dims.feature_dim, tracker_layers, 3,
                                        OutputKind::softmax3, mix_seed(seed, 1));
  if (variant_has_separator(variant)) {
    const std::vector<int> sep_layers(dims.num_layers, dims.separator_hidden);
    params.separator = make_blstm_stack(dims.feature_dim, sep_layers, dims.feature_dim,
                                        OutputKind::sigmoid_mask, mix_seed(seed, 0));
  }
  if (variant_has_stem_trackers(variant)) {
    params.tracker_drum = make_blstm_stack(dims.feature_dim, tracker_layers, 3,
                                           OutputKind::softmax3, mix_seed(seed, 2));
    params.tracker_nodrum = make_blstm_stack(dims.feature_dim, tracker_layers, 3,
                                             OutputKind::softmax3, mix_seed(seed, 3));
  }
  if (variant_has_fuser(variant)) {
    const std::vector<int> fuser_layers(dims.num_layers, fuser_hidden_units(variant));
    params.fuser = make_blstm_stack(fuser_input_dim(variant, dims.tracker_hidden),
                                    fuser_layers, 3, OutputKind::softmax3,
                                    mix_seed(seed, 4));
  }
  return params;
}

struct EnsembleOutput {
  std::optional<ActivationMatrix> mix_act, drum_act, nodrum_act, fused_act;
  std::optional<MatrixXd> mix_hidden, drum_hidden, nodrum_hidden;  // 2H x T
};

// Training-time caches for every stack plus the stems that fed the
// trackers and the exact matrix the fuser consumed.
struct EnsembleTraces {
  std::optional<SeparationTrace> separator;
  std::optional<StackTrace> mix, drum, nodrum, fuser;
  std::optional<StemFeatures> stems;
  std::optional<MatrixXd> fuser_in;
};

// DA1: rows [mix_act; drum_act; nodrum_act] (9 x T). DA2 appends the three
// last-hidden blocks in fixed order mix, drum, nodrum.
inline MatrixXd fuser_input(const EnsembleOutput& out, Variant variant) {
  if (!out.mix_act || !out.drum_act || !out.nodrum_act)
    throw config_error("fuser_input: tracker activations missing");
  const int T = out.mix_act->frames();
  const bool two_stage = variant_is_two_stage(variant);
  int rows = 9;
  if (two_stage) {
    if (!out.mix_hidden || !out.drum_hidden || !out.nodrum_hidden)
      throw config_error("fuser_input: tracker hidden states missing");
    rows += static_cast<int>(out.mix_hidden->rows() + out.drum_hidden->rows() +
                             out.nodrum_hidden->rows());
  }
  MatrixXd in(rows, T);
  in.middleRows(0, 3) = out.mix_act->data;
  in.middleRows(3, 3) = out.drum_act->data;
  in.middleRows(6, 3) = out.nodrum_act->data;
  if (two_stage) {
    int r = 9;
    for (const auto* h : {&*out.mix_hidden, &*out.drum_hidden, &*out.nodrum_hidden}) {
      in.middleRows(r, h->rows()) = *h;
      r += static_cast<int>(h->rows());
    }
  }
  return in;
}

// Elementwise mean of the three tracker activations.
inline ActivationMatrix bagging_fuse(const ActivationMatrix& mix, const ActivationMatrix& drum,
                                     const ActivationMatrix& nodrum) {
  if (mix.data.cols() != drum.data.cols() || mix.data.cols() != nodrum.data.cols() ||
      mix.data.rows() != 3 || drum.data.rows() != 3 || nodrum.data.rows() != 3)
    throw config_error("bagging: activation shape mismatch");
  ActivationMatrix out;
  out.frame_rate = mix.frame_rate;
  out.data = (mix.data + drum.data + nodrum.data) / 3.0;
  return out;
}

// Forward pass for any variant. Stems are consumed only in SDA mode; the
// DA variants separate internally and the baseline uses the mixture alone.
inline EnsembleOutput ensemble_forward(const SpectralFeature& mix_feat,
                                       const EnsembleParams& params,
                                       const StemFeatures* stems = nullptr,
                                       EnsembleTraces* traces = nullptr) {
  EnsembleOutput out;
  const double fps = mix_feat.frame_rate;
  const MatrixXd mix_seq = mix_feat.data.transpose();

  StackTrace mix_trace;
  const BlstmResult mix_res =
      blstm_forward(mix_seq, params.tracker_mix, traces ? &mix_trace : nullptr);
  out.mix_act = ActivationMatrix{mix_res.output, fps};
  out.mix_hidden = mix_res.last_hidden;
  if (traces) traces->mix = std::move(mix_trace);

  if (!variant_has_stem_trackers(params.variant)) return out;

  StemFeatures local_stems;
  if (variant_is_sda(params.variant)) {
    if (!stems) throw data_error("ensemble: SDA variants require externally provided stems");
    local_stems = *stems;
  } else {
    if (!params.separator) throw config_error("ensemble: separator parameters missing");
    SeparationTrace sep_trace;
    local_stems = separate_features(mix_feat, *params.separator,
                                    traces ? &sep_trace : nullptr);
    if (traces) traces->separator = std::move(sep_trace);
  }
  if (local_stems.drum.frames() != mix_feat.frames())
    throw data_error("ensemble: stem features are not aligned with the mixture");

  StackTrace drum_trace, nodrum_trace;
  const BlstmResult drum_res = blstm_forward(local_stems.drum.data.transpose(),
                                             *params.tracker_drum,
                                             traces ? &drum_trace : nullptr);
  const BlstmResult nodrum_res = blstm_forward(local_stems.nodrum.data.transpose(),
                                               *params.tracker_nodrum,
                                               traces ? &nodrum_trace : nullptr);
  out.drum_act = ActivationMatrix{drum_res.output, fps};
  out.drum_hidden = drum_res.last_hidden;
  out.nodrum_act = ActivationMatrix{nodrum_res.output, fps};
  out.nodrum_hidden = nodrum_res.last_hidden;

  MatrixXd fuser_in = fuser_input(out, params.variant);
  StackTrace fuser_trace;
  const BlstmResult fuser_res =
      blstm_forward(fuser_in, *params.fuser, traces ? &fuser_trace : nullptr);
  out.fused_act = ActivationMatrix{fuser_res.output, fps};

  if (traces) {
    traces->drum = std::move(drum_trace);
    traces->nodrum = std::move(nodrum_trace);
    traces->fuser = std::move(fuser_trace);
    traces->stems = std::move(local_stems);
    traces->fuser_in = std::move(fuser_in);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainItem {
  std::string id;
  SpectralFeature mix_feat;
  std::optional<StemFeatures> ref_stems;  // required except for baseline
  FrameLabels labels;
};

struct ModuleLosses {
  std::optional<double> separator, mix, drum, nodrum, fuser;

  void accumulate(const ModuleLosses& other) {
    auto add = [](std::optional<double>& into, const std::optional<double>& v) {
      if (v) into = into.value_or(0.0) + *v;
    };
    add(separator, other.separator);
    add(mix, other.mix);
    add(drum, other.drum);
    add(nodrum, other.nodrum);
    add(fuser, other.fuser);
  }

  void scale(double s) {
    for (auto* v : {&separator, &mix, &drum, &nodrum, &fuser})
      if (*v) **v *= s;
  }

  bool all_finite() const {
    for (const auto* v : {&separator, &mix, &drum, &nodrum, &fuser})
      if (*v && !std::isfinite(**v)) return false;
    return true;
  }
};

struct EnsembleGrads {
  std::optional<StackGrads> separator, mix, drum, nodrum, fuser;
};

struct EnsembleOptimizers {
  std::optional<Optimizer> separator, mix, drum, nodrum, fuser;
};

inline EnsembleOptimizers make_optimizers(const EnsembleParams& params,
                                          const OptimizerConfig& cfg) {
  EnsembleOptimizers opt;
  if (params.separator) opt.separator.emplace(*params.separator, cfg);
  opt.mix.emplace(params.tracker_mix, cfg);
  if (params.tracker_drum) opt.drum.emplace(*params.tracker_drum, cfg);
  if (params.tracker_nodrum) opt.nodrum.emplace(*params.tracker_nodrum, cfg);
  if (params.fuser) opt.fuser.emplace(*params.fuser, cfg);
  return opt;
}

// One shared forward pass, then per-module losses and gradients. Detachment
// is structural: each module's backward consumes only its own trace, so
// tracker gradients treat separated features as constants and fuser
// gradients treat tracker outputs as constants.
inline ModuleLosses ensemble_losses_and_grads(const EnsembleParams& params,
                                              const TrainItem& item,
                                              const LossWeights& weights,
                                              EnsembleGrads* grads) {
  if (variant_has_stem_trackers(params.variant) && !item.ref_stems)
    throw data_error("training: item '" + item.id + "' is missing reference stems");

  EnsembleTraces traces;
  const StemFeatures* sda_stems =
      variant_is_sda(params.variant) ? &*item.ref_stems : nullptr;
  ensemble_forward(item.mix_feat, params, sda_stems, &traces);

  ModuleLosses losses;
  losses.mix = weighted_ce_from_probs(traces.mix->output, item.labels, weights);
  if (grads)
    grads->mix = blstm_backward(params.tracker_mix, *traces.mix,
                                weighted_ce_preact_grad(traces.mix->output, item.labels,
                                                        weights));

  if (params.separator) {
    const MatrixXd mix_dxt = item.mix_feat.data.transpose();
    const MatrixXd ref_drum = item.ref_stems->drum.data.transpose();
    const MatrixXd ref_nodrum = item.ref_stems->nodrum.data.transpose();
    StemFeatures pred;
    pred.drum.data = traces.stems->drum.data;
    pred.nodrum.data = traces.stems->nodrum.data;
    StemFeatures ref;
    ref.drum.data = item.ref_stems->drum.data;
    ref.nodrum.data = item.ref_stems->nodrum.data;
    losses.separator = separation_loss(pred, ref);
    if (grads)
      grads->separator = blstm_backward(
          *params.separator, traces.separator->stack,
          separation_preact_grad(traces.separator->mask, mix_dxt, ref_drum, ref_nodrum));
  }

  if (params.tracker_drum) {
    losses.drum = weighted_ce_from_probs(traces.drum->output, item.labels, weights);
    losses.nodrum = weighted_ce_from_probs(traces.nodrum->output, item.labels, weights);
    if (grads) {
      grads->drum = blstm_backward(*params.tracker_drum, *traces.drum,
                                   weighted_ce_preact_grad(traces.drum->output, item.labels,
                                                           weights));
      grads->nodrum = blstm_backward(
          *params.tracker_nodrum, *traces.nodrum,
          weighted_ce_preact_grad(traces.nodrum->output, item.labels, weights));
    }
  }

  if (params.fuser) {
    losses.fuser = weighted_ce_from_probs(traces.fuser->output, item.labels, weights);
    if (grads)
      grads->fuser = blstm_backward(*params.fuser, *traces.fuser,
                                    weighted_ce_preact_grad(traces.fuser->output, item.labels,
                                                            weights));
  }
  return losses;
}

// One optimization pass over the dataset in a seeded shuffled order. All
// gradients for an item are computed from one shared forward pass before
// any parameters change.
inline ModuleLosses train_epoch(EnsembleParams& params, const std::vector<TrainItem>& dataset,
                                EnsembleOptimizers& opt, SeededRng& rng,
                                const LossWeights& weights = {}) {
  if (dataset.empty()) throw data_error("train_epoch: empty dataset");
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  ModuleLosses epoch;
  for (std::size_t idx : order) {
    EnsembleGrads grads;
    const ModuleLosses item_losses =
        ensemble_losses_and_grads(params, dataset[idx], weights, &grads);
    if (!item_losses.all_finite())
      throw numeric_error("train_epoch: non-finite loss on item '" + dataset[idx].id +
                          "', epoch aborted");
    if (grads.separator) opt.separator->step(*params.separator, *grads.separator);
    opt.mix->step(params.tracker_mix, *grads.mix);
    if (grads.drum) opt.drum->step(*params.tracker_drum, *grads.drum);
    if (grads.nodrum) opt.nodrum->step(*params.tracker_nodrum, *grads.nodrum);
    if (grads.fuser) opt.fuser->step(*params.fuser, *grads.fuser);
    epoch.accumulate(item_losses);
  }
  epoch.scale(1.0 / static_cast<double>(dataset.size()));
  return epoch;
}

// Deterministic forward-only evaluation; mean per-module losses.
inline ModuleLosses validate(const EnsembleParams& params,
                             const std::vector<TrainItem>& dataset,
                             const LossWeights& weights = {}) {
  if (dataset.empty()) throw data_error("validate: empty validation set");
  ModuleLosses total;
  for (const auto& item : dataset)
    total.accumulate(ensemble_losses_and_grads(params, item, weights, nullptr));
  total.scale(1.0 / static_cast<double>(dataset.size()));
  return total;
}

}  // namespace beatfuse
