#pragma once

// Dynamic bar-pointer HMM decoding of a 3 x T activation matrix into beat
// and downbeat times. Hidden state = (meter pattern, integer beat interval
// tau in frames, position within the bar); position advances one frame per
// step and the tempo may change only at beat boundaries, penalized
// exponentially in the relative tempo change.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "beatfuse/beats.hpp"
#include "beatfuse/blstm.hpp"
#include "beatfuse/common.hpp"

namespace beatfuse {

struct HmmConfig {
  std::vector<int> beats_per_bar = {3, 4};
  double min_bpm = 55.0;
  double max_bpm = 215.0;
  double transition_lambda = 100.0;  // tempo-change penalty
  double observation_lambda = 16.0;  // beat-window divisor
  double fps = 100.0;
  // Snap each emitted beat to the frame of maximum activation inside its
  // beat window instead of the raw boundary-crossing frame.
  bool correct_beats = true;

  void validate() const {
    if (beats_per_bar.empty()) throw config_error("hmm: need at least one meter pattern");
    for (int b : beats_per_bar)
      if (b < 2) throw config_error("hmm: beats_per_bar values must be >= 2");
    if (!(min_bpm > 0.0 && min_bpm < max_bpm)) throw config_error("hmm: need 0 < min_bpm < max_bpm");
    if (observation_lambda < 2.0) throw config_error("hmm: observation_lambda must be >= 2");
    if (transition_lambda <= 0.0) throw config_error("hmm: transition_lambda must be positive");
    if (fps <= 0.0) throw config_error("hmm: fps must be positive");
  }
};

// All integer beat intervals tau with 60 fps / max_bpm <= tau <= 60 fps / min_bpm.
inline std::vector<int> tempo_grid(const HmmConfig& cfg) {
  cfg.validate();
  const int lo = static_cast<int>(std::ceil(60.0 * cfg.fps / cfg.max_bpm - 1e-9));
  const int hi = static_cast<int>(std::floor(60.0 * cfg.fps / cfg.min_bpm + 1e-9));
  std::vector<int> grid;
  for (int tau = std::max(1, lo); tau <= hi; ++tau) grid.push_back(tau);
  if (grid.empty()) throw config_error("hmm: empty tempo grid");
  return grid;
}

struct BarPointerState {
  int pattern = 0;   // index into beats_per_bar
  int beats = 0;     // beats per bar of that pattern
  int tempo = 0;     // tau, frames per beat
  int position = 0;  // 0 .. beats*tau - 1
};

struct StateSpace {
  std::vector<BarPointerState> states;  // pattern asc, tau asc, position asc
  std::vector<int> obs_class;           // kBeat / kDownbeat / kNonBeat per state
  // Incoming transitions per state; non-boundary states have exactly one.
  std::vector<std::vector<int>> in_src;
  std::vector<std::vector<double>> in_logp;
  double observation_lambda = 16.0;

  int num_states() const { return static_cast<int>(states.size()); }
  bool is_beat_boundary(int s) const { return states[s].position % states[s].tempo == 0; }
};

inline StateSpace build_state_space(const HmmConfig& cfg) {
  cfg.validate();
  const std::vector<int> grid = tempo_grid(cfg);

  StateSpace ss;
  ss.observation_lambda = cfg.observation_lambda;
  std::vector<std::vector<int>> first_index_of_tempo(cfg.beats_per_bar.size());
  for (std::size_t pat = 0; pat < cfg.beats_per_bar.size(); ++pat) {
    const int b = cfg.beats_per_bar[pat];
    first_index_of_tempo[pat].resize(grid.size());
    for (std::size_t ti = 0; ti < grid.size(); ++ti) {
      const int tau = grid[ti];
      first_index_of_tempo[pat][ti] = ss.num_states();
      for (int p = 0; p < b * tau; ++p) {
        ss.states.push_back({static_cast<int>(pat), b, tau, p});
        const bool in_window = (p % tau) < static_cast<double>(tau) / cfg.observation_lambda;
        if (!in_window)
          ss.obs_class.push_back(kNonBeat);
        else
          ss.obs_class.push_back(p < static_cast<double>(tau) / cfg.observation_lambda
                                     ? kDownbeat
                                     : kBeat);
      }
    }
  }

  const int n = ss.num_states();
  ss.in_src.resize(n);
  ss.in_logp.resize(n);

  // Tempo-change log-probabilities, normalized per source tempo.
  std::vector<std::vector<double>> change_logp(grid.size(),
                                               std::vector<double>(grid.size()));
  for (std::size_t from = 0; from < grid.size(); ++from) {
    double z = 0.0;
    for (std::size_t to = 0; to < grid.size(); ++to) {
      const double ratio = static_cast<double>(grid[to]) / grid[from];
      change_logp[from][to] = -cfg.transition_lambda * std::abs(ratio - 1.0);
      z += std::exp(change_logp[from][to]);
    }
    const double log_z = std::log(z);
    for (auto& lp : change_logp[from]) lp -= log_z;
  }

  for (std::size_t pat = 0; pat < cfg.beats_per_bar.size(); ++pat) {
    const int b = cfg.beats_per_bar[pat];
    for (std::size_t ti = 0; ti < grid.size(); ++ti) {
      const int tau = grid[ti];
      const int base = first_index_of_tempo[pat][ti];
      for (int p = 0; p < b * tau; ++p) {
        const int state = base + p;
        if (p % tau != 0) {
          // Deterministic within-beat advance from the previous position.
          ss.in_src[state].push_back(base + p - 1);
          ss.in_logp[state].push_back(0.0);
        } else {
          // Beat boundary at beat index k = p / tau; sources are the last
          // position of the preceding beat under every tempo.
          const int k = p / tau;
          for (std::size_t si = 0; si < grid.size(); ++si) {
            const int src_tau = grid[si];
            const int src_base = first_index_of_tempo[pat][si];
            const int src_beat_end = (k == 0 ? b : k) * src_tau - 1;
            ss.in_src[state].push_back(src_base + src_beat_end);
            ss.in_logp[state].push_back(change_logp[si][ti]);
          }
        }
      }
    }
  }
  return ss;
}

// Log-likelihood of one activation column for one state. Beat and downbeat
// states read their activation row directly; the non-beat mass is spread
// uniformly over the (lambda - 1) non-beat slots per beat. Activations are
// clamped at 1e-12 inside the log.
inline double observation_logprob(const StateSpace& ss, int state,
                                  const Eigen::Ref<const VectorXd>& act_column) {
  const int cls = ss.obs_class[state];
  const double p = std::max(act_column(cls), kProbClamp);
  if (cls == kNonBeat) return std::log(p) - std::log(ss.observation_lambda - 1.0);
  return std::log(p);
}

namespace detail {

// Per-frame log-densities by class; avoids 3 logs per state.
inline void frame_log_densities(const StateSpace& ss, const Eigen::Ref<const VectorXd>& col,
                                double out[3]) {
  out[kBeat] = std::log(std::max(col(kBeat), kProbClamp));
  out[kDownbeat] = std::log(std::max(col(kDownbeat), kProbClamp));
  out[kNonBeat] =
      std::log(std::max(col(kNonBeat), kProbClamp)) - std::log(ss.observation_lambda - 1.0);
}

}  // namespace detail

// Max-probability state path under a uniform initial distribution. Ties
// break toward the smaller state index. Backpointers are stored only for
// beat-boundary states; all other states have a unique predecessor.
inline std::vector<int> viterbi_path(const ActivationMatrix& act, const StateSpace& ss) {
  const int T = act.frames();
  const int n = ss.num_states();
  if (T < 1) throw data_error("viterbi: empty activation");

  std::vector<int> boundary_slot(n, -1);
  std::vector<int> boundary_states;
  for (int s = 0; s < n; ++s)
    if (ss.is_beat_boundary(s)) {
      boundary_slot[s] = static_cast<int>(boundary_states.size());
      boundary_states.push_back(s);
    }

  VectorXd prev_score(n), cur_score(n);
  double dens[3];
  detail::frame_log_densities(ss, act.data.col(0), dens);
  const double log_init = -std::log(static_cast<double>(n));
  for (int s = 0; s < n; ++s) prev_score(s) = log_init + dens[ss.obs_class[s]];

  std::vector<std::vector<std::int32_t>> boundary_bp(
      T, std::vector<std::int32_t>(boundary_states.size(), -1));

  for (int t = 1; t < T; ++t) {
    detail::frame_log_densities(ss, act.data.col(t), dens);
    for (int s = 0; s < n; ++s) {
      const auto& src = ss.in_src[s];
      const auto& lp = ss.in_logp[s];
      double best = prev_score(src[0]) + lp[0];
      int best_src = src[0];
      for (std::size_t e = 1; e < src.size(); ++e) {
        const double cand = prev_score(src[e]) + lp[e];
        if (cand > best || (cand == best && src[e] < best_src)) {
          best = cand;
          best_src = src[e];
        }
      }
      cur_score(s) = best + dens[ss.obs_class[s]];
      if (boundary_slot[s] >= 0) boundary_bp[t][boundary_slot[s]] = best_src;
    }
    std::swap(prev_score, cur_score);
  }

  int state = 0;
  double best = prev_score(0);
  for (int s = 1; s < n; ++s)
    if (prev_score(s) > best) {
      best = prev_score(s);
      state = s;
    }

  std::vector<int> path(T);
  path[T - 1] = state;
  for (int t = T - 1; t > 0; --t) {
    const int s = path[t];
    path[t - 1] = boundary_slot[s] >= 0 ? boundary_bp[t][boundary_slot[s]] : s - 1;
  }
  return path;
}

// Emits a beat whenever the decoded path crosses a beat boundary;
// position_in_bar = 1 + floor(p / tau), downbeat when the bar origin is
// crossed. Inter-beat intervals equal the path's tau/fps at each step.
inline BeatSequence path_to_beats(const std::vector<int>& path, const StateSpace& ss,
                                  double fps) {
  BeatSequence seq;
  for (std::size_t t = 0; t < path.size(); ++t) {
    const auto& st = ss.states[path[t]];
    if (st.position % st.tempo == 0)
      seq.events.push_back({static_cast<double>(t) / fps, st.position / st.tempo + 1});
  }
  return seq;
}

// Corrected emission: one beat per beat window traversed by the path,
// placed at the frame with the maximum matching activation row inside the
// window (earliest frame on ties). Partial windows at the sequence edges
// still emit.
inline BeatSequence path_to_beats_corrected(const std::vector<int>& path, const StateSpace& ss,
                                            const ActivationMatrix& act, double fps) {
  BeatSequence seq;
  const long T = static_cast<long>(path.size());
  long t = 0;
  while (t < T) {
    const auto& st = ss.states[path[t]];
    if (ss.obs_class[path[t]] == kNonBeat) {
      ++t;
      continue;
    }
    // A window run ends at the class change or at the next boundary frame.
    const int row = ss.obs_class[path[t]];
    const int position_in_bar = st.position / st.tempo + 1;
    long best_t = t;
    double best_v = act.data(row, t);
    long end = t + 1;
    while (end < T && ss.obs_class[path[end]] != kNonBeat &&
           ss.states[path[end]].position % ss.states[path[end]].tempo != 0) {
      if (act.data(row, end) > best_v) {
        best_v = act.data(row, end);
        best_t = end;
      }
      ++end;
    }
    seq.events.push_back({static_cast<double>(best_t) / fps, position_in_bar});
    t = end;
  }
  return seq;
}

inline BeatSequence viterbi_decode(const ActivationMatrix& act, const HmmConfig& cfg) {
  HmmConfig local = cfg;
  if (act.frame_rate > 0.0) {
    if (local.fps > 0.0 && std::abs(local.fps - act.frame_rate) > 1e-9)
      throw config_error("viterbi: activation frame rate does not match the decoder fps");
    local.fps = act.frame_rate;
  }
  const StateSpace ss = build_state_space(local);
  const std::vector<int> path = viterbi_path(act, ss);
  return local.correct_beats ? path_to_beats_corrected(path, ss, act, local.fps)
                             : path_to_beats(path, ss, local.fps);
}

}  // namespace beatfuse
