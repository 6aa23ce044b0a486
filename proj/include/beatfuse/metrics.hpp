#pragma once

// Evaluation: F-measure with a fixed ±70 ms window, the CMLt continuity
// metric, a paired one-tailed t-test over per-song scores, drum-presence
// profiling, and averaged activation profiles around annotated events.

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "beatfuse/audio.hpp"
#include "beatfuse/beats.hpp"
#include "beatfuse/blstm.hpp"
#include "beatfuse/common.hpp"

namespace beatfuse {

struct FMeasure {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int true_positives = 0;
};

namespace detail {

inline void require_sorted(const std::vector<double>& v, const char* what) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] < v[i - 1]) throw data_error(std::string(what) + ": times must be sorted");
}

}  // namespace detail

// Greedy one-to-one matching in time order: scan refs ascending, match each
// to the earliest unmatched estimate within ±tol. With equal-width windows
// this greedy matching attains maximum cardinality (cross-checked against a
// max-matching oracle in the tests); the greedy rule is the contract.
// F1 is 1 when both lists are empty and 0 when exactly one is.
inline FMeasure f_measure(const std::vector<double>& est, const std::vector<double>& ref,
                          double tol = 0.070) {
  detail::require_sorted(est, "f_measure est");
  detail::require_sorted(ref, "f_measure ref");
  FMeasure out;
  if (est.empty() && ref.empty()) {
    out.precision = out.recall = out.f1 = 1.0;
    return out;
  }
  if (est.empty() || ref.empty()) return out;

  std::size_t next = 0;  // earliest still-unmatched estimate
  int tp = 0;
  for (double r : ref) {
    while (next < est.size() && est[next] < r - tol) ++next;
    if (next < est.size() && std::abs(est[next] - r) <= tol) {
      ++tp;
      ++next;
    }
  }
  out.true_positives = tp;
  out.precision = static_cast<double>(tp) / est.size();
  out.recall = static_cast<double>(tp) / ref.size();
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

namespace detail {

inline std::size_t nearest_index(const std::vector<double>& sorted, double x) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), x);
  if (it == sorted.begin()) return 0;
  if (it == sorted.end()) return sorted.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - sorted.begin());
  return (x - sorted[hi - 1]) <= (sorted[hi] - x) ? hi - 1 : hi;
}

// Correctness of one estimated beat under the continuity rules: phase and
// inter-beat interval both within tol_frac of the local inter-annotation
// interval. The first estimate uses its successor interval as a stand-in;
// a single-beat estimate sequence is never correct.
inline std::vector<char> cmlt_correct_flags(const std::vector<double>& est,
                                            const std::vector<double>& ref,
                                            double tol_frac) {
  std::vector<char> ok(est.size(), 0);
  for (std::size_t j = 0; j < est.size(); ++j) {
    const std::size_t i = nearest_index(ref, est[j]);
    const double ref_interval = i == 0 ? ref[1] - ref[0] : ref[i] - ref[i - 1];
    const double tol = tol_frac * ref_interval;
    if (std::abs(est[j] - ref[i]) >= tol) continue;
    double est_interval;
    if (j > 0)
      est_interval = est[j] - est[j - 1];
    else if (est.size() > 1)
      est_interval = est[1] - est[0];
    else
      continue;
    if (std::abs(est_interval - ref_interval) >= tol) continue;
    ok[j] = 1;
  }
  return ok;
}

}  // namespace detail

// CMLt: total correct beats over all continuously-correct runs, divided by
// the number of annotations. Requires at least two annotations.
inline double cmlt(const std::vector<double>& est, const std::vector<double>& ref,
                   double tol_frac = 0.175) {
  detail::require_sorted(est, "cmlt est");
  detail::require_sorted(ref, "cmlt ref");
  if (ref.size() < 2) throw data_error("cmlt: need at least two annotations");
  if (est.empty()) return 0.0;
  const std::vector<char> ok = detail::cmlt_correct_flags(est, ref, tol_frac);
  long correct = std::count(ok.begin(), ok.end(), 1);
  return static_cast<double>(correct) / static_cast<double>(ref.size());
}

inline std::optional<double> cmlt_or_skip(const std::vector<double>& est,
                                          const std::vector<double>& ref,
                                          double tol_frac = 0.175) {
  if (ref.size() < 2) return std::nullopt;
  return cmlt(est, ref, tol_frac);
}

// One-tailed paired t-test, alternative mean(d) > 0. Degenerate sd = 0:
// p = 0 for mean > 0, p = 1 for mean < 0, p = 0.5 for mean = 0 (t = 0).
struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int n = 0;
};

inline TTestResult paired_ttest_detail(const std::vector<double>& diffs) {
  const std::size_t n = diffs.size();
  if (n < 2) throw data_error("t-test: need at least two paired differences");
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double d : diffs) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  TTestResult out;
  out.n = static_cast<int>(n);
  if (sd == 0.0) {
    out.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
            : mean < 0.0 ? -std::numeric_limits<double>::infinity()
                         : 0.0;
    out.p = mean > 0.0 ? 0.0 : mean < 0.0 ? 1.0 : 0.5;
    return out;
  }
  out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(static_cast<double>(n - 1));
  out.p = 1.0 - boost::math::cdf(dist, out.t);
  return out;
}

inline double paired_one_tailed_ttest(const std::vector<double>& diffs) {
  return paired_ttest_detail(diffs).p;
}

// Mean absolute sample magnitude; the drum-presence statistic.
inline double absm(const AudioClip& clip) {
  validate_clip(clip, "absm");
  double sum = 0.0;
  for (double s : clip.samples) sum += std::abs(s);
  return sum / static_cast<double>(clip.samples.size());
}

struct DrumPresence {
  std::vector<bool> drummed;  // per song: ABSM >= threshold
  double rate_percent = 0.0;
};

inline DrumPresence drum_presence_rate(const std::vector<AudioClip>& drum_stems,
                                       double threshold = 0.01) {
  if (drum_stems.empty()) throw data_error("drum presence: no stems given");
  DrumPresence out;
  int drummed = 0;
  for (const auto& stem : drum_stems) {
    const bool has_drums = absm(stem) >= threshold;
    out.drummed.push_back(has_drums);
    drummed += has_drums ? 1 : 0;
  }
  out.rate_percent = 100.0 * drummed / static_cast<double>(drum_stems.size());
  return out;
}

// Average of each activation row over windows of ±radius frames around the
// annotated events (all events for kind beat, position-1 events for kind
// downbeat). Events whose window leaves [0, T) are skipped.
enum class ProfileKind { beat, downbeat };

// Adds the windows of one song into `sum` (3 x (2 radius + 1)); returns the
// number of events used, so profiles can be aggregated across songs.
inline long accumulate_profile(const ActivationMatrix& act, const BeatSequence& anns,
                               int radius, ProfileKind kind, Eigen::MatrixXd& sum) {
  const int T = act.frames();
  if (sum.rows() != 3 || sum.cols() != 2 * radius + 1)
    sum = Eigen::MatrixXd::Zero(3, 2 * radius + 1);
  long count = 0;
  for (const auto& e : anns.events) {
    if (kind == ProfileKind::downbeat && e.position != 1) continue;
    const long frame = round_half_even(e.time * act.frame_rate);
    if (frame - radius < 0 || frame + radius >= T) continue;
    sum += act.data.middleCols(frame - radius, 2 * radius + 1);
    ++count;
  }
  return count;
}

inline Eigen::MatrixXd activation_profile(const ActivationMatrix& act, const BeatSequence& anns,
                                          int radius = 10,
                                          ProfileKind kind = ProfileKind::beat) {
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(3, 2 * radius + 1);
  const long count = accumulate_profile(act, anns, radius, kind, sum);
  if (count == 0) throw data_error("activation_profile: no events inside the activation range");
  return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Per-song evaluation rows and the report TSV.

struct SongScores {
  std::string id;
  double beat_f1 = 0.0;
  double downbeat_f1 = 0.0;
  std::optional<double> beat_cmlt;
  std::optional<double> downbeat_cmlt;
};

struct EvalReport {
  std::vector<SongScores> songs;

  SongScores mean_row() const {
    SongScores m;
    m.id = "MEAN";
    if (songs.empty()) return m;
    double bf = 0.0, df = 0.0, bc = 0.0, dc = 0.0;
    long n_bc = 0, n_dc = 0;
    for (const auto& s : songs) {
      bf += s.beat_f1;
      df += s.downbeat_f1;
      if (s.beat_cmlt) {
        bc += *s.beat_cmlt;
        ++n_bc;
      }
      if (s.downbeat_cmlt) {
        dc += *s.downbeat_cmlt;
        ++n_dc;
      }
    }
    m.beat_f1 = bf / songs.size();
    m.downbeat_f1 = df / songs.size();
    if (n_bc > 0) m.beat_cmlt = bc / n_bc;
    if (n_dc > 0) m.downbeat_cmlt = dc / n_dc;
    return m;
  }
};

inline SongScores score_song(const std::string& id, const BeatSequence& est,
                             const BeatSequence& ref, double f1_tol = 0.070,
                             double cmlt_tol = 0.175) {
  SongScores s;
  s.id = id;
  s.beat_f1 = f_measure(est.times(), ref.times(), f1_tol).f1;
  s.downbeat_f1 = f_measure(est.downbeat_times(), ref.downbeat_times(), f1_tol).f1;
  s.beat_cmlt = cmlt_or_skip(est.times(), ref.times(), cmlt_tol);
  s.downbeat_cmlt = cmlt_or_skip(est.downbeat_times(), ref.downbeat_times(), cmlt_tol);
  return s;
}

inline void write_eval_tsv(std::ostream& out, const EvalReport& report) {
  auto cell = [&](const std::optional<double>& v) -> std::string {
    if (!v) return "NA";
    std::ostringstream os;
    os << std::fixed << std::setprecision(6) << *v;
    return os.str();
  };
  out << "song\tbeat_f1\tdownbeat_f1\tbeat_cmlt\tdownbeat_cmlt\n";
  out << std::fixed << std::setprecision(6);
  auto row = [&](const SongScores& s) {
    out << s.id << '\t' << s.beat_f1 << '\t' << s.downbeat_f1 << '\t' << cell(s.beat_cmlt)
        << '\t' << cell(s.downbeat_cmlt) << '\n';
  };
  for (const auto& s : report.songs) row(s);
  row(report.mean_row());
}

}  // namespace beatfuse
