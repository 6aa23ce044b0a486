#pragma once

// Test-only oracles, independent of the implementation paths they check:
// finite-difference gradients, dense/enumeration Viterbi, maximum bipartite
// matching for the F-measure, and a run-segmentation CMLt scorer.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "beatfuse/blstm.hpp"
#include "beatfuse/hmm.hpp"

namespace oracles {

// ---------------------------------------------------------------------------
// Central finite differences over every parameter of a stack.

struct GradCheckResult {
  double worst_rel_err = 0.0;
  long params_checked = 0;
};

inline GradCheckResult finite_difference_check(beatfuse::BlstmStack& stack,
                                               const beatfuse::StackGrads& analytic,
                                               const std::function<double()>& loss_fn,
                                               double eps = 1e-5) {
  GradCheckResult result;
  std::vector<double*> params;
  std::vector<double> grads;
  beatfuse::for_each_tensor(stack, [&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) params.push_back(t.data() + i);
  });
  beatfuse::for_each_tensor(analytic, [&](const auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) grads.push_back(t.data()[i]);
  });
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = *params[i];
    *params[i] = orig + eps;
    const double up = loss_fn();
    *params[i] = orig - eps;
    const double down = loss_fn();
    *params[i] = orig;
    const double fd = (up - down) / (2.0 * eps);
    const double rel =
        std::abs(grads[i] - fd) / std::max({std::abs(grads[i]), std::abs(fd), 1e-3});
    result.worst_rel_err = std::max(result.worst_rel_err, rel);
    ++result.params_checked;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Viterbi oracles.

// Brute-force max-product DP over an explicit dense transition matrix;
// enumerates every (previous, next) state pair. Ties break toward the
// smaller index, matching the production contract.
inline std::vector<int> dense_viterbi(const beatfuse::ActivationMatrix& act,
                                      const beatfuse::StateSpace& ss) {
  const int n = ss.num_states();
  const int T = act.frames();
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd log_a = Eigen::MatrixXd::Constant(n, n, ninf);
  for (int s = 0; s < n; ++s)
    for (std::size_t e = 0; e < ss.in_src[s].size(); ++e)
      log_a(ss.in_src[s][e], s) = ss.in_logp[s][e];

  Eigen::MatrixXd score(n, T);
  Eigen::MatrixXi bp(n, T);
  for (int s = 0; s < n; ++s)
    score(s, 0) = -std::log(static_cast<double>(n)) +
                  beatfuse::observation_logprob(ss, s, act.data.col(0));
  for (int t = 1; t < T; ++t)
    for (int s = 0; s < n; ++s) {
      double best = ninf;
      int arg = 0;
      for (int q = 0; q < n; ++q) {
        const double cand = score(q, t - 1) + log_a(q, s);
        if (cand > best) {
          best = cand;
          arg = q;
        }
      }
      score(s, t) = best + beatfuse::observation_logprob(ss, s, act.data.col(t));
      bp(s, t) = arg;
    }
  int state = 0;
  double best = score(0, T - 1);
  for (int s = 1; s < n; ++s)
    if (score(s, T - 1) > best) {
      best = score(s, T - 1);
      state = s;
    }
  std::vector<int> path(T);
  path[T - 1] = state;
  for (int t = T - 1; t > 0; --t) path[t - 1] = bp(path[t], t);
  return path;
}

// Literal recursive enumeration of every admissible state path; feasible
// only for tiny instances. Validates the dense DP oracle itself.
inline std::vector<int> enumerate_viterbi(const beatfuse::ActivationMatrix& act,
                                          const beatfuse::StateSpace& ss) {
  const int n = ss.num_states();
  const int T = act.frames();
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd log_a = Eigen::MatrixXd::Constant(n, n, ninf);
  for (int s = 0; s < n; ++s)
    for (std::size_t e = 0; e < ss.in_src[s].size(); ++e)
      log_a(ss.in_src[s][e], s) = ss.in_logp[s][e];

  std::vector<int> best_path, cur(T);
  double best_score = ninf;
  std::function<void(int, double)> recurse = [&](int t, double score) {
    if (score == ninf) return;
    if (t == T) {
      if (score > best_score) {  // strict: first (lexicographically smallest) wins ties
        best_score = score;
        best_path = cur;
      }
      return;
    }
    for (int s = 0; s < n; ++s) {
      const double step = t == 0 ? -std::log(static_cast<double>(n))
                                 : log_a(cur[t - 1], s);
      if (step == ninf) continue;
      cur[t] = s;
      recurse(t + 1, score + step + beatfuse::observation_logprob(ss, s, act.data.col(t)));
    }
  };
  recurse(0, 0.0);
  return best_path;
}

// ---------------------------------------------------------------------------
// Maximum bipartite matching between estimates and references under a
// fixed tolerance (Kuhn's augmenting paths).

inline int max_matching_size(const std::vector<double>& est, const std::vector<double>& ref,
                             double tol) {
  const int ne = static_cast<int>(est.size());
  const int nr = static_cast<int>(ref.size());
  std::vector<std::vector<int>> adj(nr);
  for (int r = 0; r < nr; ++r)
    for (int e = 0; e < ne; ++e)
      if (std::abs(est[e] - ref[r]) <= tol) adj[r].push_back(e);

  std::vector<int> match_est(ne, -1);
  std::function<bool(int, std::vector<char>&)> augment = [&](int r,
                                                             std::vector<char>& seen) -> bool {
    for (int e : adj[r]) {
      if (seen[e]) continue;
      seen[e] = 1;
      if (match_est[e] < 0 || augment(match_est[e], seen)) {
        match_est[e] = r;
        return true;
      }
    }
    return false;
  };
  int matched = 0;
  for (int r = 0; r < nr; ++r) {
    std::vector<char> seen(ne, 0);
    if (augment(r, seen)) ++matched;
  }
  return matched;
}

// ---------------------------------------------------------------------------
// CMLt via explicit run segmentation: mark each estimate correct under the
// phase/interval rules, split into maximal runs, sum run lengths.

inline double cmlt_run_segmentation(const std::vector<double>& est,
                                    const std::vector<double>& ref, double tol_frac) {
  auto nearest = [&](double x) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < ref.size(); ++i)
      if (std::abs(ref[i] - x) < std::abs(ref[best] - x)) best = i;
    return best;
  };
  std::vector<char> ok(est.size(), 0);
  for (std::size_t j = 0; j < est.size(); ++j) {
    const std::size_t i = nearest(est[j]);
    const double dref = i == 0 ? ref[1] - ref[0] : ref[i] - ref[i - 1];
    const double tol = tol_frac * dref;
    if (!(std::abs(est[j] - ref[i]) < tol)) continue;
    double dest;
    if (j > 0)
      dest = est[j] - est[j - 1];
    else if (est.size() > 1)
      dest = est[1] - est[0];
    else
      continue;
    if (!(std::abs(dest - dref) < tol)) continue;
    ok[j] = 1;
  }
  long total = 0;
  std::size_t j = 0;
  while (j < est.size()) {
    if (!ok[j]) {
      ++j;
      continue;
    }
    std::size_t run = 0;
    while (j < est.size() && ok[j]) {
      ++run;
      ++j;
    }
    total += run;
  }
  return ref.size() >= 2 ? static_cast<double>(total) / ref.size() : 0.0;
}

}  // namespace oracles
