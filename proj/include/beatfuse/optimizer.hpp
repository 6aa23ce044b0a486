#pragma once

// Lookahead-wrapped Adam with plateau-based learning-rate decay. One
// optimizer instance per module; nothing is shared across modules.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "beatfuse/blstm.hpp"
#include "beatfuse/common.hpp"

namespace beatfuse {

struct OptimizerConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int lookahead_k = 5;          // slow-weight sync period (inner steps)
  double lookahead_alpha = 0.5; // slow-weight interpolation
  int plateau_patience = 20;    // epochs without improvement before decay
  double plateau_factor = 5.0;
  double plateau_threshold = 1e-6;

  void validate() const {
    // lr = 0 is admitted for diagnostics (a zero-rate epoch must leave
    // parameters unchanged).
    if (lr < 0.0) throw config_error("optimizer: lr must be non-negative");
    if (lookahead_k < 1) throw config_error("optimizer: lookahead k must be >= 1");
    if (lookahead_alpha < 0.0 || lookahead_alpha > 1.0)
      throw config_error("optimizer: lookahead alpha must lie in [0, 1]");
    if (plateau_patience < 1 || plateau_factor <= 1.0)
      throw config_error("optimizer: bad plateau schedule");
  }
};

class Optimizer {
 public:
  Optimizer(const BlstmStack& params, OptimizerConfig cfg) : cfg_(cfg), lr_(cfg.lr) {
    cfg_.validate();
    for_each_tensor(params, [&](const auto& t) {
      m_.push_back(VectorXd::Zero(t.size()));
      v_.push_back(VectorXd::Zero(t.size()));
      slow_.push_back(Eigen::Map<const VectorXd>(t.data(), t.size()));
    });
  }

  // One bias-corrected Adam update on the fast parameters.
  void adam_step(BlstmStack& params, const StackGrads& grads) {
    bool finite = true;
    for_each_tensor(grads, [&](const auto& g) { finite = finite && g.allFinite(); });
    if (!finite) throw numeric_error("optimizer: non-finite gradient, step rejected");

    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    std::size_t idx = 0;
    auto grad_it = flat_views(grads);
    for_each_tensor(params, [&](auto& t) {
      Eigen::Map<VectorXd> p(t.data(), t.size());
      const auto& g = grad_it[idx];
      if (g.size() != m_[idx].size())
        throw config_error("optimizer: gradient shape does not match the parameters");
      m_[idx] = cfg_.beta1 * m_[idx] + (1.0 - cfg_.beta1) * g;
      v_[idx] = cfg_.beta2 * v_[idx] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      p.array() -= lr_ * (m_[idx].array() / bc1) /
                   ((v_[idx].array() / bc2).sqrt() + cfg_.eps);
      ++idx;
    });
  }

  // slow <- slow + alpha (fast - slow); fast <- slow.
  void lookahead_sync(BlstmStack& params) {
    std::size_t idx = 0;
    for_each_tensor(params, [&](auto& t) {
      Eigen::Map<VectorXd> p(t.data(), t.size());
      slow_[idx] += cfg_.lookahead_alpha * (p - slow_[idx]);
      p = slow_[idx];
      ++idx;
    });
  }

  void step(BlstmStack& params, const StackGrads& grads) {
    adam_step(params, grads);
    if (step_ % cfg_.lookahead_k == 0) lookahead_sync(params);
  }

  // Plateau schedule; call once per epoch with that module's validation
  // loss. Returns true when the learning rate was reduced.
  bool observe_validation(double val_loss) {
    if (val_loss < best_ - cfg_.plateau_threshold) {
      best_ = val_loss;
      patience_ = 0;
      return false;
    }
    if (++patience_ >= cfg_.plateau_patience) {
      lr_ /= cfg_.plateau_factor;
      patience_ = 0;
      return true;
    }
    return false;
  }

  double learning_rate() const { return lr_; }
  long step_count() const { return step_; }
  const OptimizerConfig& config() const { return cfg_; }

  // Flat state for checkpointing: [m..., v..., slow...] in tensor order.
  std::vector<double> export_state() const {
    std::vector<double> out;
    for (const auto* group : {&m_, &v_, &slow_})
      for (const auto& vec : *group)
        out.insert(out.end(), vec.data(), vec.data() + vec.size());
    out.push_back(static_cast<double>(step_));
    out.push_back(lr_);
    out.push_back(static_cast<double>(patience_));
    out.push_back(best_);
    return out;
  }

  void import_state(const std::vector<double>& flat) {
    std::size_t want = 4;
    for (const auto& vec : m_) want += 3 * vec.size();
    if (flat.size() != want) throw data_error("optimizer: checkpoint size mismatch");
    std::size_t pos = 0;
    for (auto* group : {&m_, &v_, &slow_})
      for (auto& vec : *group) {
        vec = Eigen::Map<const VectorXd>(flat.data() + pos, vec.size());
        pos += vec.size();
      }
    step_ = static_cast<long>(flat[pos++]);
    lr_ = flat[pos++];
    patience_ = static_cast<int>(flat[pos++]);
    best_ = flat[pos++];
  }

 private:
  static std::vector<Eigen::Map<const VectorXd>> flat_views(const StackGrads& grads) {
    std::vector<Eigen::Map<const VectorXd>> views;
    for_each_tensor(grads, [&](const auto& g) {
      views.emplace_back(g.data(), g.size());
    });
    return views;
  }

  OptimizerConfig cfg_;
  double lr_;
  long step_ = 0;
  std::vector<VectorXd> m_, v_, slow_;
  int patience_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

}  // namespace beatfuse
