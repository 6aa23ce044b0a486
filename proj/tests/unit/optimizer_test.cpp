#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "beatfuse/optimizer.hpp"

using namespace beatfuse;

namespace {

// A one-parameter "stack" for scalar optimizer checks.
BlstmStack scalar_stack(double value) {
  BlstmStack stack;
  LstmLayer layer;
  layer.input_dim = 1;
  layer.hidden_dim = 1;
  for (auto* dir : {&layer.fwd, &layer.bwd}) {
    dir->w_in = MatrixXd::Zero(4, 1);
    dir->w_rec = MatrixXd::Zero(4, 1);
    dir->bias = VectorXd::Zero(4);
  }
  stack.layers.push_back(layer);
  stack.head.weight = MatrixXd::Constant(1, 2, value);
  stack.head.bias = VectorXd::Zero(1);
  return stack;
}

StackGrads grads_like(const BlstmStack& stack, double head_grad) {
  StackGrads g = zero_grads(stack);
  g.head.weight.setConstant(head_grad);
  return g;
}

}  // namespace

TEST_CASE("zero gradient leaves parameters unchanged", "[optimizer]") {
  BlstmStack stack = scalar_stack(0.25);
  Optimizer opt(stack, {});
  opt.adam_step(stack, grads_like(stack, 0.0));
  CHECK(stack.head.weight(0, 0) == 0.25);
}

TEST_CASE("first adam step moves theta by -lr for unit gradient", "[optimizer]") {
  BlstmStack stack = scalar_stack(0.0);
  OptimizerConfig cfg;
  cfg.lr = 0.01;
  Optimizer opt(stack, cfg);
  opt.adam_step(stack, grads_like(stack, 1.0));
  // m-hat = 1, v-hat = 1 -> theta = -lr / (1 + eps)
  CHECK(stack.head.weight(0, 0) == Catch::Approx(-0.01).epsilon(1e-6));
}

TEST_CASE("constant gradient: update magnitude approaches lr", "[optimizer]") {
  BlstmStack stack = scalar_stack(0.0);
  OptimizerConfig cfg;
  cfg.lr = 0.01;
  cfg.lookahead_k = 1;
  cfg.lookahead_alpha = 1.0;  // plain Adam
  Optimizer opt(stack, cfg);
  double prev = 0.0;
  double delta = 0.0;
  for (int i = 0; i < 500; ++i) {
    opt.step(stack, grads_like(stack, 0.37));
    delta = prev - stack.head.weight(0, 0);
    prev = stack.head.weight(0, 0);
  }
  CHECK(delta == Catch::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("lookahead sync interpolates slow and fast weights", "[optimizer]") {
  // slow = 0, fast = 1, alpha = 0.5 -> slow = fast = 0.5
  BlstmStack stack = scalar_stack(0.0);
  OptimizerConfig cfg;
  cfg.lookahead_alpha = 0.5;
  Optimizer opt(stack, cfg);
  stack.head.weight.setConstant(1.0);  // fast moved externally
  opt.lookahead_sync(stack);
  CHECK(stack.head.weight(0, 0) == Catch::Approx(0.5));
  opt.lookahead_sync(stack);  // slow=0.5, fast=0.5 -> stays
  CHECK(stack.head.weight(0, 0) == Catch::Approx(0.5));
}

TEST_CASE("alpha = 0 resets fast weights to the original slow copy", "[optimizer]") {
  BlstmStack stack = scalar_stack(0.125);
  OptimizerConfig cfg;
  cfg.lookahead_alpha = 0.0;
  Optimizer opt(stack, cfg);
  stack.head.weight.setConstant(9.0);
  opt.lookahead_sync(stack);
  CHECK(stack.head.weight(0, 0) == 0.125);
}

TEST_CASE("k = 1, alpha = 1 matches plain adam bit for bit", "[optimizer]") {
  BlstmStack wrapped = scalar_stack(0.5);
  BlstmStack plain = scalar_stack(0.5);
  OptimizerConfig cfg;
  cfg.lookahead_k = 1;
  cfg.lookahead_alpha = 1.0;
  Optimizer opt_wrapped(wrapped, cfg);
  Optimizer opt_plain(plain, cfg);
  SeededRng rng(40);
  for (int i = 0; i < 50; ++i) {
    const double g = rng.uniform(-1.0, 1.0);
    opt_wrapped.step(wrapped, grads_like(wrapped, g));   // adam + sync every step
    opt_plain.adam_step(plain, grads_like(plain, g));    // adam only
    REQUIRE(wrapped.head.weight(0, 0) == plain.head.weight(0, 0));
  }
}

TEST_CASE("plateau schedule divides the learning rate by five", "[optimizer]") {
  BlstmStack stack = scalar_stack(0.0);
  OptimizerConfig cfg;
  cfg.lr = 1e-2;
  Optimizer opt(stack, cfg);

  // strictly improving: lr untouched
  for (int e = 0; e < 30; ++e) opt.observe_validation(1.0 - 0.01 * e);
  CHECK(opt.learning_rate() == 1e-2);

  // 20 consecutive non-improving epochs -> lr / 5
  for (int e = 0; e < 20; ++e) opt.observe_validation(5.0);
  CHECK(opt.learning_rate() == Catch::Approx(2e-3));

  // 20 more -> lr / 25
  for (int e = 0; e < 20; ++e) opt.observe_validation(5.0);
  CHECK(opt.learning_rate() == Catch::Approx(4e-4));
}

TEST_CASE("learning rate never increases", "[optimizer]") {
  BlstmStack stack = scalar_stack(0.0);
  Optimizer opt(stack, {});
  SeededRng rng(41);
  double prev = opt.learning_rate();
  for (int e = 0; e < 200; ++e) {
    opt.observe_validation(rng.uniform(0.0, 1.0));
    CHECK(opt.learning_rate() <= prev);
    prev = opt.learning_rate();
  }
}

TEST_CASE("non-finite gradients reject the step", "[optimizer]") {
  BlstmStack stack = scalar_stack(0.5);
  Optimizer opt(stack, {});
  StackGrads g = grads_like(stack, 1.0);
  g.head.weight(0, 0) = std::nan("");
  CHECK_THROWS_AS(opt.adam_step(stack, g), numeric_error);
  CHECK(stack.head.weight(0, 1) == 0.5);  // untouched
}

TEST_CASE("optimizer state export/import round trips", "[optimizer]") {
  BlstmStack a = scalar_stack(0.5);
  OptimizerConfig cfg;
  Optimizer opt_a(a, cfg);
  SeededRng rng(42);
  for (int i = 0; i < 7; ++i) opt_a.step(a, grads_like(a, rng.uniform(-1, 1)));
  opt_a.observe_validation(0.7);

  BlstmStack b = a;
  Optimizer opt_b(b, cfg);
  opt_b.import_state(opt_a.export_state());
  // identical future trajectories
  for (int i = 0; i < 7; ++i) {
    const double g = rng.uniform(-1, 1);
    opt_a.step(a, grads_like(a, g));
    opt_b.step(b, grads_like(b, g));
    REQUIRE(a.head.weight(0, 0) == b.head.weight(0, 0));
  }
}
