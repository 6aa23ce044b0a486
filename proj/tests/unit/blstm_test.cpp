#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "beatfuse/blstm.hpp"
#include "support/oracles.hpp"

using namespace beatfuse;

namespace {

MatrixXd random_sequence(int dims, int frames, std::uint64_t seed, double lo = -1.0,
                         double hi = 1.0) {
  SeededRng rng(seed);
  MatrixXd seq(dims, frames);
  for (int r = 0; r < dims; ++r)
    for (int t = 0; t < frames; ++t) seq(r, t) = rng.uniform(lo, hi);
  return seq;
}

FrameLabels random_labels(int frames, std::uint64_t seed) {
  SeededRng rng(seed);
  FrameLabels labels;
  labels.classes.resize(frames);
  for (int t = 0; t < frames; ++t) labels.classes[t] = static_cast<int>(rng.index(3));
  return labels;
}

}  // namespace

TEST_CASE("cell with zero parameters: f = 0.5 so c' = c/2", "[blstm]") {
  const int H = 4;
  LstmDirection p;
  p.w_in = MatrixXd::Zero(4 * H, 3);
  p.w_rec = MatrixXd::Zero(4 * H, H);
  p.bias = VectorXd::Zero(4 * H);

  const VectorXd x = VectorXd::Constant(3, 0.7);
  const VectorXd h = VectorXd::Constant(H, 0.3);
  VectorXd c(H);
  c << -1.0, 0.0, 0.5, 2.0;
  const CellState out = lstm_cell_forward(x, h, c, p);
  for (int j = 0; j < H; ++j) {
    CHECK(out.c(j) == Catch::Approx(0.5 * c(j)).margin(1e-12));
    CHECK(out.h(j) == Catch::Approx(0.5 * std::tanh(0.5 * c(j))).margin(1e-12));
  }

  const CellState zero = lstm_cell_forward(VectorXd::Zero(3), VectorXd::Zero(H),
                                           VectorXd::Zero(H), p);
  CHECK(zero.h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cell matches an independent scalar recomputation", "[blstm]") {
  SeededRng rng(21);
  const int D = 3, H = 2;
  LstmDirection p;
  p.w_in.resize(4 * H, D);
  p.w_rec.resize(4 * H, H);
  p.bias.resize(4 * H);
  for (Eigen::Index i = 0; i < p.w_in.size(); ++i) p.w_in.data()[i] = rng.uniform(-0.5, 0.5);
  for (Eigen::Index i = 0; i < p.w_rec.size(); ++i) p.w_rec.data()[i] = rng.uniform(-0.5, 0.5);
  for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias.data()[i] = rng.uniform(-0.5, 0.5);
  VectorXd x(D), h(H), c(H);
  for (int i = 0; i < D; ++i) x(i) = rng.uniform(-1, 1);
  for (int i = 0; i < H; ++i) h(i) = rng.uniform(-1, 1);
  for (int i = 0; i < H; ++i) c(i) = rng.uniform(-1, 1);

  const CellState out = lstm_cell_forward(x, h, c, p);
  for (int j = 0; j < H; ++j) {
    auto z = [&](int gate) {
      double v = p.bias(gate * H + j);
      for (int i = 0; i < D; ++i) v += p.w_in(gate * H + j, i) * x(i);
      for (int i = 0; i < H; ++i) v += p.w_rec(gate * H + j, i) * h(i);
      return v;
    };
    const double gi = 1.0 / (1.0 + std::exp(-z(0)));
    const double gf = 1.0 / (1.0 + std::exp(-z(1)));
    const double gg = std::tanh(z(2));
    const double go = 1.0 / (1.0 + std::exp(-z(3)));
    const double cj = gf * c(j) + gi * gg;
    CHECK(out.c(j) == Catch::Approx(cj).margin(1e-12));
    CHECK(out.h(j) == Catch::Approx(go * std::tanh(cj)).margin(1e-12));
  }
}

TEST_CASE("cell rejects non-finite input", "[blstm]") {
  LstmDirection p;
  p.w_in = MatrixXd::Zero(4, 1);
  p.w_rec = MatrixXd::Zero(4, 1);
  p.bias = VectorXd::Zero(4);
  VectorXd bad(1);
  bad << std::nan("");
  CHECK_THROWS_AS(lstm_cell_forward(bad, VectorXd::Zero(1), VectorXd::Zero(1), p),
                  numeric_error);
}

TEST_CASE("softmax head: every output column sums to one", "[blstm]") {
  const auto stack = make_blstm_stack(5, {4, 4}, 3, OutputKind::softmax3, 7);
  const MatrixXd seq = random_sequence(5, 17, 8);
  const BlstmResult res = blstm_forward(seq, stack);
  for (int t = 0; t < 17; ++t) {
    CHECK(res.output.col(t).sum() == Catch::Approx(1.0).margin(1e-9));
    CHECK(res.output.col(t).minCoeff() >= 0.0);
  }
  CHECK(res.last_hidden.rows() == 8);
}

TEST_CASE("T = 1 bidirectional output equals one forward and one backward cell step",
          "[blstm]") {
  const auto stack = make_blstm_stack(4, {3}, 3, OutputKind::softmax3, 11);
  const MatrixXd seq = random_sequence(4, 1, 12);
  StackTrace trace;
  blstm_forward(seq, stack, &trace);

  const auto& layer = stack.layers[0];
  const CellState f = lstm_cell_forward(seq.col(0), VectorXd::Zero(3), VectorXd::Zero(3),
                                        layer.fwd);
  const CellState b = lstm_cell_forward(seq.col(0), VectorXd::Zero(3), VectorXd::Zero(3),
                                        layer.bwd);
  for (int j = 0; j < 3; ++j) {
    CHECK(trace.last_hidden(j, 0) == Catch::Approx(f.h(j)).margin(1e-12));
    CHECK(trace.last_hidden(3 + j, 0) == Catch::Approx(b.h(j)).margin(1e-12));
  }
}

TEST_CASE("reversing the input swaps forward/backward state trajectories", "[blstm]") {
  auto stack = make_blstm_stack(4, {3}, 3, OutputKind::softmax3, 31);
  // make both directions share parameters so the swap is exact
  stack.layers[0].bwd = stack.layers[0].fwd;
  const int T = 9;
  const MatrixXd seq = random_sequence(4, T, 32);
  const MatrixXd rev = seq.rowwise().reverse();

  StackTrace tr_fwd, tr_rev;
  blstm_forward(seq, stack, &tr_fwd);
  blstm_forward(rev, stack, &tr_rev);
  // forward trajectory of the reversed input = reversed backward trajectory
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < 3; ++j)
      CHECK(tr_rev.layers[0].fwd.hidden(j, t) ==
            Catch::Approx(tr_fwd.layers[0].bwd.hidden(j, T - 1 - t)).margin(1e-12));
}

TEST_CASE("weighted cross entropy worked examples", "[blstm]") {
  // perfect one-hot predictions
  MatrixXd probs(3, 2);
  probs << 1, 0, 0, 1, 0, 0;
  FrameLabels labels;
  labels.classes = {kBeat, kDownbeat};
  CHECK(weighted_ce_from_probs(probs, labels) == Catch::Approx(0.0).margin(1e-9));

  // single frame, label beat, column (0.2, 0.3, 0.5) -> 67 * (-ln 0.2)
  MatrixXd one(3, 1);
  one << 0.2, 0.3, 0.5;
  labels.classes = {kBeat};
  CHECK(weighted_ce_from_probs(one, labels) ==
        Catch::Approx(67.0 * -std::log(0.2)).epsilon(1e-9));
  CHECK(weighted_ce_from_probs(one, labels) == Catch::Approx(107.83).margin(0.01));

  // uniform predictions, all non-beat -> ln 3
  MatrixXd uniform = MatrixXd::Constant(3, 6, 1.0 / 3.0);
  labels.classes.assign(6, kNonBeat);
  CHECK(weighted_ce_from_probs(uniform, labels) == Catch::Approx(std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("analytic gradients match central finite differences", "[blstm][grad]") {
  for (int trial = 0; trial < 6; ++trial) {
    SeededRng rng(600 + trial);
    const int D = 3 + static_cast<int>(rng.index(3));
    const int H = 2 + static_cast<int>(rng.index(3));
    const int T = 2 + static_cast<int>(rng.index(5));
    const int layers = 1 + static_cast<int>(rng.index(2));
    auto stack = make_blstm_stack(D, std::vector<int>(layers, H), 3, OutputKind::softmax3,
                                  rng.next_u64());
    const MatrixXd seq = random_sequence(D, T, rng.next_u64());
    const FrameLabels labels = random_labels(T, rng.next_u64());

    StackTrace trace;
    const BlstmResult res = blstm_forward(seq, stack, &trace);
    const StackGrads grads =
        blstm_backward(stack, trace, weighted_ce_preact_grad(res.output, labels));
    const auto check = oracles::finite_difference_check(stack, grads, [&]() {
      return weighted_ce_from_probs(blstm_forward(seq, stack).output, labels);
    });
    INFO("trial " << trial << ", " << check.params_checked << " parameters");
    CHECK(check.worst_rel_err < 1e-4);
  }
}

TEST_CASE("doubling all class weights doubles every gradient exactly", "[blstm]") {
  auto stack = make_blstm_stack(4, {3}, 3, OutputKind::softmax3, 77);
  const MatrixXd seq = random_sequence(4, 7, 78);
  const FrameLabels labels = random_labels(7, 79);
  StackTrace trace;
  const BlstmResult res = blstm_forward(seq, stack, &trace);
  const LossWeights w1{67, 200, 1};
  const LossWeights w2{134, 400, 2};
  const StackGrads g1 = blstm_backward(stack, trace, weighted_ce_preact_grad(res.output, labels, w1));
  const StackGrads g2 = blstm_backward(stack, trace, weighted_ce_preact_grad(res.output, labels, w2));
  CHECK(g2.head.weight == (2.0 * g1.head.weight));
  CHECK(g2.layers[0].fwd.w_in == (2.0 * g1.layers[0].fwd.w_in));
}

TEST_CASE("perfect predictions give (near) zero gradients", "[blstm]") {
  // drive the head bias so the labeled class saturates
  auto stack = make_blstm_stack(2, {2}, 3, OutputKind::softmax3, 13);
  for_each_tensor(stack, [](auto& t) { t.setZero(); });
  stack.head.bias << 60.0, 0.0, 0.0;  // class beat ~ certain
  const MatrixXd seq = random_sequence(2, 4, 14);
  FrameLabels labels;
  labels.classes.assign(4, kBeat);
  StackTrace trace;
  const BlstmResult res = blstm_forward(seq, stack, &trace);
  CHECK(weighted_ce_from_probs(res.output, labels) < 1e-9);
  const StackGrads g = blstm_backward(stack, trace, weighted_ce_preact_grad(res.output, labels));
  double norm = 0.0;
  for_each_tensor(g, [&](const auto& t) { norm = std::max(norm, t.cwiseAbs().maxCoeff()); });
  CHECK(norm < 1e-9);
}

TEST_CASE("stack validation catches dimension mismatches", "[blstm]") {
  auto stack = make_blstm_stack(4, {3, 3}, 3, OutputKind::softmax3, 5);
  CHECK_THROWS_AS(blstm_forward(MatrixXd::Zero(5, 4), stack), config_error);
  stack.layers[1].input_dim = 7;
  CHECK_THROWS_AS(validate_stack(stack), config_error);
}

TEST_CASE("activation matrix validation", "[blstm]") {
  ActivationMatrix act;
  act.frame_rate = 100.0;
  act.data = MatrixXd::Constant(3, 5, 1.0 / 3.0);
  CHECK_NOTHROW(validate_activation(act));
  act.data(0, 2) = 0.9;
  CHECK_THROWS_AS(validate_activation(act), data_error);
}
