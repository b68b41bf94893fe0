#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <cstdio>
#include <filesystem>

#include "dggn/checkpoint.hpp"
#include "dggn/model.hpp"
#include "dggn/rng.hpp"
#include "dggn/synth.hpp"
#include "dggn/trainer.hpp"

using namespace dggn;
using Catch::Approx;

namespace {

std::vector<Tensor> prob_leaves(Tape& tape, const std::vector<double>& probs) {
  std::vector<Tensor> out;
  for (double p : probs) out.push_back(tape.sigmoid(make_scalar(std::log(p / (1.0 - p)), true)));
  return out;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("relation loss closed forms") {
  Tape tape;
  auto uniform = prob_leaves(tape, {0.5, 0.5, 0.5});
  std::vector<CandidateLabel> labels = {CandidateLabel::positive, CandidateLabel::negative, CandidateLabel::positive};
  const double gamma = 1.0;
  CHECK(relation_loss(tape, uniform, labels, gamma).value()[0] == Approx(std::log(2.0)).margin(1e-12));

  auto pair = prob_leaves(tape, {0.9, 0.2});
  std::vector<CandidateLabel> pl = {CandidateLabel::positive, CandidateLabel::negative};
  CHECK(relation_loss(tape, pair, pl, 1.0).value()[0] ==
        Approx(-(std::log(0.9) + std::log(0.8)) / 2.0).margin(1e-10));
  CHECK(relation_loss(tape, pair, pl, 0.5).value()[0] ==
        Approx(-0.5 * (std::log(0.9) + std::log(0.8)) / 2.0).margin(1e-10));

  // near-perfect prediction: loss below gamma * 1e-6 after clamping
  Tensor perfect = make_scalar(1.0);
  Tensor term = tape.binary_cross_entropy(perfect, 1.0);
  CHECK(term.value()[0] < 1e-6);

  std::vector<Tensor> empty;
  std::vector<CandidateLabel> no_labels;
  CHECK_THROWS_AS(relation_loss(tape, empty, no_labels, 1.0), std::invalid_argument);
}

TEST_CASE("adam single step matches the hand-evaluated formula") {
  TrainConfig config;
  config.lr0 = 0.1;
  std::vector<double> params = {1.0};
  std::vector<double> grads = {0.4};
  AdamState state;
  adam_step(params, grads, state, config, 1);
  // mhat = g, vhat = g^2 -> step = lr * g / (|g| + eps)
  const double expected = 1.0 - 0.1 * 0.4 / (std::sqrt(0.4 * 0.4) + config.adam_eps);
  CHECK(params[0] == Approx(expected).margin(1e-15));

  // zero gradients leave parameters unchanged
  std::vector<double> frozen = {2.5};
  std::vector<double> zero = {0.0};
  AdamState s2;
  adam_step(frozen, zero, s2, config, 1);
  CHECK(frozen[0] == 2.5);
}

TEST_CASE("learning rate schedule decays by steps of 1000") {
  TrainConfig config;
  CHECK(scheduled_lr(config, 1) == Approx(1e-4));
  CHECK(scheduled_lr(config, 999) == Approx(1e-4));
  CHECK(scheduled_lr(config, 1000) == Approx(9e-6).margin(1e-18));
  CHECK(scheduled_lr(config, 2000) == Approx(1e-4 * 0.09 * 0.09).margin(1e-20));
}

TEST_CASE("training overfits a single diagram") {
  SynthSpec spec;
  spec.seed = 5;
  spec.min_nodes = 4;
  spec.max_nodes = 4;
  auto dataset = generate(spec, 1);

  ModelConfig mc;
  mc.hidden_dim = 32;
  mc.seed = 1;
  TrainConfig tc;
  tc.seed = 1;
  tc.batch = 1;
  tc.iterations = 300;
  tc.lr0 = 3e-3;
  tc.decay_interval = 1000;
  tc.threads = 2;
  TrainResult result = train(dataset, mc, tc);
  REQUIRE(!result.curve.empty());
  CHECK(result.curve.back().loss < 0.1 * result.curve.front().loss);
}

TEST_CASE("fixed seed reproduces bit-identical loss curves across thread counts") {
  SynthSpec spec;
  spec.seed = 6;
  auto dataset = generate(spec, 4);
  ModelConfig mc;
  mc.hidden_dim = 8;
  mc.seed = 9;
  TrainConfig tc;
  tc.seed = 9;
  tc.batch = 4;
  tc.iterations = 12;
  tc.log_every = 1;

  tc.threads = 1;
  TrainResult a = train(dataset, mc, tc);
  tc.threads = 2;
  TrainResult b = train(dataset, mc, tc);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].loss == b.curve[i].loss);
  const auto pa = a.model.flat_parameters();
  const auto pb = b.model.flat_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  SynthSpec spec;
  spec.seed = 7;
  auto dataset = generate(spec, 2);
  ModelConfig mc;
  mc.hidden_dim = 8;
  mc.seed = 2;
  TrainConfig tc;
  tc.seed = 2;
  tc.lr0 = 0.0;
  tc.batch = 2;
  tc.iterations = 5;
  Model before = Model::init(mc);
  TrainResult result = train(dataset, mc, tc);
  const auto pa = before.flat_parameters();
  const auto pb = result.model.flat_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("checkpoint round-trip continues bit-identically") {
  SynthSpec spec;
  spec.seed = 8;
  auto dataset = generate(spec, 3);
  ModelConfig mc;
  mc.hidden_dim = 8;
  mc.seed = 3;
  TrainConfig tc;
  tc.seed = 3;
  tc.batch = 2;
  tc.iterations = 6;
  tc.log_every = 1;

  // uninterrupted run to 6
  TrainResult full = train(dataset, mc, tc);

  // stop at 4, checkpoint, reload, continue to 6
  TrainConfig tc4 = tc;
  tc4.iterations = 4;
  TrainResult half = train(dataset, mc, tc4);
  Checkpoint ckpt = make_checkpoint(half, tc4);
  const auto path = temp_file("dggn_test_roundtrip.ckpt");
  save_checkpoint(path, ckpt);
  Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.iteration == 4);
  CHECK(loaded.model_config.hidden_dim == 8);
  Model resumed = model_from_checkpoint(loaded);
  TrainResult cont = train_from(std::move(resumed), loaded.moments, loaded.iteration, dataset, tc);

  const auto pf = full.model.flat_parameters();
  const auto pc = cont.model.flat_parameters();
  REQUIRE(pf.size() == pc.size());
  for (std::size_t i = 0; i < pf.size(); ++i) CHECK(pf[i] == pc[i]);
  std::filesystem::remove(path);
}

TEST_CASE("a non-finite loss aborts with the last recorded state") {
  SynthSpec spec;
  spec.seed = 10;
  auto dataset = generate(spec, 2);
  ModelConfig mc;
  mc.hidden_dim = 8;
  mc.seed = 4;
  TrainConfig tc;
  tc.seed = 4;
  tc.batch = 1;
  tc.iterations = 50;
  Model model = Model::init(mc);
  // poison one update-gate row so the very first forward produces inf - inf
  auto w = model.gru.w_xz.value_mut();
  w[2] = std::numeric_limits<double>::infinity();
  w[3] = -std::numeric_limits<double>::infinity();
  const auto initial = model.flat_parameters();
  TrainResult result = train_from(std::move(model), AdamState{}, 0, dataset, tc);
  CHECK(result.diverged);
  CHECK(result.iterations_done == 0);
  const auto restored = result.model.flat_parameters();
  REQUIRE(restored.size() == initial.size());
  for (std::size_t i = 0; i < restored.size(); ++i)
    CHECK((restored[i] == initial[i] || (std::isinf(restored[i]) && std::isinf(initial[i]))));
}

TEST_CASE("loss on one diagram decreases between smoothed windows") {
  SynthSpec spec;
  spec.seed = 11;
  spec.min_nodes = 3;
  spec.max_nodes = 3;
  auto dataset = generate(spec, 1);
  ModelConfig mc;
  mc.hidden_dim = 16;
  mc.seed = 5;
  TrainConfig tc;
  tc.seed = 5;
  tc.batch = 1;
  tc.iterations = 150;
  tc.lr0 = 1e-3;
  tc.log_every = 1;
  TrainResult result = train(dataset, mc, tc);
  REQUIRE(result.curve.size() == 150);
  auto window_mean = [&](std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += result.curve[i].loss;
    return acc / static_cast<double>(hi - lo);
  };
  const double first = window_mean(0, 50);
  const double mid = window_mean(50, 100);
  const double last = window_mean(100, 150);
  CHECK(mid <= first);
  CHECK(last <= mid);
}
