#include <doctest.h>

#include <cmath>
#include <set>

#include "stpgn/synth.hpp"
#include "stpgn/train.hpp"
#include "test_util.hpp"

using namespace stpgn;

namespace {

LabeledSequence ramp(std::size_t frames, std::size_t joints) {
  LabeledSequence s;
  s.name = "ramp";
  s.joints = Tensor::matrix(frames, 3 * joints);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < 3 * joints; ++k) s.joints(t, k) = static_cast<double>(t * 1000 + k);
    s.labels.push_back(static_cast<int>(t % 3));
  }
  return s;
}

Dataset tiny_dataset(std::size_t sequences, std::uint64_t seed) {
  SynthConfig sc;
  sc.classes = 2;
  sc.sequences = sequences;
  sc.frames = 24;
  sc.min_segment = 8;
  sc.max_segment = 16;
  sc.seed = seed;
  std::vector<SkeletonSequence> seqs;
  std::vector<std::string> names;
  for (auto& s : synth_dataset(sc)) {
    names.push_back("s" + std::to_string(names.size()));
    seqs.push_back(std::move(s.sequence));
  }
  return make_dataset(seqs, names);
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.window = 12;
  c.batch_size = 4;
  c.epochs = 2;
  c.folds = 2;
  c.learning_rate = 0.01;
  c.model.gcn_channels = {3, 4, 5};
  c.model.hidden_size = 4;
  return c;
}

}  // namespace

TEST_CASE("Adam: two steps traced by hand") {
  ParameterStore store;
  Parameter& p = store.add("p", Tensor::vector({1.0, -2.0}));
  AdamState state;
  const AdamOptions o{0.1, 0.9, 0.999, 1e-8, 0.0};
  const double g[2][2] = {{0.5, -4.0}, {-0.2, 1.0}};
  double w[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int step = 1; step <= 2; ++step) {
    Gradients grads;
    grads.slot(p) = Tensor::vector({g[step - 1][0], g[step - 1][1]});
    adam_step(store, grads, state, o);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[step - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * g[step - 1][i] * g[step - 1][i];
      const double mh = m[i] / (1 - std::pow(0.9, step)), vh = v[i] / (1 - std::pow(0.999, step));
      w[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p.value[i] == doctest::Approx(w[i]).epsilon(1e-14));
    }
  }
  // The first bias-corrected step moves each coordinate by lr against the sign of its gradient.
  CHECK(1.0 - 0.1 == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-7));
  CHECK(state.step == 2);
}

TEST_CASE("Adam: zero gradient leaves parameters, frozen parameters are skipped") {
  ParameterStore store;
  Parameter& p = store.add("p", Tensor::vector({0.3, 0.4}));
  Parameter& frozen = store.add("f", Tensor::vector({1.0}), false);
  AdamState state;
  Gradients grads;
  grads.slot(p) = Tensor::vector({0.0, 0.0});
  grads.slot(frozen) = Tensor::vector({5.0});
  adam_step(store, grads, state, {});
  CHECK(p.value == Tensor::vector({0.3, 0.4}));
  CHECK(frozen.value == Tensor::vector({1.0}));
}

TEST_CASE("Adam: non-finite gradients are rejected before any update") {
  ParameterStore store;
  Parameter& a = store.add("a", Tensor::vector({1.0}));
  Parameter& b = store.add("b", Tensor::vector({2.0}));
  AdamState state;
  Gradients grads;
  grads.slot(a) = Tensor::vector({0.5});
  grads.slot(b) = Tensor::vector({std::nan("")});
  try {
    adam_step(store, grads, state, {});
    FAIL("non-finite gradient accepted");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(a.value[0] == 1.0);
  CHECK(state.step == 0);
}

TEST_CASE("windowing") {
  SUBCASE("exact multiple") {
    const auto w = make_windows(ramp(160, 2), 0, 80, 80, 2);
    REQUIRE(w.size() == 2);
    CHECK(w[1].start == 80);
    CHECK(w[1].valid == 80);
  }
  SUBCASE("short tail is padded and masked") {
    const auto w = make_windows(ramp(100, 2), 3, 80, 80, 2);
    REQUIRE(w.size() == 2);
    CHECK(w[1].sequence == 3);
    CHECK(w[1].valid == 20);
    double masked = 0.0;
    for (double m : w[1].sample.mask) masked += 1.0 - m;
    CHECK(masked == 60.0);
    for (std::size_t t = 20; t < 80; ++t)
      for (std::size_t c = 0; c < 3; ++c) CHECK(w[1].sample.input[(c * 2 + 1) * 80 + t] == 0.0);
  }
  SUBCASE("overlapping windows tile the sequence") {
    const auto seq = ramp(160, 2);
    const auto w = make_windows(seq, 0, 80, 40, 2);
    REQUIRE(w.size() == 3);
    std::set<std::size_t> covered;
    for (const auto& win : w) {
      for (std::size_t t = 0; t < win.valid; ++t) {
        covered.insert(win.start + t);
        // joint 1, channel 2 is column 5 of the frames x 3N block
        CHECK(win.sample.input[(2 * 2 + 1) * 80 + t] == seq.joints(win.start + t, 5));
        CHECK(win.sample.labels[t] == seq.labels[win.start + t]);
      }
    }
    CHECK(covered.size() == 160);
  }
  SUBCASE("sequence shorter than a window") {
    const auto w = make_windows(ramp(5, 2), 0, 80, 40, 2);
    REQUIRE(w.size() == 1);
    CHECK(w[0].valid == 5);
  }
  CHECK_THROWS(make_windows(ramp(10, 2), 0, 0, 1, 2));
  CHECK_THROWS_AS(make_windows(ramp(10, 2), 0, 4, 4, 3), ShapeError);
}

TEST_CASE("k-fold split") {
  const auto folds = kfold_split(20, 5, 42);
  std::vector<int> count(5, 0);
  for (auto f : folds) ++count.at(f);
  CHECK(count == std::vector<int>(5, 4));
  CHECK(kfold_split(20, 5, 42) == folds);
  CHECK(kfold_split(20, 5, 43) != folds);
  const auto uneven = kfold_split(7, 3, 1);
  std::vector<int> c3(3, 0);
  for (auto f : uneven) ++c3.at(f);
  CHECK(*std::max_element(c3.begin(), c3.end()) - *std::min_element(c3.begin(), c3.end()) <= 1);
  CHECK_THROWS(kfold_split(3, 5, 1));
  CHECK_THROWS(kfold_split(3, 0, 1));
}

TEST_CASE("zero epochs return the initial checkpoint") {
  const Dataset data = tiny_dataset(4, 5);
  TrainConfig c = tiny_train();
  c.epochs = 0;
  const TrainResult r = train_run(c, data);
  CHECK(r.log.empty());
  PgnModel initial(model_config_for(c, data));
  // Statistics come from the training folds only.
  const auto fold = kfold_split(data.sequences.size(), c.folds, c.seed);
  std::vector<Window> windows;
  for (std::size_t id = 0; id < data.sequences.size(); ++id)
    if (fold[id] != 0)
      for (auto& w : make_windows(data.sequences[id], id, c.window, c.effective_train_stride(), data.joint_count))
      windows.push_back(std::move(w));
  std::vector<const Sample*> samples;
  for (const auto& w : windows) samples.push_back(&w.sample);
  initial.fit_input_norm(samples);
  CHECK(r.best_checkpoint == save_checkpoint(initial));
  CHECK(initial.parameters().get("input_norm").value(1, 0) != 1.0);
  REQUIRE(r.folds.size() == 1);
  CHECK(r.folds[0].best_epoch == 0);
}

TEST_CASE("log holds one record per epoch, fold and learning rate") {
  const Dataset data = tiny_dataset(4, 6);
  TrainConfig c = tiny_train();
  c.cross_validation = true;
  c.lr_grid = {0.01, 0.02};
  const TrainResult r = train_run(c, data);
  CHECK(r.log.size() == 2 * 2 * 2);
  CHECK(r.lr_scores.size() == 2);
  CHECK(r.folds.size() == 4);
  for (const auto& rec : r.log) {
    CHECK(std::isfinite(rec.loss));
    CHECK(rec.map >= 0.0);
    CHECK(rec.map <= 100.0);
  }
  CHECK(format_log_header() == "epoch,fold,lr,loss,mAP,edit,f1,accuracy\n");
  CHECK(format_log_record(r.log.front()).rfind("1,0,0.01,", 0) == 0);

  // Callback can stop a run early.
  std::size_t calls = 0;
  c.lr_grid.clear();
  c.cross_validation = false;
  c.epochs = 5;
  const TrainResult stopped = train_run(c, data, [&](const EpochRecord&, const PgnModel&) { return ++calls < 2; });
  CHECK(stopped.log.size() == 2);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Dataset data = tiny_dataset(4, 7);
  const TrainConfig c = tiny_train();
  const TrainResult a = train_run(c, data), b = train_run(c, data);
  CHECK(a.best_checkpoint == b.best_checkpoint);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);
}

TEST_CASE("padded frames contribute exactly zero gradient") {
  ModelConfig mc;
  mc.gcn_channels = {3, 4, 5};
  mc.hidden_size = 4;
  mc.class_count = 3;
  const PgnModel model(mc);
  auto windows = make_windows(ramp(14, 13), 0, 10, 10, 13);
  REQUIRE(windows.size() == 2);
  Sample s = windows[1].sample;
  for (auto& v : s.input.values()) v *= 1e-4;
  Gradients g1;
  model.batch_gradients({&s}, g1);
  Sample changed = s;
  for (std::size_t t = windows[1].valid; t < 10; ++t) {
    changed.labels[t] = 2;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t n = 0; n < 13; ++n) changed.input[(c * 13 + n) * 10 + t] = 0.37 * static_cast<double>(n + c);
  }
  Gradients g2;
  model.batch_gradients({&changed}, g2);
  for (const auto& [p, g] : g1) CHECK(testutil::bit_equal(g, g2.at(*p)));
}

TEST_CASE("training config parsing") {
  const TrainConfig c = TrainConfig::parse(
      "window = 40\nbatch_size = 8\nlr_grid = 0.01,0.05\nepochs = 3\nlevels = 2\ngcn_channels = 8,16,32\n"
      "hidden_size = 16\nmulti_loss = false\nvalidate_on_train = true\nfolds = 1\n");
  CHECK(c.window == 40);
  CHECK(c.learning_rates() == std::vector<double>{0.01, 0.05});
  CHECK(c.model.levels == 2);
  CHECK(c.model.gcn_channels[1] == 16);
  CHECK_FALSE(c.model.multi_loss);
  CHECK(c.effective_train_stride() == 20);
  CHECK(c.effective_eval_stride() == 40);
  CHECK(TrainConfig::parse(c.serialize()).serialize() == c.serialize());
  CHECK_THROWS(TrainConfig::parse("unknown_key = 1\n"));
  CHECK_THROWS_AS(TrainConfig::parse("learning_rate = -1\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("folds = 1\n"), ConfigError);
}
