// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stpgn/gradcheck_suite.hpp"
#include "stpgn/graph.hpp"
#include "stpgn/layers.hpp"
#include "stpgn/metrics.hpp"
#include "stpgn/model.hpp"
#include "stpgn/reba.hpp"
#include "stpgn/synth.hpp"
#include "stpgn/train.hpp"

using namespace stpgn;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return a.size() == 0 || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

Tensor random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Collects failed checks; the first few are kept for the report line.
struct Checks {
  std::size_t total = 0, failed = 0;
  std::string first;
  void operator()(bool ok, const std::string& what) {
    ++total;
    if (ok) return;
    if (failed++ == 0) first = what;
  }
  Outcome outcome(std::string detail) const {
    if (failed) detail += "; " + std::to_string(failed) + " of " + std::to_string(total) + " checks failed, first: " + first;
    return {failed == 0, detail};
  }
};

// ------------------------------------------------------------------ 1

Outcome gradient_integrity() {
  const Clock clock;
  const auto report = gradcheck::run_cases(gradcheck::default_cases());
  const double seconds = clock.seconds();
  double worst = 0.0;
  std::string worst_name;
  bool toy = false;
  for (const auto& c : report.components) {
    if (c.report.max_error >= worst) {
      worst = c.report.max_error;
      worst_name = c.name;
    }
    toy |= c.name == "model.toy_multi_loss";
  }
  Checks ok;
  ok(report.passed, "suite verdict");
  ok(worst < 1e-4, "max relative error " + fmt("%.3g", worst) + " in " + worst_name);
  ok(toy, "end-to-end toy present");
  ok(seconds < 60.0, "runtime " + fmt("%.1f", seconds) + " s");
  return ok.outcome(std::to_string(report.components.size()) + " components, max error " + fmt("%.3g", worst) +
                    " (" + worst_name + "), " + fmt("%.1f", seconds) + " s");
}

// ------------------------------------------------------------------ 2

graph::SkeletonTopology random_connected(std::mt19937_64& rng) {
  graph::SkeletonTopology t;
  t.joint_count = 2 + rng() % 20;
  for (std::size_t i = 1; i < t.joint_count; ++i) t.edges.push_back({rng() % i, i});
  for (std::size_t e = 0, extra = rng() % 5; e < extra; ++e) {
    const std::size_t a = rng() % t.joint_count, b = rng() % t.joint_count;
    bool dup = a == b;
    for (auto [x, y] : t.edges) dup |= (x == a && y == b) || (x == b && y == a);
    if (!dup) t.edges.push_back({a, b});
  }
  t.center_joint = rng() % t.joint_count;
  return t;
}

Outcome adjacency_oracle() {
  Checks ok;
  const Tensor a = Tensor::from_rows({{1, 1, 0}, {1, 1, 1}, {0, 1, 1}});
  // Degrees with self-loops are 2, 3, 2.
  const double s6 = 1.0 / std::sqrt(6.0);
  const Tensor want = Tensor::from_rows({{0.5, s6, 0}, {s6, 1.0 / 3.0, s6}, {0, s6, 0.5}});
  const double err = max_abs_diff(graph::normalize_adjacency(a), want);
  ok(err <= 1e-12, "3-node path error " + fmt("%.3g", err));

  std::mt19937_64 rng(2718);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = random_connected(rng);
    Tensor sum = graph::adjacency_matrix(t);
    for (std::size_t i = 0; i < t.joint_count; ++i) sum(i, i) += 1.0;
    ok(graph::spatial_partition(t).sum() == sum, "topology " + std::to_string(trial) + " partitions do not sum to A + I");
  }
  return ok.outcome("path error " + fmt("%.2g", err) + ", 100 random topologies");
}

// ------------------------------------------------------------------ 3

Outcome pooling_duality() {
  Checks ok;
  const auto h = graph::build_hierarchy(graph::default_skeleton(), graph::default_part_spec());
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  const std::size_t frames = 7, channels = 5;
  Tape tape;
  for (const Tensor* membership : {&h.joint_to_part, &h.part_to_global}) {
    const layers::GapLayer gap(*membership);
    const std::size_t groups = membership->rows(), nodes = membership->cols();
    std::vector<std::size_t> group_of(nodes);
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t n = 0; n < nodes; ++n)
        if ((*membership)(g, n) != 0.0) group_of[n] = g;
    for (int trial = 0; trial < 200; ++trial) {
      const Tensor coarse = [&] {
        Tensor c = Tensor::matrix(frames * groups, channels);
        for (auto& v : c.values()) v = u(rng);
        return c;
      }();
      Tensor fine = Tensor::matrix(frames * nodes, channels);
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t n = 0; n < nodes; ++n)
          for (std::size_t c = 0; c < channels; ++c) fine(t * nodes + n, c) = coarse(t * groups + group_of[n], c);
      const layers::Features pooled = layers::gap_forward(tape, {tape.constant(fine), nodes, frames}, gap);
      ok(bit_equal(pooled.data.value(), coarse), "GAP of a group-constant signal");
      const layers::Features up =
          layers::upsample_add(tape, {tape.constant(Tensor::matrix(frames * nodes, channels)), nodes, frames},
                               pooled, *membership);
      ok(bit_equal(up.data.value(), fine), "upsample after GAP");

      const double v = u(rng);
      const Tensor uniform = Tensor::matrix(frames * nodes, channels, v);
      const Tensor got = layers::gap_forward(tape, {tape.constant(uniform), nodes, frames}, gap).data.value();
      ok(got == Tensor::matrix(frames * groups, channels, v), "GAP of uniform features");
    }
  }
  return ok.outcome("joints->parts and parts->globals, 200 random signals each, bit-exact");
}

// ------------------------------------------------------------------ 4

Outcome baseline_equivalence() {
  Checks ok;
  ModelConfig c;
  c.levels = 1;
  c.edge_importance = true;
  c.gcn_channels = {16, 16, 16};
  c.hidden_size = 12;
  c.class_count = 4;
  c.seed = 5;
  const PgnModel model(c);
  for (const auto* m : model.gcn(0).importance)
    ok(m->value == Tensor::matrix(m->value.rows(), m->value.cols(), 1.0), "importance initialised to ones");

  // Plain GCN + LSTM + linear, assembled from library layers with the
  // model's weights and no importance masks.
  const auto h = graph::build_hierarchy(c.skeleton, c.parts);
  ParameterStore store;
  std::mt19937_64 scratch(0);
  layers::GcnLayer gcn = layers::make_gcn(store, "g", h.level1, 3, 16, false, scratch);
  layers::LstmCell lstm = layers::make_lstm(store, "l", 13 * 16, 12, scratch);
  layers::Linear lin = layers::make_linear(store, "c", 12, 4, scratch);
  auto copy = [&](const Parameter* dst, const Parameter* src) { const_cast<Parameter*>(dst)->value = src->value; };
  for (std::size_t a = 0; a < gcn.weights.size(); ++a) copy(gcn.weights[a], model.gcn(0).weights[a]);
  copy(lstm.input_weight, model.lstm(0).input_weight);
  copy(lstm.hidden_weight, model.lstm(0).hidden_weight);
  copy(lstm.bias, model.lstm(0).bias);
  copy(lin.weight, model.classifier(0).weight);
  copy(lin.bias, model.classifier(0).bias);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t frames = 10 + 7 * trial;
    Sample s;
    s.input = Tensor({3, 13, frames});
    for (auto& v : s.input.values()) v = n(rng);
    s.labels.assign(frames, 0);
    s.mask.assign(frames, 1.0);

    Tape tape;
    tape.set_grad_enabled(false);
    layers::Features x{tape.constant(layers::pack_channels_first(s.input, 3, 13, frames)), 13, frames};
    layers::Features f = layers::gcn_forward(tape, x, gcn);
    Var seq = ops::reshape(ops::relu(f.data), {frames, 13 * 16});
    const Tensor want = layers::linear_forward(tape, layers::lstm_forward(tape, seq, lstm), lin).value();
    const auto got = model.infer_logits(s);
    ok(got.size() == 1 && bit_equal(got[0], want), "logits differ for " + std::to_string(frames) + " frames");
  }
  return ok.outcome("5 random inputs, logits bit-identical");
}

// ------------------------------------------------------------------ 5

Outcome shape_contract() {
  Checks ok;
  const Clock clock;
  const PgnModel model(ModelConfig{});
  const std::size_t frames = 80;
  Sample s;
  s.input = Tensor({3, 13, frames});
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : s.input.values()) v = n(rng);
  s.labels.assign(frames, 0);
  s.mask.assign(frames, 1.0);
  Tape tape;
  tape.set_grad_enabled(false);
  const ForwardResult r = model.forward(tape, s);
  const double seconds = clock.seconds();

  const std::size_t channels[3] = {64, 128, 256}, nodes[3] = {13, 6, 3};
  ok(r.f.size() == 3 && r.z.size() == 3, "three levels");
  for (std::size_t k = 0; k < std::min<std::size_t>(3, r.f.size()); ++k) {
    const auto& f = r.f[k];
    const auto& z = r.z[k];
    const std::string lvl = "level " + std::to_string(k + 1);
    ok(f.channels() == channels[k] && f.nodes == nodes[k] && f.frames == frames &&
           f.data.rows() == frames * nodes[k],
       lvl + " f shape");
    ok(z.channels() == 256 && z.nodes == nodes[k] && z.frames == frames && z.data.rows() == frames * nodes[k],
       lvl + " z shape");
    ok(r.logits[k].rows() == frames && r.logits[k].cols() == 2, lvl + " logits shape");
  }
  ok(seconds < 1.0, "forward took " + fmt("%.3f", seconds) + " s");
  return ok.outcome("f: 64x13x80, 128x6x80, 256x3x80; z: 256 channels; " + fmt("%.3f", seconds) + " s");
}

// ------------------------------------------------------------------ 6

Dataset synth_data(const SynthConfig& sc) {
  std::vector<SkeletonSequence> seqs;
  std::vector<std::string> names;
  for (auto& s : synth_dataset(sc)) {
    names.push_back("s" + std::to_string(names.size()));
    seqs.push_back(std::move(s.sequence));
  }
  std::vector<std::string> classes;
  for (std::size_t c = 0; c < sc.classes; ++c) classes.push_back(synth_class_name(c));
  return make_dataset(seqs, names, classes);
}

Outcome overfit() {
  SynthConfig sc;
  sc.classes = 2;
  sc.sequences = 20;
  sc.noise = 0.05;
  sc.multi_action = false;
  const Dataset data = synth_data(sc);

  TrainConfig tc;
  tc.learning_rate = 0.05;
  tc.beta1 = 0.9;
  tc.beta2 = 0.999;
  tc.epochs = 50;
  tc.batch_size = 20;
  tc.validate_on_train = true;
  tc.folds = 1;
  tc.model.gcn_channels = {8, 16, 16};
  tc.model.hidden_size = 16;

  const Clock clock;
  double best = 0.0;
  std::size_t reached = 0;
  train_run(tc, data, [&](const EpochRecord& r, const PgnModel&) {
    best = std::max(best, r.accuracy);
    if (r.accuracy >= 95.0) {
      reached = r.epoch;
      return false;
    }
    return true;
  });
  const double seconds = clock.seconds();
  Checks ok;
  ok(reached > 0, "best accuracy " + fmt("%.2f", best) + "% after 50 epochs");
  ok(seconds < 600.0, "runtime " + fmt("%.0f", seconds) + " s");
  return ok.outcome(reached ? "95% frame accuracy at epoch " + std::to_string(reached) + " (" + fmt("%.2f", best) +
                                  "%), " + fmt("%.0f", seconds) + " s"
                            : "best " + fmt("%.2f", best) + "%");
}

// ------------------------------------------------------------------ 7

Outcome multi_loss_direction() {
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig sc;
    sc.classes = 4;
    sc.sequences = 20;
    sc.noise = 0.05;
    sc.multi_action = true;
    sc.seed = seed;
    const Dataset data = synth_data(sc);
    double edit[2];
    for (int ml = 0; ml < 2; ++ml) {
      TrainConfig tc;
      tc.learning_rate = 0.05;
      tc.epochs = 50;
      tc.batch_size = 20;
      tc.folds = 5;
      tc.cross_validation = true;
      tc.seed = seed;
      tc.model.gcn_channels = {8, 16, 16};
      tc.model.hidden_size = 16;
      tc.model.multi_loss = ml == 1;
      const TrainResult r = train_run(tc, data);
      // Mean held-out Edit over the five folds.
      edit[ml] = 0.0;
      for (const auto& f : r.folds) edit[ml] += f.best.edit / static_cast<double>(r.folds.size());
    }
    wins += edit[1] >= edit[0];
    detail += (seed > 1 ? ", " : "") + fmt("%.1f", edit[1]) + " vs " + fmt("%.1f", edit[0]);
  }
  return {wins >= 4, std::to_string(wins) + "/5 seeds with 5-fold mean Edit, multi-loss >= averaged (" + detail + ")"};
}

// ------------------------------------------------------------------ 8

std::vector<int> random_stream(std::mt19937_64& rng, std::size_t frames, int classes, std::size_t max_segments) {
  std::vector<int> out;
  const std::size_t segments = 1 + rng() % max_segments;
  int label = static_cast<int>(rng() % classes);
  for (std::size_t s = 0; s < segments && out.size() < frames; ++s) {
    const std::size_t len = 1 + rng() % (2 * frames / segments + 1);
    for (std::size_t i = 0; i < len && out.size() < frames; ++i) out.push_back(label);
    int next = label;
    while (next == label) next = static_cast<int>(rng() % classes);
    label = next;
  }
  while (out.size() < frames) out.push_back(out.back());
  return out;
}

// Wagner-Fischer table.
std::size_t levenshtein_oracle(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
  return d[a.size()][b.size()];
}

std::vector<int> labels_of(const metrics::SegmentSequence& s) {
  std::vector<int> out;
  for (const auto& x : s) out.push_back(x.label);
  return out;
}

// Largest one-to-one same-label matching with IoU >= tau, over every assignment.
std::size_t matching_oracle(const metrics::SegmentSequence& pred, const metrics::SegmentSequence& truth, double tau) {
  auto iou = [](const metrics::Segment& a, const metrics::Segment& b) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t t = std::min(a.start, b.start); t < std::max(a.end, b.end); ++t) {
      const bool ia = t >= a.start && t < a.end, ib = t >= b.start && t < b.end;
      inter += ia && ib;
      uni += ia || ib;
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
  };
  std::vector<bool> used(truth.size(), false);
  std::function<std::size_t(std::size_t)> go = [&](std::size_t i) -> std::size_t {
    if (i == pred.size()) return 0;
    std::size_t best = go(i + 1);
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (used[j] || truth[j].label != pred[i].label || iou(pred[i], truth[j]) < tau) continue;
      used[j] = true;
      best = std::max(best, 1 + go(i + 1));
      used[j] = false;
    }
    return best;
  };
  return go(0);
}

Outcome metric_oracles() {
  Checks ok;
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = metrics::segment(random_stream(rng, 40, 4, 10));
    const auto t = metrics::segment(random_stream(rng, 40, 4, 10));
    const std::size_t d = levenshtein_oracle(labels_of(p), labels_of(t));
    const double want = 100.0 * (1.0 - static_cast<double>(d) / static_cast<double>(std::max(p.size(), t.size())));
    ok(metrics::edit_score(p, t) == want, "edit instance " + std::to_string(trial));
  }
  std::size_t f1_instances = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    const auto p = metrics::segment(random_stream(rng, 30, 3, 5));
    const auto t = metrics::segment(random_stream(rng, 30, 3, 5));
    if (p.size() > 5 || t.size() > 5) continue;
    ++f1_instances;
    for (double tau : {0.1, 0.25, 0.5, 0.75}) {
      const std::size_t tp = matching_oracle(p, t, tau);
      const double precision = static_cast<double>(tp) / static_cast<double>(p.size());
      const double recall = static_cast<double>(tp) / static_cast<double>(t.size());
      const double want = tp ? 100.0 * 2.0 * precision * recall / (precision + recall) : 0.0;
      ok(metrics::overlap_matches(p, t, tau) == tp, "F1 match count, instance " + std::to_string(trial));
      ok(metrics::f1_overlap(p, t, tau) == want, "F1 value, instance " + std::to_string(trial));
    }
  }
  for (int trial = 0; trial < 200; ++trial) {
    const auto stream = random_stream(rng, 60, 5, 8);
    const auto s = metrics::segment(stream);
    Tensor onehot = Tensor::matrix(stream.size(), 5);
    for (std::size_t i = 0; i < stream.size(); ++i) onehot(i, static_cast<std::size_t>(stream[i])) = 1.0;
    ok(metrics::edit_score(s, s) == 100.0, "identical edit");
    ok(metrics::f1_overlap(s, s, 0.1) == 100.0 && metrics::f1_overlap(s, s, 0.9) == 100.0, "identical F1");
    ok(metrics::frame_map(onehot, stream) == 100.0, "identical mAP");
  }
  return ok.outcome("1000 edit instances, " + std::to_string(f1_instances) +
                    " F1 instances x 4 thresholds, 200 identical streams");
}

// ------------------------------------------------------------------ 9

// Worksheet tables as printed: table A rows are trunk 1-5, columns neck 1-3
// each spanning legs 1-4; table B rows are upper arm 1-6, columns lower arm
// 1-2 each spanning wrist 1-3.
constexpr int kSheetA[5][12] = {{1, 2, 3, 4, 1, 2, 3, 4, 3, 3, 5, 6},
                                {2, 3, 4, 5, 3, 4, 5, 6, 4, 5, 6, 7},
                                {2, 4, 5, 6, 4, 5, 6, 7, 5, 6, 7, 8},
                                {3, 5, 6, 7, 5, 6, 7, 8, 6, 7, 8, 9},
                                {4, 6, 7, 8, 6, 7, 8, 9, 7, 8, 9, 9}};
constexpr int kSheetB[6][6] = {{1, 2, 2, 1, 2, 3}, {1, 2, 3, 2, 3, 4}, {3, 4, 5, 4, 5, 5},
                               {4, 5, 5, 5, 6, 7}, {6, 7, 8, 7, 8, 8}, {7, 8, 8, 8, 9, 9}};
constexpr int kSheetC[12][12] = {{1, 1, 1, 2, 3, 3, 4, 5, 6, 7, 7, 7},
                                 {1, 2, 2, 3, 4, 4, 5, 6, 6, 7, 7, 8},
                                 {2, 3, 3, 3, 4, 5, 6, 7, 7, 8, 8, 8},
                                 {3, 4, 4, 4, 5, 6, 7, 8, 8, 9, 9, 9},
                                 {4, 4, 4, 5, 6, 7, 8, 8, 9, 9, 9, 9},
                                 {6, 6, 6, 7, 8, 8, 9, 9, 10, 10, 10, 10},
                                 {7, 7, 7, 8, 9, 9, 9, 10, 10, 11, 11, 11},
                                 {8, 8, 8, 9, 10, 10, 10, 10, 10, 11, 11, 11},
                                 {9, 9, 9, 10, 10, 10, 11, 11, 11, 12, 12, 12},
                                 {10, 10, 10, 11, 11, 11, 11, 12, 12, 12, 12, 12},
                                 {11, 11, 11, 11, 12, 12, 12, 12, 12, 12, 12, 12},
                                 {12, 12, 12, 12, 12, 12, 12, 12, 12, 12, 12, 12}};

int worksheet_score(const reba::Bands& b, double kg, bool shock, int coupling, int activity) {
  const int load = (kg < 5.0 ? 0 : kg <= 10.0 ? 1 : 2) + (shock ? 1 : 0);
  const int a = kSheetA[b.trunk - 1][4 * (b.neck - 1) + (b.legs - 1)] + load;
  const int bb = kSheetB[b.upper_arm - 1][3 * (b.lower_arm - 1) + (b.wrist - 1)] + coupling;
  return kSheetC[a - 1][bb - 1] + activity;
}

Outcome reba_totality() {
  Checks ok;
  const reba::Tables& t = reba::default_tables();
  int lo = 99, hi = 0;
  std::size_t combos = 0;
  const int maxes[6] = {5, 3, 4, 6, 2, 3};
  for (int tr = 1; tr <= 5; ++tr)
    for (int ne = 1; ne <= 3; ++ne)
      for (int le = 1; le <= 4; ++le)
        for (int ua = 1; ua <= 6; ++ua)
          for (int la = 1; la <= 2; ++la)
            for (int wr = 1; wr <= 3; ++wr)
              for (double kg : {0.0, 7.0, 12.0})
                for (bool shock : {false, true})
                  for (int cp = 0; cp < 4; ++cp)
                    for (int act = 0; act <= 3; ++act) {
                      reba::TaskFactors f;
                      f.load_kg = kg;
                      f.shock = shock;
                      f.coupling = static_cast<reba::Coupling>(cp);
                      f.static_hold = act >= 1;
                      f.repeated = act >= 2;
                      f.rapid_change = act >= 3;
                      reba::Bands b{tr, ne, le, ua, la, wr};
                      const int s = reba::score(t, b, f).final_score;
                      ++combos;
                      lo = std::min(lo, s);
                      hi = std::max(hi, s);
                      ok(s == worksheet_score(b, kg, shock, cp, act), "worksheet disagreement");
                      int* field[6] = {&b.trunk, &b.neck, &b.legs, &b.upper_arm, &b.lower_arm, &b.wrist};
                      for (int k = 0; k < 6; ++k) {
                        if (*field[k] == maxes[k]) continue;
                        ++*field[k];
                        ok(reba::score(t, b, f).final_score >= s, "band " + std::to_string(k) + " not monotone");
                        --*field[k];
                      }
                    }
  ok(lo >= 1 && hi <= 15, "range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  const int neutral = reba::score(t, reba::Bands{}, reba::TaskFactors{}).final_score;
  ok(neutral == 1 && worksheet_score(reba::Bands{}, 0.0, false, 0, 0) == 1, "neutral score " + std::to_string(neutral));
  return ok.outcome(std::to_string(combos) + " combinations, range [" + std::to_string(lo) + ", " +
                    std::to_string(hi) + "], neutral " + std::to_string(neutral));
}

// ------------------------------------------------------------------ 10

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Outcome fusion_contract() {
  Checks ok;
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    ParameterStore store;
    const auto gate = layers::make_fusion(store, "f", 6, 9, 5, rng);
    Tape tape;
    tape.set_grad_enabled(false);
    const auto out = layers::fusion_forward(tape, tape.constant(random_matrix(rng, 8, 6)),
                                            tape.constant(random_matrix(rng, 8, 9)), gate);
    for (double p : out.gate.value().values()) ok(p > 0.0 && p < 1.0, "gate outside (0, 1)");
  }

  Parameter ui{"ui", Tensor::identity(3)}, uz{"uz", Tensor::identity(3)};
  Parameter wi{"wi", Tensor::matrix(3, 3)}, ws{"ws", Tensor::matrix(3, 3)};
  const layers::FusionGate g{&ui, &uz, &wi, &ws};
  {
    Tape tape;
    const Tensor i = Tensor::from_rows({{2.5, 4, 0.75}, {1, 3, 7}}), s = Tensor::from_rows({{1, 0.5, 9}, {3, 0, 2}});
    const auto out = layers::fusion_forward(tape, tape.constant(i), tape.constant(s), g);
    Tensor mid = Tensor::matrix(2, 3);
    for (std::size_t k = 0; k < mid.size(); ++k) mid[k] = 0.5 * i[k] + 0.5 * s[k];
    ok(out.gate.value() == Tensor::matrix(2, 3, 0.5) && out.output.value() == mid, "midpoint blend");
  }

  // I = relu(i U_i), S = relu(z U_z), p = sigmoid(I W_i + S W_s), O = p I + (1 - p) S.
  ui.value = Tensor::from_rows({{1, 0, 0}, {0, 2, 0}, {0, 0, 1}});
  uz.value = Tensor::from_rows({{0.5, 0, 0}, {0, 1, 0}, {1, 0, 1}});
  wi.value = Tensor::from_rows({{0.1, 0, 0}, {0, -0.2, 0}, {0, 0, 0.3}});
  ws.value = Tensor::from_rows({{0.2, 0.1, 0}, {0, 0, 0}, {0, 0, -0.1}});
  // i = (1, 0.5, 2) -> I = (1, 1, 2); z = (2, -1, 1) -> z U_z = (2, -1, 1) -> S = (2, 0, 1).
  const double I[3] = {1.0, 1.0, 2.0}, S[3] = {2.0, 0.0, 1.0};
  const double logit[3] = {0.1 * 1.0 + 0.2 * 2.0, -0.2 * 1.0 + 0.1 * 2.0, 0.3 * 2.0 - 0.1 * 1.0};
  Tape tape;
  const auto out = layers::fusion_forward(tape, tape.constant(Tensor::from_rows({{1.0, 0.5, 2.0}})),
                                          tape.constant(Tensor::from_rows({{2.0, -1.0, 1.0}})), g);
  double err = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double p = sigmoid(logit[k]);
    err = std::max({err, std::abs(out.gate.value()[k] - p), std::abs(out.output.value()[k] - (p * I[k] + (1 - p) * S[k]))});
  }
  ok(err <= 1e-12, "hand example error " + fmt("%.3g", err));
  return ok.outcome("50 random gates in (0, 1), exact midpoint, hand example error " + fmt("%.2g", err));
}

// ------------------------------------------------------------------ 11

struct RunArtifacts {
  std::string log;
  std::vector<std::uint8_t> checkpoint;
  std::string report;
};

RunArtifacts train_and_evaluate() {
  SynthConfig sc;
  sc.classes = 3;
  sc.sequences = 8;
  sc.seed = 42;
  const Dataset data = synth_data(sc);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.folds = 4;
  tc.seed = 42;
  tc.model.gcn_channels = {8, 16, 16};
  tc.model.hidden_size = 16;
  const TrainResult r = train_run(tc, data);
  RunArtifacts a;
  a.log = format_log_header();
  for (const auto& rec : r.log) a.log += format_log_record(rec);
  a.checkpoint = r.best_checkpoint;
  const PgnModel model = load_checkpoint(r.best_checkpoint);
  std::vector<std::size_t> ids(data.sequences.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  const auto report = evaluate(model, data, ids, tc.window, tc.effective_eval_stride(), tc.iou_threshold);
  a.report = metrics::format_report(report, data.class_names);
  return a;
}

Outcome determinism() {
  const RunArtifacts a = train_and_evaluate(), b = train_and_evaluate();
  Checks ok;
  ok(a.log == b.log, "logs differ");
  ok(a.checkpoint == b.checkpoint, "checkpoints differ");
  ok(a.report == b.report, "reports differ");
  ok(!a.checkpoint.empty() && a.log.find('\n') != a.log.size() - 1, "runs produced artifacts");
  return ok.outcome("log " + std::to_string(a.log.size()) + " B, checkpoint " + std::to_string(a.checkpoint.size()) +
                    " B, report " + std::to_string(a.report.size()) + " B identical");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"adjacency normalization oracle", adjacency_oracle},
      {"pooling/upsampling duality", pooling_duality},
      {"baseline equivalence", baseline_equivalence},
      {"shape contract", shape_contract},
      {"overfit capability", overfit},
      {"multi-loss ablation direction", multi_loss_direction},
      {"metric oracles", metric_oracles},
      {"REBA totality and range", reba_totality},
      {"fusion gate contract", fusion_contract},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%s: %zu of %zu criteria passed\n", failed ? "FAIL" : "PASS", criteria.size() - failed, criteria.size());
  return failed ? 1 : 0;
}
