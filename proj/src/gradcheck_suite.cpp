#include "stpgn/gradcheck_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <memory>
#include <random>
#include <sstream>

#include "stpgn/layers.hpp"
#include "stpgn/model.hpp"
#include "stpgn/params.hpp"

namespace stpgn::gradcheck {

namespace {

Tensor random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Entries bounded away from zero with random sign, so relu-like kinks are
// never straddled by a finite-difference step.
Tensor away_from_zero(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> mag(0.2, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

// Reduces any output to a scalar through a fixed random weighting, drawn the
// first time a shape is seen.
class Probe {
 public:
  explicit Probe(std::uint64_t seed) : rng_(seed) {}
  Var operator()(Tape& tape, Var v) {
    if (weights_.shape() != v.shape()) {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      weights_ = Tensor(v.shape());
      for (auto& w : weights_.values()) w = u(rng_);
    }
    return ops::sum(ops::mul(v, tape.constant(weights_)));
  }

 private:
  std::mt19937_64 rng_;
  Tensor weights_;
};

struct Fixture {
  explicit Fixture(std::uint64_t seed) : rng(seed), probe(seed ^ 0x9e3779b97f4a7c15ULL) {}
  Parameter& param(const std::string& name, Tensor value) { return store.add(name, std::move(value)); }
  FdReport check(const LossBuilder& build) {
    auto params = store.all();
    return finite_difference_check(build, params, options);
  }
  std::mt19937_64 rng;
  FdOptions options;
  Probe probe;
  ParameterStore store;
};

using Body = std::function<FdReport(Fixture&)>;

Case make_case(std::string name, double tolerance, std::uint64_t seed, Body body, double floor = 1e-8) {
  Case c;
  c.name = std::move(name);
  c.tolerance = tolerance;
  c.floor = floor;
  c.run = [seed, floor, body = std::move(body)] {
    Fixture fx(seed);
    fx.options.floor = floor;
    return body(fx);
  };
  return c;
}

void primitive(std::vector<Case>& out, std::string name, std::uint64_t seed, Body body) {
  out.push_back(make_case(std::move(name), kPrimitiveTolerance, seed, std::move(body)));
}

void layer(std::vector<Case>& out, std::string name, std::uint64_t seed, Body body) {
  out.push_back(make_case(std::move(name), kLayerTolerance, seed, std::move(body), kLayerFloor));
}

graph::SkeletonTopology toy_skeleton(std::size_t joints) {
  graph::SkeletonTopology s;
  s.joint_count = joints;
  for (std::size_t j = 0; j + 1 < joints; ++j) s.edges.emplace_back(j, j + 1);
  s.center_joint = joints / 2;
  for (std::size_t j = 0; j < joints; ++j) s.joint_names.push_back("j" + std::to_string(j));
  return s;
}

graph::PartSpec toy_parts(const std::vector<std::size_t>& joint_part, const std::vector<std::size_t>& part_global) {
  graph::PartSpec p;
  for (std::size_t g : joint_part) p.joint_part.push_back("p" + std::to_string(g));
  for (std::size_t i = 0; i < part_global.size(); ++i) {
    p.part_names.push_back("p" + std::to_string(i));
    p.part_global.push_back("g" + std::to_string(part_global[i]));
    if (std::find(p.global_names.begin(), p.global_names.end(), p.part_global.back()) == p.global_names.end())
      p.global_names.push_back(p.part_global.back());
  }
  return p;
}

struct ToyOptions {
  std::size_t joints = 5;
  std::vector<std::size_t> joint_part{0, 0, 1, 1, 1};
  std::vector<std::size_t> part_global{0, 0};
  std::size_t levels = 2;
  bool multi_loss = true;
  bool fusion = false;
};

FdReport toy_check(Fixture& fx, const ToyOptions& o) {
  const std::size_t frames = 4, classes = 3;
  ModelConfig cfg;
  cfg.input_channels = 3;
  cfg.gcn_channels = {4, 5, 6};
  cfg.hidden_size = 4;
  cfg.class_count = classes;
  cfg.levels = o.levels;
  cfg.edge_importance = true;
  cfg.multi_loss = o.multi_loss;
  cfg.fusion = o.fusion;
  cfg.image_feature_dim = o.fusion ? 3 : 0;
  cfg.fusion_dim = 4;
  cfg.seed = fx.rng();
  cfg.skeleton = toy_skeleton(o.joints);
  cfg.parts = toy_parts(o.joint_part, o.part_global);
  PgnModel model(cfg);
  std::uniform_real_distribution<double> around_one(0.5, 1.5);
  for (Parameter* p : model.parameters().all())
    if (p->name.find(".importance") != std::string::npos)
      for (auto& v : p->value.values()) v = around_one(fx.rng);

  Sample sample;
  sample.input = random_tensor(fx.rng, 1, 3 * o.joints * frames).reshaped({3, o.joints, frames});
  sample.labels = {0, 2, 1, 2};
  sample.mask = {1.0, 1.0, 1.0, 0.0};
  if (o.fusion) sample.image = random_tensor(fx.rng, frames, 3);
  const LossMode mode = model.loss_mode();
  std::vector<Parameter*> params;
  for (Parameter* p : model.parameters().all())
    if (p->trainable) params.push_back(p);
  return finite_difference_check(
      [&](Tape& tape) {
        ForwardResult out = model.forward(tape, sample);
        return model.loss(tape, out, sample, mode);
      },
      params, fx.options);
}

}  // namespace

std::vector<Case> default_cases(std::uint64_t seed) {
  std::vector<Case> out;
  std::uint64_t s = seed;

  // ---------------------------------------------------------------- primitives
  primitive(out, "op.matmul", ++s, [](Fixture& fx) {
    auto& a = fx.param("a", random_tensor(fx.rng, 3, 4));
    auto& b = fx.param("b", random_tensor(fx.rng, 4, 2));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::matmul(t.parameter(a), t.parameter(b))); });
  });
  primitive(out, "op.add", ++s, [](Fixture& fx) {
    auto& a = fx.param("a", random_tensor(fx.rng, 3, 4));
    auto& b = fx.param("b", random_tensor(fx.rng, 3, 4));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::add(t.parameter(a), t.parameter(b))); });
  });
  primitive(out, "op.sub", ++s, [](Fixture& fx) {
    auto& a = fx.param("a", random_tensor(fx.rng, 3, 4));
    auto& b = fx.param("b", random_tensor(fx.rng, 3, 4));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::sub(t.parameter(a), t.parameter(b))); });
  });
  primitive(out, "op.mul", ++s, [](Fixture& fx) {
    auto& a = fx.param("a", random_tensor(fx.rng, 3, 4));
    auto& b = fx.param("b", random_tensor(fx.rng, 3, 4));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::mul(t.parameter(a), t.parameter(b))); });
  });
  primitive(out, "op.scale", ++s, [](Fixture& fx) {
    auto& a = fx.param("a", random_tensor(fx.rng, 3, 4));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::scale(t.parameter(a), -1.7)); });
  });
  primitive(out, "op.add_row", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 3, 4));
    auto& r = fx.param("row", random_tensor(fx.rng, 1, 4));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::add_row(t.parameter(x), t.parameter(r))); });
  });
  primitive(out, "op.relu", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", away_from_zero(fx.rng, 3, 4));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::relu(t.parameter(x))); });
  });
  primitive(out, "op.sigmoid", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 3, 4, -2.0, 2.0));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::sigmoid(t.parameter(x))); });
  });
  primitive(out, "op.tanh", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 3, 4, -2.0, 2.0));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::tanh(t.parameter(x))); });
  });
  primitive(out, "op.concat_rows", ++s, [](Fixture& fx) {
    auto& a = fx.param("a", random_tensor(fx.rng, 2, 3));
    auto& b = fx.param("b", random_tensor(fx.rng, 3, 3));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::concat({t.parameter(a), t.parameter(b)}, 0)); });
  });
  primitive(out, "op.concat_cols", ++s, [](Fixture& fx) {
    auto& a = fx.param("a", random_tensor(fx.rng, 3, 2));
    auto& b = fx.param("b", random_tensor(fx.rng, 3, 4));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::concat({t.parameter(a), t.parameter(b)}, 1)); });
  });
  primitive(out, "op.slice_rows", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 5, 3));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::slice(t.parameter(x), 0, 1, 4)); });
  });
  primitive(out, "op.slice_cols", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 3, 5));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::slice(t.parameter(x), 1, 2, 5)); });
  });
  primitive(out, "op.mean_rows", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 4, 3));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::mean_over_axis(t.parameter(x), 0)); });
  });
  primitive(out, "op.mean_cols", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 4, 3));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::mean_over_axis(t.parameter(x), 1)); });
  });
  primitive(out, "op.broadcast_row", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 1, 4));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::broadcast(t.parameter(x), 3, 4)); });
  });
  primitive(out, "op.broadcast_col", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 3, 1));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::broadcast(t.parameter(x), 3, 4)); });
  });
  primitive(out, "op.sum", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 3, 4));
    return fx.check([&](Tape& t) {
      Var v = t.parameter(x);
      return ops::sum(ops::mul(v, v));
    });
  });
  primitive(out, "op.reshape", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 3, 4));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::reshape(t.parameter(x), {2, 6})); });
  });
  primitive(out, "op.node_mix", ++s, [](Fixture& fx) {
    auto& m = fx.param("mix", random_tensor(fx.rng, 3, 4));
    auto& x = fx.param("x", random_tensor(fx.rng, 2 * 4, 3));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::node_mix(t.parameter(m), t.parameter(x), 2)); });
  });
  primitive(out, "op.group_mean", seed + 1000, [](Fixture& fx) {
    const Tensor membership = Tensor::from_rows({{1, 0, 1, 1, 0}, {0, 1, 0, 0, 0}, {0, 0, 0, 0, 1}});
    auto& x = fx.param("x", random_tensor(fx.rng, 2 * 5, 3));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::group_mean(t.parameter(x), membership, 2)); });
  });
  primitive(out, "op.normalize_adjacency", ++s, [](Fixture& fx) {
    auto& a = fx.param("a", random_tensor(fx.rng, 4, 4, 0.2, 1.5));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::normalize_adjacency(t.parameter(a))); });
  });
  primitive(out, "op.softmax_rows", ++s, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 4, 3, -2.0, 2.0));
    return fx.check([&](Tape& t) { return fx.probe(t, ops::softmax_rows(t.parameter(x))); });
  });
  primitive(out, "op.softmax_cross_entropy", ++s, [](Fixture& fx) {
    auto& x = fx.param("logits", random_tensor(fx.rng, 4, 3, -2.0, 2.0));
    return fx.check([&](Tape& t) {
      return ops::softmax_cross_entropy(t.parameter(x), {2, 0, 1, 1}, {0.4, 0.1, 0.3, 0.2});
    });
  });
  primitive(out, "op.nll_from_probs", ++s, [](Fixture& fx) {
    auto& p = fx.param("probs", random_tensor(fx.rng, 4, 3, 0.2, 1.0));
    return fx.check([&](Tape& t) { return ops::nll_from_probs(t.parameter(p), {1, 2, 0, 1}, {0.25, 0.25, 0.3, 0.2}); });
  });

  // ---------------------------------------------------------------- layers
  for (bool importance : {true, false}) {
    layer(out, importance ? "layer.gcn_importance" : "layer.gcn", ++s, [importance](Fixture& fx) {
      const auto adjacency = graph::spatial_partition(toy_skeleton(5));
      layers::GcnLayer gcn = layers::make_gcn(fx.store, "gcn", adjacency, 3, 4, importance, fx.rng);
      std::uniform_real_distribution<double> around_one(0.5, 1.5);
      for (Parameter* p : fx.store.all())
        if (p->name.find(".importance") != std::string::npos)
          for (auto& v : p->value.values()) v = around_one(fx.rng);
      auto& x = fx.param("x", random_tensor(fx.rng, 3 * 5, 3));
      return fx.check([&](Tape& t) {
        layers::Features f = layers::gcn_forward(t, {t.parameter(x), 5, 3}, gcn);
        return fx.probe(t, f.data);
      });
    });
  }
  layer(out, "layer.gap", ++s, [](Fixture& fx) {
    layers::GapLayer gap(Tensor::from_rows({{1, 1, 0, 0, 0}, {0, 0, 1, 1, 1}}));
    auto& x = fx.param("x", random_tensor(fx.rng, 3 * 5, 4));
    return fx.check([&](Tape& t) { return fx.probe(t, layers::gap_forward(t, {t.parameter(x), 5, 3}, gap).data); });
  });
  layer(out, "layer.lateral", ++s, [](Fixture& fx) {
    layers::LateralConv conv = layers::make_lateral(fx.store, "lateral", 3, 4, fx.rng);
    auto& x = fx.param("x", random_tensor(fx.rng, 2 * 5, 3));
    return fx.check([&](Tape& t) { return fx.probe(t, layers::lateral_forward(t, {t.parameter(x), 5, 2}, conv).data); });
  });
  layer(out, "layer.upsample_add", ++s, [](Fixture& fx) {
    const Tensor membership = Tensor::from_rows({{1, 1, 0, 0, 0}, {0, 0, 1, 1, 1}});
    auto& fine = fx.param("fine", random_tensor(fx.rng, 3 * 5, 4));
    auto& coarse = fx.param("coarse", random_tensor(fx.rng, 3 * 2, 4));
    return fx.check([&](Tape& t) {
      return fx.probe(t, layers::upsample_add(t, {t.parameter(fine), 5, 3}, {t.parameter(coarse), 2, 3}, membership).data);
    });
  });
  layer(out, "layer.lstm", ++s, [](Fixture& fx) {
    layers::LstmCell cell = layers::make_lstm(fx.store, "lstm", 3, 4, fx.rng);
    auto& x = fx.param("x", random_tensor(fx.rng, 5, 3));
    return fx.check([&](Tape& t) { return fx.probe(t, layers::lstm_forward(t, t.parameter(x), cell)); });
  });
  layer(out, "layer.lstm_initial_state", ++s, [](Fixture& fx) {
    layers::LstmCell cell = layers::make_lstm(fx.store, "lstm", 3, 4, fx.rng);
    auto& x = fx.param("x", random_tensor(fx.rng, 3, 3));
    auto& h0 = fx.param("h0", random_tensor(fx.rng, 1, 4));
    auto& c0 = fx.param("c0", random_tensor(fx.rng, 1, 4));
    return fx.check([&](Tape& t) {
      return fx.probe(t, layers::lstm_forward(t, t.parameter(x), cell, {t.parameter(h0), t.parameter(c0)}));
    });
  });
  layer(out, "layer.linear", ++s, [](Fixture& fx) {
    layers::Linear lin = layers::make_linear(fx.store, "linear", 4, 3, fx.rng);
    auto& x = fx.param("x", random_tensor(fx.rng, 5, 4));
    return fx.check([&](Tape& t) { return fx.probe(t, layers::linear_forward(t, t.parameter(x), lin)); });
  });
  layer(out, "layer.fusion", ++s, [](Fixture& fx) {
    layers::FusionGate gate = layers::make_fusion(fx.store, "fusion", 3, 5, 4, fx.rng);
    auto& img = fx.param("image", random_tensor(fx.rng, 4, 3));
    auto& skel = fx.param("skeleton", random_tensor(fx.rng, 4, 5));
    return fx.check([&](Tape& t) {
      return fx.probe(t, layers::fusion_forward(t, t.parameter(img), t.parameter(skel), gate).output);
    });
  });

  // ---------------------------------------------------------------- end-to-end
  layer(out, "model.toy_multi_loss", ++s, [](Fixture& fx) { return toy_check(fx, ToyOptions{}); });
  layer(out, "model.toy_averaged", ++s, [](Fixture& fx) {
    ToyOptions o;
    o.multi_loss = false;
    return toy_check(fx, o);
  });
  layer(out, "model.toy_fusion", ++s, [](Fixture& fx) {
    ToyOptions o;
    o.fusion = true;
    return toy_check(fx, o);
  });
  layer(out, "model.toy_three_level", ++s, [](Fixture& fx) {
    ToyOptions o;
    o.joints = 6;
    o.joint_part = {0, 0, 1, 1, 2, 2};
    o.part_global = {0, 1, 2};
    o.levels = 3;
    return toy_check(fx, o);
  });
  return out;
}

Case corrupted_case() {
  return make_case("fault.corrupted_square", kPrimitiveTolerance, 5, [](Fixture& fx) {
    auto& x = fx.param("x", random_tensor(fx.rng, 3, 3));
    return fx.check([&](Tape& t) {
      Var v = t.parameter(x);
      Tensor sq = v.value();
      for (auto& e : sq.values()) e *= e;
      Var y = t.record(std::move(sq), {v}, [](BackwardContext& ctx) {
        if (Tensor* g = ctx.grad(0))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += 2.2 * ctx.input(0)[i] * ctx.grad_out()[i];
      }, "corrupted_square");
      return fx.probe(t, y);
    });
  });
}

SuiteReport run_cases(const std::vector<Case>& cases) {
  using clock = std::chrono::steady_clock;
  SuiteReport report;
  const auto start = clock::now();
  for (const auto& c : cases) {
    ComponentResult r;
    r.name = c.name;
    r.tolerance = c.tolerance;
    r.floor = c.floor;
    const auto t0 = clock::now();
    r.report = c.run();
    r.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    r.passed = r.report.coords_checked > 0 && r.report.max_error < c.tolerance;
    report.passed = report.passed && r.passed;
    report.components.push_back(std::move(r));
  }
  report.seconds = std::chrono::duration<double>(clock::now() - start).count();
  return report;
}

std::string format_report(const SuiteReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-28s %12s %9s %7s  %s %s\n", "component", "max_rel_err", "tolerance", "coords",
                "ok? ", "worst coordinate");
  os << line;
  for (const auto& c : report.components) {
    std::snprintf(line, sizeof line, "%-28s %12.3e %9.0e %7zu  %s %s[%zu] analytic %.6e numeric %.6e\n", c.name.c_str(),
                  c.report.max_error, c.tolerance, c.report.coords_checked, c.passed ? "ok  " : "FAIL",
                  c.report.worst_param.c_str(), c.report.worst_index, c.report.worst_analytic,
                  c.report.worst_numeric);
    os << line;
  }
  std::snprintf(line, sizeof line, "%s: %zu components in %.2f s\n", report.passed ? "PASS" : "FAIL",
                report.components.size(), report.seconds);
  os << line;
  return os.str();
}

}  // namespace stpgn::gradcheck
