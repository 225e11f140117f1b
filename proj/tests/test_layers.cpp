#include <doctest.h>

#include <cmath>

#include "stpgn/layers.hpp"
#include "test_util.hpp"

using namespace stpgn;
using namespace stpgn::layers;

namespace {

graph::SkeletonTopology path(std::size_t n) {
  graph::SkeletonTopology t;
  t.joint_count = n;
  for (std::size_t i = 0; i + 1 < n; ++i) t.edges.push_back({i, i + 1});
  t.center_joint = n / 2;
  return t;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Naive oracle: out[t*N+i, :] = sum_a sum_j An[a](i,j) sum_c x[t*N+j, c] W[a](c, :)
Tensor gcn_oracle(const Tensor& x, std::size_t frames, const std::vector<Tensor>& norm, const std::vector<Tensor>& w) {
  const std::size_t n = norm.front().rows(), out_c = w.front().cols();
  Tensor out = Tensor::matrix(frames * n, out_c);
  for (std::size_t a = 0; a < norm.size(); ++a)
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t c = 0; c < x.cols(); ++c)
            for (std::size_t o = 0; o < out_c; ++o)
              out(t * n + i, o) += norm[a](i, j) * x(t * n + j, c) * w[a](c, o);
  return out;
}

}  // namespace

TEST_CASE("channels-first packing round trip") {
  std::mt19937_64 rng(3);
  Tensor cnt({3, 4, 5});
  for (std::size_t i = 0; i < cnt.size(); ++i) cnt[i] = static_cast<double>(i);
  const Tensor rows = pack_channels_first(cnt, 3, 4, 5);
  CHECK(rows(2 * 4 + 1, 2) == cnt[(2 * 4 + 1) * 5 + 2]);
  CHECK(unpack_channels_first(rows, 4, 5) == cnt);
  CHECK_THROWS_AS(pack_channels_first(cnt, 3, 4, 4), ShapeError);
}

TEST_CASE("GCN with identity adjacency and identity weights is the identity") {
  std::mt19937_64 rng(1);
  Parameter w{"w", Tensor::identity(4)};
  GcnLayer layer;
  layer.partitions = {Tensor::identity(6)};
  layer.normalized = {Tensor::identity(6)};
  layer.weights = {&w};
  layer.in_channels = layer.out_channels = 4;
  Tape tape;
  const Tensor x = testutil::random_matrix(rng, 3 * 6, 4);
  const Features f = gcn_forward(tape, {tape.constant(x), 6, 3}, layer);
  CHECK(f.data.value() == x);
}

TEST_CASE("GCN matches the naive oracle and is linear") {
  std::mt19937_64 rng(2);
  ParameterStore store;
  const auto adj = graph::spatial_partition(path(5));
  const GcnLayer layer = make_gcn(store, "g", adj, 3, 4, false, rng);
  const Tensor x = testutil::random_matrix(rng, 2 * 5, 3);
  const Tensor y = testutil::random_matrix(rng, 2 * 5, 3);
  Tape tape;
  auto run = [&](const Tensor& in) { return gcn_forward(tape, {tape.constant(in), 5, 2}, layer).data.value(); };
  std::vector<Tensor> w;
  for (const auto* p : layer.weights) w.push_back(p->value);
  CHECK(max_abs_diff(run(x), gcn_oracle(x, 2, adj.normalized, w)) <= 1e-12);

  const double a = 0.7, b = -1.3;
  Tensor mix(x.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  const Tensor fx = run(x), fy = run(y), fm = run(mix);
  Tensor lin(fx.shape());
  for (std::size_t i = 0; i < lin.size(); ++i) lin[i] = a * fx[i] + b * fy[i];
  CHECK(max_abs_diff(fm, lin) <= 1e-12);
}

TEST_CASE("all-ones edge importance reproduces the plain GCN") {
  const auto adj = graph::spatial_partition(graph::default_skeleton());
  ParameterStore s1, s2;
  std::mt19937_64 r1(9), r2(9);
  const GcnLayer plain = make_gcn(s1, "g", adj, 3, 5, false, r1);
  const GcnLayer masked = make_gcn(s2, "g", adj, 3, 5, true, r2);
  REQUIRE(masked.importance.size() == 3);
  std::mt19937_64 rng(4);
  const Tensor x = testutil::random_matrix(rng, 4 * 13, 3);
  Tape tape;
  const Tensor a = gcn_forward(tape, {tape.constant(x), 13, 4}, plain).data.value();
  const Tensor b = gcn_forward(tape, {tape.constant(x), 13, 4}, masked).data.value();
  CHECK(testutil::bit_equal(a, b));
}

TEST_CASE("GCN rejects mismatched features") {
  std::mt19937_64 rng(2);
  ParameterStore store;
  const GcnLayer layer = make_gcn(store, "g", graph::spatial_partition(path(4)), 3, 2, false, rng);
  Tape tape;
  CHECK_THROWS_AS(gcn_forward(tape, {tape.constant(Tensor::matrix(10, 3)), 5, 2}, layer), ShapeError);
  CHECK_THROWS_AS(gcn_forward(tape, {tape.constant(Tensor::matrix(8, 2)), 4, 2}, layer), ShapeError);
}

TEST_CASE("group average pooling") {
  const auto h = graph::build_hierarchy(graph::default_skeleton(), graph::default_part_spec());
  const GapLayer gap(h.joint_to_part);
  const std::size_t frames = 2;
  Tensor x = Tensor::matrix(frames * 13, 2, 4.25);
  Tape tape;
  const Tensor constant = gap_forward(tape, {tape.constant(x), 13, frames}, gap).data.value();
  CHECK(constant == Tensor::matrix(frames * 6, 2, 4.25));

  x.fill(0.0);
  const double v[] = {1.0, 2.0, 3.0};
  const std::size_t arm[] = {7, 9, 11};
  for (std::size_t t = 0; t < frames; ++t)
    for (int k = 0; k < 3; ++k) x(t * 13 + arm[k], 0) = v[k];
  const Tensor pooled = gap_forward(tape, {tape.constant(x), 13, frames}, gap).data.value();
  const auto& names = h.parts.part_names;
  const std::size_t la = std::find(names.begin(), names.end(), "left_arm") - names.begin();
  for (std::size_t t = 0; t < frames; ++t) CHECK(pooled(t * 6 + la, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("upsample-add copies each group's feature to its members") {
  const Tensor membership = Tensor::from_rows({{1, 1, 0}, {0, 0, 1}});
  Tape tape;
  const Tensor coarse = Tensor::from_rows({{10, 1}, {20, 2}});
  const Tensor lateral = Tensor::from_rows({{1, 0}, {2, 0}, {3, 0}});
  const Features z = upsample_add(tape, {tape.constant(lateral), 3, 1}, {tape.constant(coarse), 2, 1}, membership);
  CHECK(z.data.value() == Tensor::from_rows({{11, 1}, {12, 1}, {23, 2}}));
  CHECK_THROWS_AS(upsample_add(tape, {tape.constant(lateral), 3, 1}, {tape.constant(coarse), 2, 1},
                               Tensor::from_rows({{1, 1}, {0, 0}})),
                  ShapeError);
}

TEST_CASE("lateral convolution applies one affine map per node") {
  Parameter w{"w", Tensor::from_rows({{1, 2}, {3, 4}})};
  Parameter b{"b", Tensor::from_rows({{0.5, -0.5}})};
  Tape tape;
  const Features y = lateral_forward(tape, {tape.constant(Tensor::from_rows({{1, 0}, {0, 1}, {1, 1}})), 3, 1}, {&w, &b});
  CHECK(y.data.value() == Tensor::from_rows({{1.5, 1.5}, {3.5, 3.5}, {4.5, 5.5}}));
}

TEST_CASE("LSTM with zero weights stays at zero") {
  ParameterStore store;
  std::mt19937_64 rng(5);
  const LstmCell cell = make_lstm(store, "l", 3, 4, rng);
  for (Parameter* p : store.all()) p->value.fill(0.0);
  Tape tape;
  const Var h = lstm_forward(tape, tape.constant(testutil::random_matrix(rng, 6, 3)), cell);
  CHECK(h.value() == Tensor::matrix(6, 4));
}

TEST_CASE("LSTM forget bias starts at one") {
  ParameterStore store;
  std::mt19937_64 rng(5);
  const LstmCell cell = make_lstm(store, "l", 2, 3, rng);
  const Tensor& b = cell.bias->value;
  for (std::size_t j = 0; j < 12; ++j) CHECK(b[j] == ((j >= 3 && j < 6) ? 1.0 : 0.0));
}

TEST_CASE("LSTM 3-frame recurrence by hand") {
  // Scalar cell, gate order input, forget, candidate, output.
  const double wx[4] = {0.5, -0.3, 0.8, 0.2};
  const double wh[4] = {0.1, 0.4, -0.6, 0.7};
  const double bb[4] = {0.0, 1.0, 0.1, -0.2};
  Parameter in{"in", Tensor::from_rows({{wx[0], wx[1], wx[2], wx[3]}})};
  Parameter hid{"hid", Tensor::from_rows({{wh[0], wh[1], wh[2], wh[3]}})};
  Parameter bias{"bias", Tensor::from_rows({{bb[0], bb[1], bb[2], bb[3]}})};
  LstmCell cell{&in, &hid, &bias, 1, 1};
  const double xs[3] = {1.0, -2.0, 0.5};
  double h = 0.0, c = 0.0, want[3];
  for (int t = 0; t < 3; ++t) {
    double z[4];
    for (int k = 0; k < 4; ++k) z[k] = wx[k] * xs[t] + wh[k] * h + bb[k];
    c = sig(z[1]) * c + sig(z[0]) * std::tanh(z[2]);
    h = sig(z[3]) * std::tanh(c);
    want[t] = h;
  }
  Tape tape;
  const Var out = lstm_forward(tape, tape.constant(Tensor::from_rows({{xs[0]}, {xs[1]}, {xs[2]}})), cell);
  for (int t = 0; t < 3; ++t) CHECK(out.value()[t] == doctest::Approx(want[t]).epsilon(1e-14));
}

TEST_CASE("linear layer") {
  Parameter w{"w", Tensor::from_rows({{2}, {-1}})};
  Parameter b{"b", Tensor::from_rows({{0.25}})};
  Tape tape;
  CHECK(linear_forward(tape, tape.constant(Tensor::from_rows({{1, 3}})), {&w, &b}).value()[0] == -0.75);
}

namespace {

struct FusionFixture {
  Parameter ui{"ui", Tensor::identity(3)};
  Parameter uz{"uz", Tensor::identity(3)};
  Parameter wi{"wi", Tensor::matrix(3, 3)};
  Parameter ws{"ws", Tensor::matrix(3, 3)};
  FusionGate gate() const { return {&ui, &uz, &wi, &ws}; }
};

}  // namespace

TEST_CASE("fusion gate at zero weights takes the midpoint") {
  FusionFixture fx;
  Tape tape;
  const auto out = fusion_forward(tape, tape.constant(Tensor::from_rows({{2, 4, 6}})),
                                  tape.constant(Tensor::from_rows({{0, 2, 10}})), fx.gate());
  CHECK(out.gate.value() == Tensor::matrix(1, 3, 0.5));
  CHECK(out.output.value() == Tensor::from_rows({{1, 3, 8}}));
}

TEST_CASE("fusion with identical streams returns the stream") {
  FusionFixture fx;
  std::mt19937_64 rng(8);
  fx.wi.value = testutil::random_matrix(rng, 3, 3);
  fx.ws.value = testutil::random_matrix(rng, 3, 3);
  Tape tape;
  const Tensor s = Tensor::from_rows({{0.3, 1.7, 2.0}, {0.1, 0.0, 5.0}});
  const auto out = fusion_forward(tape, tape.constant(s), tape.constant(s), fx.gate());
  CHECK(max_abs_diff(out.output.value(), s) <= 1e-15);
}

TEST_CASE("fusion gate value 0.6 weights the image stream") {
  FusionFixture fx;
  // Only the first image channel drives every gate logit: logit = ln(1.5) * i_0.
  const double k = std::log(1.5);
  for (std::size_t j = 0; j < 3; ++j) fx.wi.value(0, j) = k;
  Tape tape;
  const auto out = fusion_forward(tape, tape.constant(Tensor::from_rows({{1, 10, 0}})),
                                  tape.constant(Tensor::from_rows({{0, 0, 5}})), fx.gate());
  for (std::size_t j = 0; j < 3; ++j) CHECK(out.gate.value()[j] == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(out.output.value()[0] == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(out.output.value()[1] == doctest::Approx(6.0).epsilon(1e-14));
  CHECK(out.output.value()[2] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("fusion output lies between the projected streams") {
  std::mt19937_64 rng(12);
  ParameterStore store;
  const FusionGate g = make_fusion(store, "f", 4, 5, 3, rng);
  Tape tape;
  const auto out = fusion_forward(tape, tape.constant(testutil::random_matrix(rng, 7, 4)),
                                  tape.constant(testutil::random_matrix(rng, 7, 5)), g);
  const Tensor &o = out.output.value(), &i = out.image.value(), &s = out.skeleton.value();
  for (std::size_t k = 0; k < o.size(); ++k) {
    CHECK(o[k] >= std::min(i[k], s[k]) - 1e-15);
    CHECK(o[k] <= std::max(i[k], s[k]) + 1e-15);
  }
}

TEST_CASE("fusion hand-evaluated 3-dim example") {
  FusionFixture fx;
  fx.ui.value = Tensor::from_rows({{1, 0, 0}, {0, 2, 0}, {0, 0, 1}});
  fx.uz.value = Tensor::from_rows({{0.5, 0, 0}, {0, 1, 0}, {1, 0, 1}});
  fx.wi.value = Tensor::from_rows({{0.1, 0, 0}, {0, -0.2, 0}, {0, 0, 0.3}});
  fx.ws.value = Tensor::from_rows({{0.2, 0.1, 0}, {0, 0, 0}, {0, 0, -0.1}});
  const double iv[3] = {1.0, 0.5, 2.0}, sv[3] = {2.0, -1.0, 1.0};
  // I = relu(i U_i) = (1, 1, 2); S = relu(z U_z) = (2, 0, 1) after relu of (1+1, -1, 1)
  const double I[3] = {1.0, 1.0, 2.0}, S[3] = {2.0, 0.0, 1.0};
  const double logit[3] = {0.1 * I[0] + 0.2 * S[0], -0.2 * I[1] + 0.1 * S[0], 0.3 * I[2] - 0.1 * S[2]};
  Tape tape;
  const auto out = fusion_forward(tape, tape.constant(Tensor::from_rows({{iv[0], iv[1], iv[2]}})),
                                  tape.constant(Tensor::from_rows({{sv[0], sv[1], sv[2]}})), fx.gate());
  for (int k = 0; k < 3; ++k) {
    const double p = sig(logit[k]);
    CHECK(out.image.value()[k] == I[k]);
    CHECK(out.skeleton.value()[k] == S[k]);
    CHECK(std::abs(out.output.value()[k] - (p * I[k] + (1 - p) * S[k])) <= 1e-12);
  }
}
