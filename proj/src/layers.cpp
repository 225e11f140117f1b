#include "stpgn/layers.hpp"

namespace stpgn::layers {

Tensor pack_channels_first(const Tensor& cnt, std::size_t channels, std::size_t nodes, std::size_t frames) {
  if (cnt.size() != channels * nodes * frames)
    throw ShapeError("pack_channels_first: " + shape_string(cnt.shape()) + " is not " + std::to_string(channels) +
                     "x" + std::to_string(nodes) + "x" + std::to_string(frames));
  Tensor out = Tensor::matrix(frames * nodes, channels);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t n = 0; n < nodes; ++n)
      for (std::size_t t = 0; t < frames; ++t) out(t * nodes + n, c) = cnt[(c * nodes + n) * frames + t];
  return out;
}

Tensor unpack_channels_first(const Tensor& rows, std::size_t nodes, std::size_t frames) {
  const std::size_t channels = rows.cols();
  if (rows.rows() != frames * nodes) throw ShapeError("unpack_channels_first: row count mismatch");
  Tensor out({channels, nodes, frames});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t n = 0; n < nodes; ++n)
      for (std::size_t t = 0; t < frames; ++t) out[(c * nodes + n) * frames + t] = rows(t * nodes + n, c);
  return out;
}

// ------------------------------------------------------------------ GCN

GcnLayer make_gcn(ParameterStore& store, const std::string& prefix, const graph::PartitionedAdjacency& adjacency,
                  std::size_t in_channels, std::size_t out_channels, bool importance, std::mt19937_64& rng) {
  GcnLayer layer;
  layer.partitions = adjacency.partitions;
  layer.normalized = adjacency.normalized;
  layer.in_channels = in_channels;
  layer.out_channels = out_channels;
  for (std::size_t a = 0; a < adjacency.partitions.size(); ++a) {
    layer.weights.push_back(&store.add(prefix + ".weight" + std::to_string(a),
                                       uniform_fan_in(in_channels, out_channels, in_channels, rng)));
  }
  if (importance)
    for (std::size_t a = 0; a < adjacency.partitions.size(); ++a)
      layer.importance.push_back(
          &store.add(prefix + ".importance" + std::to_string(a), Tensor(adjacency.partitions[a].shape(), 1.0)));
  return layer;
}

Features gcn_forward(Tape& tape, const Features& x, const GcnLayer& layer) {
  if (x.nodes != layer.nodes())
    throw ShapeError("gcn_forward: features have " + std::to_string(x.nodes) + " nodes, adjacency has " +
                     std::to_string(layer.nodes()));
  if (x.channels() != layer.in_channels)
    throw ShapeError("gcn_forward: features have " + std::to_string(x.channels()) + " channels, layer expects " +
                     std::to_string(layer.in_channels));
  Var total;
  for (std::size_t a = 0; a < layer.partitions.size(); ++a) {
    Var mix = layer.importance.empty()
                  ? tape.constant(layer.normalized[a])
                  : ops::normalize_adjacency(
                        ops::mul(tape.constant(layer.partitions[a]), tape.parameter(*layer.importance[a])));
    Var term = ops::matmul(ops::node_mix(mix, x.data, x.frames), tape.parameter(*layer.weights[a]));
    total = total.valid() ? ops::add(total, term) : term;
  }
  return {total, x.nodes, x.frames};
}

// ------------------------------------------------------------------ GAP

GapLayer::GapLayer(Tensor membership_matrix)
    : membership(std::move(membership_matrix)), pooling(graph::pooling_operator(membership)) {}

Features gap_forward(Tape& tape, const Features& f, const GapLayer& layer) {
  if (layer.membership.cols() != f.nodes)
    throw ShapeError("gap_forward: kernel covers " + std::to_string(layer.membership.cols()) +
                     " nodes, features have " + std::to_string(f.nodes));
  (void)tape;
  return {ops::group_mean(f.data, layer.membership, f.frames), layer.membership.rows(), f.frames};
}

// ------------------------------------------------------------------ lateral / upsample

LateralConv make_lateral(ParameterStore& store, const std::string& prefix, std::size_t in_channels,
                         std::size_t out_channels, std::mt19937_64& rng) {
  LateralConv conv;
  conv.weight = &store.add(prefix + ".weight", uniform_fan_in(in_channels, out_channels, in_channels, rng));
  conv.bias = &store.add(prefix + ".bias", uniform_fan_in(1, out_channels, in_channels, rng));
  return conv;
}

Features lateral_forward(Tape& tape, const Features& f, const LateralConv& conv) {
  Var y = ops::add_row(ops::matmul(f.data, tape.parameter(*conv.weight)), tape.parameter(*conv.bias));
  return {y, f.nodes, f.frames};
}

Features upsample_add(Tape& tape, const Features& lateral, const Features& coarse, const Tensor& membership) {
  if (lateral.channels() != coarse.channels())
    throw ShapeError("upsample_add: channel mismatch " + std::to_string(lateral.channels()) + " vs " +
                     std::to_string(coarse.channels()));
  if (lateral.frames != coarse.frames) throw ShapeError("upsample_add: frame count mismatch");
  if (membership.rows() != coarse.nodes || membership.cols() != lateral.nodes)
    throw ShapeError("upsample_add: membership " + shape_string(membership.shape()) + " does not map " +
                     std::to_string(coarse.nodes) + " groups onto " + std::to_string(lateral.nodes) + " nodes");
  Tensor transpose = Tensor::matrix(membership.cols(), membership.rows());
  for (std::size_t g = 0; g < membership.rows(); ++g)
    for (std::size_t n = 0; n < membership.cols(); ++n) transpose(n, g) = membership(g, n);
  Var up = ops::node_mix(tape.constant(std::move(transpose)), coarse.data, coarse.frames);
  return {ops::add(lateral.data, up), lateral.nodes, lateral.frames};
}

// ------------------------------------------------------------------ LSTM

LstmCell make_lstm(ParameterStore& store, const std::string& prefix, std::size_t input_size, std::size_t hidden_size,
                   std::mt19937_64& rng) {
  LstmCell cell;
  cell.input_size = input_size;
  cell.hidden_size = hidden_size;
  cell.input_weight = &store.add(prefix + ".input_weight", uniform_fan_in(input_size, 4 * hidden_size, input_size, rng));
  cell.hidden_weight =
      &store.add(prefix + ".hidden_weight", uniform_fan_in(hidden_size, 4 * hidden_size, hidden_size, rng));
  Tensor bias = Tensor::matrix(1, 4 * hidden_size);
  for (std::size_t j = hidden_size; j < 2 * hidden_size; ++j) bias[j] = 1.0;  // forget gate
  cell.bias = &store.add(prefix + ".bias", std::move(bias));
  return cell;
}

Var lstm_forward(Tape& tape, Var sequence, const LstmCell& cell, LstmState initial) {
  const std::size_t frames = sequence.rows();
  const std::size_t h = cell.hidden_size;
  if (sequence.cols() != cell.input_size)
    throw ShapeError("lstm_forward: input width " + std::to_string(sequence.cols()) + " != cell input size " +
                     std::to_string(cell.input_size));
  Var gates_in = ops::add_row(ops::matmul(sequence, tape.parameter(*cell.input_weight)), tape.parameter(*cell.bias));
  Var wh = tape.parameter(*cell.hidden_weight);
  Var hidden = initial.hidden.valid() ? initial.hidden : tape.constant(Tensor::matrix(1, h));
  Var state = initial.cell.valid() ? initial.cell : tape.constant(Tensor::matrix(1, h));
  if (hidden.cols() != h || state.cols() != h) throw ShapeError("lstm_forward: initial state width mismatch");

  std::vector<Var> outputs;
  outputs.reserve(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    Var g = ops::add(ops::slice(gates_in, 0, t, t + 1), ops::matmul(hidden, wh));
    Var i = ops::sigmoid(ops::slice(g, 1, 0, h));
    Var f = ops::sigmoid(ops::slice(g, 1, h, 2 * h));
    Var c_hat = ops::tanh(ops::slice(g, 1, 2 * h, 3 * h));
    Var o = ops::sigmoid(ops::slice(g, 1, 3 * h, 4 * h));
    state = ops::add(ops::mul(f, state), ops::mul(i, c_hat));
    hidden = ops::mul(o, ops::tanh(state));
    outputs.push_back(hidden);
  }
  return ops::concat(outputs, 0);
}

// ------------------------------------------------------------------ linear

Linear make_linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                   std::mt19937_64& rng) {
  Linear l;
  l.weight = &store.add(prefix + ".weight", uniform_fan_in(in, out, in, rng));
  l.bias = &store.add(prefix + ".bias", uniform_fan_in(1, out, in, rng));
  return l;
}

Var linear_forward(Tape& tape, Var x, const Linear& layer) {
  return ops::add_row(ops::matmul(x, tape.parameter(*layer.weight)), tape.parameter(*layer.bias));
}

// ------------------------------------------------------------------ fusion

FusionGate make_fusion(ParameterStore& store, const std::string& prefix, std::size_t image_dim,
                       std::size_t skeleton_dim, std::size_t fused_dim, std::mt19937_64& rng) {
  FusionGate g;
  g.image_projection = &store.add(prefix + ".image_projection", uniform_fan_in(image_dim, fused_dim, image_dim, rng));
  g.skeleton_projection =
      &store.add(prefix + ".skeleton_projection", uniform_fan_in(skeleton_dim, fused_dim, skeleton_dim, rng));
  g.image_gate = &store.add(prefix + ".image_gate", uniform_fan_in(fused_dim, fused_dim, fused_dim, rng));
  g.skeleton_gate = &store.add(prefix + ".skeleton_gate", uniform_fan_in(fused_dim, fused_dim, fused_dim, rng));
  return g;
}

FusionOutput fusion_forward(Tape& tape, Var image, Var skeleton, const FusionGate& gate) {
  const Tensor& ui = gate.image_projection->value;
  const Tensor& uz = gate.skeleton_projection->value;
  if (image.cols() != ui.rows())
    throw ShapeError("fusion_forward: image features have width " + std::to_string(image.cols()) +
                     ", projection expects " + std::to_string(ui.rows()));
  if (skeleton.cols() != uz.rows())
    throw ShapeError("fusion_forward: skeleton features have width " + std::to_string(skeleton.cols()) +
                     ", projection expects " + std::to_string(uz.rows()));
  if (ui.cols() != uz.cols())
    throw ShapeError("fusion_forward: projections disagree on fused width (" + std::to_string(ui.cols()) + " vs " +
                     std::to_string(uz.cols()) + ")");
  if (image.rows() != skeleton.rows()) throw ShapeError("fusion_forward: frame count mismatch");

  FusionOutput out;
  out.image = ops::relu(ops::matmul(image, tape.parameter(*gate.image_projection)));
  out.skeleton = ops::relu(ops::matmul(skeleton, tape.parameter(*gate.skeleton_projection)));
  out.gate = ops::sigmoid(ops::add(ops::matmul(out.image, tape.parameter(*gate.image_gate)),
                                   ops::matmul(out.skeleton, tape.parameter(*gate.skeleton_gate))));
  Var ones = tape.constant(Tensor(out.gate.shape(), 1.0));
  out.output = ops::add(ops::mul(out.gate, out.image), ops::mul(ops::sub(ones, out.gate), out.skeleton));
  return out;
}

}  // namespace stpgn::layers
