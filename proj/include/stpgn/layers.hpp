#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "stpgn/graph.hpp"
#include "stpgn/params.hpp"
#include "stpgn/tape.hpp"

namespace stpgn::layers {

// Node features over time. `data` is [frames * nodes x channels] with row
// t * nodes + n holding node n at frame t.
struct Features {
  Var data;
  std::size_t nodes = 0;
  std::size_t frames = 0;

  std::size_t channels() const { return data.cols(); }
};

// Packs a channels x nodes x frames tensor (row-major, as laid out in
// sequence files and windows) into the internal frame-major layout.
Tensor pack_channels_first(const Tensor& cnt, std::size_t channels, std::size_t nodes, std::size_t frames);
// Inverse of pack_channels_first.
Tensor unpack_channels_first(const Tensor& rows, std::size_t nodes, std::size_t frames);

// Partitioned graph convolution: f = sum_a norm(A_a * M_a) X W_a.
struct GcnLayer {
  std::vector<Tensor> partitions;             // raw A_a
  std::vector<Tensor> normalized;             // norm(A_a), used when importance is off
  std::vector<const Parameter*> weights;      // W_a, in x out
  std::vector<const Parameter*> importance;   // M_a, empty when disabled
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;

  std::size_t nodes() const { return partitions.empty() ? 0 : partitions.front().rows(); }
};

// Registers W_a (and M_a when `importance`) under `prefix` and returns the layer.
GcnLayer make_gcn(ParameterStore& store, const std::string& prefix, const graph::PartitionedAdjacency& adjacency,
                  std::size_t in_channels, std::size_t out_channels, bool importance, std::mt19937_64& rng);

Features gcn_forward(Tape& tape, const Features& x, const GcnLayer& layer);

// Group average pool with binary membership J (groups x nodes).
struct GapLayer {
  Tensor membership;
  Tensor pooling;  // row-normalized membership
  explicit GapLayer(Tensor membership_matrix);
  GapLayer() = default;
};

Features gap_forward(Tape& tape, const Features& f, const GapLayer& layer);

// 1x1 convolution: the same affine map applied to every node at every frame.
struct LateralConv {
  const Parameter* weight = nullptr;  // in x out
  const Parameter* bias = nullptr;    // 1 x out
};

LateralConv make_lateral(ParameterStore& store, const std::string& prefix, std::size_t in_channels,
                         std::size_t out_channels, std::mt19937_64& rng);
Features lateral_forward(Tape& tape, const Features& f, const LateralConv& conv);

// z_fine = p_fine + J^T z_coarse, with J the coarse-groups x fine-nodes membership.
Features upsample_add(Tape& tape, const Features& lateral, const Features& coarse, const Tensor& membership);

// Gate order in the packed matrices: input, forget, candidate, output.
struct LstmCell {
  const Parameter* input_weight = nullptr;   // D x 4H
  const Parameter* hidden_weight = nullptr;  // H x 4H
  const Parameter* bias = nullptr;           // 1 x 4H
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
};

LstmCell make_lstm(ParameterStore& store, const std::string& prefix, std::size_t input_size, std::size_t hidden_size,
                   std::mt19937_64& rng);

struct LstmState {
  Var hidden;  // 1 x H
  Var cell;    // 1 x H
};

// Runs the recurrence over the rows of `sequence` ([frames x D]) and returns
// every hidden state ([frames x H]). A default state starts from zeros.
Var lstm_forward(Tape& tape, Var sequence, const LstmCell& cell, LstmState initial = {});

struct Linear {
  const Parameter* weight = nullptr;  // in x out
  const Parameter* bias = nullptr;    // 1 x out
};

Linear make_linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                   std::mt19937_64& rng);
Var linear_forward(Tape& tape, Var x, const Linear& layer);

// Gated blend of projected image and skeleton features.
struct FusionGate {
  const Parameter* image_projection = nullptr;     // U_i, image_dim x D
  const Parameter* skeleton_projection = nullptr;  // U_z, skeleton_dim x D
  const Parameter* image_gate = nullptr;           // W_i, D x D
  const Parameter* skeleton_gate = nullptr;        // W_s, D x D
};

FusionGate make_fusion(ParameterStore& store, const std::string& prefix, std::size_t image_dim,
                       std::size_t skeleton_dim, std::size_t fused_dim, std::mt19937_64& rng);

struct FusionOutput {
  Var image;     // I_t rows
  Var skeleton;  // S_t rows
  Var gate;      // p_t rows
  Var output;    // O_t rows
};

// Row t of `image` / `skeleton` holds i_t / z1_t.
FusionOutput fusion_forward(Tape& tape, Var image, Var skeleton, const FusionGate& gate);

}  // namespace stpgn::layers
