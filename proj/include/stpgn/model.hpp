#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stpgn/graph.hpp"
#include "stpgn/layers.hpp"
#include "stpgn/params.hpp"

namespace stpgn {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::size_t input_channels = 3;
  std::array<std::size_t, 3> gcn_channels{64, 128, 256};
  std::size_t hidden_size = 256;
  std::size_t class_count = 2;
  // 3 = full pyramid; 1 = single GCN level feeding one LSTM head (GCN+LSTM baseline).
  std::size_t levels = 3;
  bool edge_importance = true;
  // Per channel and joint standardization of the input, fitted on training
  // frames and stored as the non-trainable parameter "input_norm".
  bool input_norm = true;
  bool multi_loss = true;
  bool fusion = false;
  std::size_t image_feature_dim = 0;
  std::size_t fusion_dim = 256;
  // With fusion on: train only the fusion unit and the level-1 head.
  bool freeze_backbone = false;
  std::uint64_t seed = 1;
  std::vector<std::string> class_names;
  graph::SkeletonTopology skeleton = graph::default_skeleton();
  graph::PartSpec parts = graph::default_part_spec();

  std::size_t pyramid_channels() const { return gcn_channels[levels - 1]; }
  void validate() const;
  // Canonical key = value text; parse(serialize()) reproduces the config.
  std::string serialize() const;
  static ModelConfig parse(const std::string& text);
};

enum class LossMode { multi_loss, averaged_prediction };

// One training/evaluation window.
struct Sample {
  Tensor input;                 // channels x joints x frames
  std::vector<int> labels;      // one class per frame
  std::vector<double> mask;     // 1 for real frames, 0 for padding
  std::optional<Tensor> image;  // frames x image_dim when fusion is used

  std::size_t frames() const { return labels.size(); }
};

struct ForwardResult {
  std::vector<layers::Features> f;  // bottom-up GCN outputs, one per level
  std::vector<layers::Features> z;  // top-down pyramid features
  std::vector<Var> logits;          // per level, frames x classes
  std::optional<layers::FusionOutput> fusion;
};

struct Prediction {
  Tensor probabilities;     // frames x classes, mean of per-level softmax
  std::vector<int> labels;  // argmax, lowest index on ties
};

class PgnModel {
 public:
  explicit PgnModel(ModelConfig config);
  PgnModel(PgnModel&&) = default;
  PgnModel& operator=(PgnModel&&) = default;

  const ModelConfig& config() const { return config_; }
  const graph::Hierarchy& hierarchy() const { return hierarchy_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  std::size_t level_count() const { return config_.levels; }

  ForwardResult forward(Tape& tape, const Sample& sample) const;
  // Forward without keeping a tape; returns per-level logits.
  std::vector<Tensor> infer_logits(const Sample& sample) const;

  // Per-sample loss normalised by the number of unmasked frames.
  Var loss(Tape& tape, const ForwardResult& out, const Sample& sample, LossMode mode) const;
  LossMode loss_mode() const { return config_.multi_loss ? LossMode::multi_loss : LossMode::averaged_prediction; }

  // Mean loss over the batch; gradients of that mean are added to `grads`.
  // Samples fan out over OpenMP threads with one tape each; per-thread
  // gradients merge in thread order, so results are reproducible for a fixed
  // thread count.
  double batch_gradients(const std::vector<const Sample*>& batch, Gradients& grads) const;

  // Sets the input standardization from the unmasked frames of `samples`:
  // row 0 holds the mean, row 1 the inverse standard deviation (1 when the
  // deviation is below 1e-6). No-op when input_norm is off.
  void fit_input_norm(const std::vector<const Sample*>& samples);

  // Clamps edge-importance masks at zero after an optimizer step.
  void project_constraints();

  // Copies every parameter value from a model with identical structure.
  void copy_parameters_from(const PgnModel& other);

  const layers::GcnLayer& gcn(std::size_t level) const { return gcn_.at(level); }
  const layers::GapLayer& gap(std::size_t level) const { return gap_.at(level); }
  const layers::LateralConv& lateral(std::size_t level) const { return lateral_.at(level); }
  const layers::LstmCell& lstm(std::size_t level) const { return lstm_.at(level); }
  const layers::Linear& classifier(std::size_t level) const { return classifier_.at(level); }
  const std::optional<layers::FusionGate>& fusion() const { return fusion_; }

 private:
  ModelConfig config_;
  graph::Hierarchy hierarchy_;
  ParameterStore store_;
  std::vector<layers::GcnLayer> gcn_;
  std::vector<layers::GapLayer> gap_;
  std::vector<layers::LateralConv> lateral_;  // indexed by level; top level unused
  std::vector<layers::LstmCell> lstm_;
  std::vector<layers::Linear> classifier_;
  std::optional<layers::FusionGate> fusion_;
};

// Softmax per level, averaged over levels, argmax with lowest-index ties.
Prediction predict(const std::vector<Tensor>& level_logits);

// Loss on raw logits (no parameters involved); handy for evaluation.
double loss_value(const std::vector<Tensor>& level_logits, const std::vector<int>& labels,
                  const std::vector<double>& mask, LossMode mode);

// ------------------------------------------------------------------ checkpoint

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> save_checkpoint(const PgnModel& model);
PgnModel load_checkpoint(const std::vector<std::uint8_t>& bytes);
// Also checks that the stored flags agree with `expected` and throws
// CheckpointError naming the first disagreement.
PgnModel load_checkpoint(const std::vector<std::uint8_t>& bytes, const ModelConfig& expected);

void write_checkpoint_file(const std::string& path, const PgnModel& model);
PgnModel read_checkpoint_file(const std::string& path);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace stpgn
