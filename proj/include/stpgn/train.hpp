#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stpgn/metrics.hpp"
#include "stpgn/model.hpp"
#include "stpgn/sequence.hpp"

namespace stpgn {

struct TrainConfig {
  std::size_t window = 80;
  std::size_t batch_size = 128;
  double learning_rate = 0.05;
  // Non-empty: grid search over these rates (learning_rate is ignored).
  std::vector<double> lr_grid;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  std::size_t folds = 5;
  // true: every fold is validated in turn. false: a single run that holds
  // out fold 0, or trains and validates on everything with validate_on_train.
  bool cross_validation = false;
  bool validate_on_train = false;
  std::size_t train_stride = 0;  // 0 -> window / 2
  std::size_t eval_stride = 0;   // 0 -> window
  double iou_threshold = 0.1;
  ModelConfig model;

  std::size_t effective_train_stride() const { return train_stride ? train_stride : std::max<std::size_t>(1, window / 2); }
  std::size_t effective_eval_stride() const { return eval_stride ? eval_stride : window; }
  std::vector<double> learning_rates() const { return lr_grid.empty() ? std::vector<double>{learning_rate} : lr_grid; }

  void validate() const;
  // key = value text. Model keys (levels, hidden_size, gcn_channels,
  // edge_importance, input_norm, multi_loss, fusion, fusion_dim, freeze_backbone,
  // class_names, parts_file) share the file.
  static TrainConfig parse(const std::string& text, const std::string& source = "<text>");
  static TrainConfig load(const std::string& path);
  std::string serialize() const;
};

// ------------------------------------------------------------------ optimizer

struct AdamOptions {
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::map<const Parameter*, Tensor> m;
  std::map<const Parameter*, Tensor> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update over every trainable parameter that has a
// gradient. All gradients are checked first: a non-finite entry throws
// NonFiniteError naming the parameter and nothing is modified.
void adam_step(ParameterStore& params, const Gradients& grads, AdamState& state, const AdamOptions& options);

// ------------------------------------------------------------------ data

// A sequence with integer class labels, ready for windowing.
struct LabeledSequence {
  std::string name;
  Tensor joints;  // frames x 3N
  std::vector<int> labels;
  std::optional<Tensor> features;  // frames x D

  std::size_t frames() const { return labels.size(); }
};

struct Dataset {
  std::vector<std::string> class_names;
  std::size_t joint_count = 0;
  std::size_t feature_dim = 0;
  std::vector<LabeledSequence> sequences;
};

// Class ids follow `class_names` when given, otherwise the sorted set of labels.
// Unlabeled frames and labels outside `class_names` are errors.
Dataset make_dataset(const std::vector<SkeletonSequence>& sequences, const std::vector<std::string>& names,
                     std::vector<std::string> class_names = {});
Dataset load_dataset(const std::string& dir, std::vector<std::string> class_names = {});

struct Window {
  std::size_t sequence = 0;
  std::size_t start = 0;
  std::size_t valid = 0;  // real frames; the rest is padding
  Sample sample;
};

// Windows start at 0, stride, 2*stride, ... and stop after the first window
// reaching the end of the sequence. Short tails are zero-padded and masked.
std::vector<Window> make_windows(const LabeledSequence& seq, std::size_t sequence_id, std::size_t window,
                                 std::size_t stride, std::size_t joint_count);

// Fold index per sequence id: a seeded shuffle dealt round-robin.
std::vector<std::size_t> kfold_split(std::size_t sequence_count, std::size_t folds, std::uint64_t seed);

// ------------------------------------------------------------------ evaluation

// Per-frame probabilities and predictions for a whole sequence. Windows of
// `stride` are evaluated independently; on overlaps the later window wins.
metrics::SequenceResult predict_sequence(const PgnModel& model, const LabeledSequence& seq, std::size_t window,
                                         std::size_t stride);

metrics::EvalReport evaluate(const PgnModel& model, const Dataset& data, const std::vector<std::size_t>& ids,
                             std::size_t window, std::size_t stride, double iou_threshold);

// ------------------------------------------------------------------ training

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t fold = 0;
  double lr = 0.0;
  double loss = 0.0;
  double map = 0.0;
  double edit = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  bool diverged = false;
};

std::string format_log_header();
std::string format_log_record(const EpochRecord& r);

struct FoldSummary {
  std::size_t fold = 0;
  double lr = 0.0;
  bool diverged = false;
  std::size_t best_epoch = 0;  // 0 = the initial parameters
  metrics::EvalReport best;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::vector<FoldSummary> folds;
  double best_lr = 0.0;
  // lr -> mean best validation mAP over folds (NaN when any fold diverged).
  std::vector<std::pair<double, double>> lr_scores;
  std::vector<std::uint8_t> best_checkpoint;
  double best_map = 0.0;
};

// Called after every epoch; returning false ends the current run early.
using EpochCallback = std::function<bool(const EpochRecord&, const PgnModel&)>;

TrainResult train_run(const TrainConfig& config, const Dataset& data, const EpochCallback& on_epoch = {});

// Model configuration implied by a training config and dataset.
ModelConfig model_config_for(const TrainConfig& config, const Dataset& data);

}  // namespace stpgn
