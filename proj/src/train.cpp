#include "stpgn/train.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "stpgn/kv.hpp"

namespace stpgn {

// ================================================================== config

void TrainConfig::validate() const {
  if (window == 0 || batch_size == 0) throw ConfigError("window and batch_size must be positive");
  if (folds < 2 && !validate_on_train) throw ConfigError("folds must be at least 2 unless validate_on_train is set");
  for (double lr : learning_rates())
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rates must be positive and finite");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw ConfigError("iou_threshold must lie in (0, 1]");
}

namespace {

const std::set<std::string> kTrainKeys = {
    "window",        "batch_size",      "learning_rate", "lr_grid",      "beta1",           "beta2",
    "epsilon",       "weight_decay",    "epochs",        "seed",         "folds",           "cross_validation",
    "validate_on_train", "train_stride", "eval_stride",  "iou_threshold", "levels",         "hidden_size",
    "gcn_channels",  "edge_importance", "multi_loss",    "fusion",       "fusion_dim",      "freeze_backbone",
    "class_names",   "parts_file",      "input_channels", "input_norm"};

TrainConfig parse_impl(const KeyValues& kv, const std::string& base_dir) {
  kv.require_known(kTrainKeys);
  TrainConfig c;
  c.window = kv.get_uint("window", c.window);
  c.batch_size = kv.get_uint("batch_size", c.batch_size);
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.lr_grid = kv.get_doubles("lr_grid");
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.epsilon = kv.get_double("epsilon", c.epsilon);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.epochs = kv.get_uint("epochs", c.epochs);
  c.seed = kv.get_uint("seed", c.seed);
  c.folds = kv.get_uint("folds", c.folds);
  c.cross_validation = kv.get_bool("cross_validation", c.cross_validation);
  c.validate_on_train = kv.get_bool("validate_on_train", c.validate_on_train);
  c.train_stride = kv.get_uint("train_stride", c.train_stride);
  c.eval_stride = kv.get_uint("eval_stride", c.eval_stride);
  c.iou_threshold = kv.get_double("iou_threshold", c.iou_threshold);

  ModelConfig& m = c.model;
  m.input_channels = kv.get_uint("input_channels", m.input_channels);
  m.levels = kv.get_uint("levels", m.levels);
  m.hidden_size = kv.get_uint("hidden_size", m.hidden_size);
  if (kv.has("gcn_channels")) {
    const auto w = kv.get_list("gcn_channels");
    if (w.size() != 3) throw ConfigError("gcn_channels needs 3 comma-separated widths");
    for (std::size_t i = 0; i < 3; ++i) m.gcn_channels[i] = std::stoul(w[i]);
  }
  m.edge_importance = kv.get_bool("edge_importance", m.edge_importance);
  m.input_norm = kv.get_bool("input_norm", m.input_norm);
  m.multi_loss = kv.get_bool("multi_loss", m.multi_loss);
  m.fusion = kv.get_bool("fusion", m.fusion);
  m.fusion_dim = kv.get_uint("fusion_dim", m.fusion_dim);
  m.freeze_backbone = kv.get_bool("freeze_backbone", m.freeze_backbone);
  m.class_names = kv.get_list("class_names");
  if (kv.has("parts_file")) {
    std::filesystem::path p = kv.get("parts_file");
    if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
    m.parts = graph::load_part_spec(p.string(), m.skeleton.joint_count);
  }
  m.seed = c.seed;
  c.validate();
  return c;
}

}  // namespace

TrainConfig TrainConfig::parse(const std::string& text, const std::string& source) {
  return parse_impl(KeyValues::parse(text, source), "");
}

TrainConfig TrainConfig::load(const std::string& path) {
  return parse_impl(KeyValues::load(path), std::filesystem::path(path).parent_path().string());
}

std::string TrainConfig::serialize() const {
  std::vector<std::string> grid;
  for (double lr : lr_grid) grid.push_back(format_double(lr));
  std::ostringstream os;
  os << "window = " << window << '\n'
     << "batch_size = " << batch_size << '\n'
     << "learning_rate = " << format_double(learning_rate) << '\n'
     << "lr_grid = " << join(grid, ",") << '\n'
     << "beta1 = " << format_double(beta1) << '\n'
     << "beta2 = " << format_double(beta2) << '\n'
     << "epsilon = " << format_double(epsilon) << '\n'
     << "weight_decay = " << format_double(weight_decay) << '\n'
     << "epochs = " << epochs << '\n'
     << "seed = " << seed << '\n'
     << "folds = " << folds << '\n'
     << "cross_validation = " << cross_validation << '\n'
     << "validate_on_train = " << validate_on_train << '\n'
     << "train_stride = " << train_stride << '\n'
     << "eval_stride = " << eval_stride << '\n'
     << "iou_threshold = " << format_double(iou_threshold) << '\n'
     << "input_channels = " << model.input_channels << '\n'
     << "levels = " << model.levels << '\n'
     << "hidden_size = " << model.hidden_size << '\n'
     << "gcn_channels = " << model.gcn_channels[0] << ',' << model.gcn_channels[1] << ',' << model.gcn_channels[2]
     << '\n'
     << "edge_importance = " << model.edge_importance << '\n'
     << "input_norm = " << model.input_norm << '\n'
     << "multi_loss = " << model.multi_loss << '\n'
     << "fusion = " << model.fusion << '\n'
     << "fusion_dim = " << model.fusion_dim << '\n'
     << "freeze_backbone = " << model.freeze_backbone << '\n'
     << "class_names = " << join(model.class_names, ",") << '\n';
  return os.str();
}

// ================================================================== Adam

void adam_step(ParameterStore& params, const Gradients& grads, AdamState& state, const AdamOptions& o) {
  for (Parameter* p : params.all()) {
    if (!p->trainable) continue;
    const Tensor* g = grads.find(*p);
    if (!g) continue;
    if (g->shape() != p->value.shape())
      throw ShapeError("adam_step: gradient " + shape_string(g->shape()) + " for parameter '" + p->name + "' " +
                       shape_string(p->value.shape()));
    for (std::size_t i = 0; i < g->size(); ++i)
      if (!std::isfinite((*g)[i]))
        throw NonFiniteError("adam_step: non-finite gradient in '" + p->name + "' at index " + std::to_string(i));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (Parameter* p : params.all()) {
    if (!p->trainable) continue;
    const Tensor* g = grads.find(*p);
    if (!g) continue;
    auto [mit, mnew] = state.m.try_emplace(p, p->value.shape());
    auto [vit, vnew] = state.v.try_emplace(p, p->value.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    double* w = p->value.data();
    for (std::size_t i = 0; i < g->size(); ++i) {
      const double gi = (*g)[i] + o.weight_decay * w[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= o.learning_rate * mhat / (std::sqrt(vhat) + o.epsilon);
    }
  }
}

// ================================================================== data

Dataset make_dataset(const std::vector<SkeletonSequence>& sequences, const std::vector<std::string>& names,
                     std::vector<std::string> class_names) {
  if (sequences.empty()) throw std::invalid_argument("make_dataset: no sequences");
  Dataset d;
  d.joint_count = sequences.front().joint_count;
  d.feature_dim = sequences.front().feature_dim;
  if (class_names.empty()) {
    std::set<std::string> seen;
    for (const auto& s : sequences)
      for (const auto& l : s.labels)
        if (!l.empty()) seen.insert(l);
    class_names.assign(seen.begin(), seen.end());
  }
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < class_names.size(); ++i) index[class_names[i]] = static_cast<int>(i);
  d.class_names = std::move(class_names);

  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& seq = sequences[s];
    const std::string name = s < names.size() ? names[s] : std::to_string(s);
    if (seq.joint_count != d.joint_count)
      throw std::invalid_argument(name + ": " + std::to_string(seq.joint_count) + " joints, dataset has " +
                                  std::to_string(d.joint_count));
    if (seq.feature_dim != d.feature_dim) throw std::invalid_argument(name + ": feature_dim differs from dataset");
    LabeledSequence ls;
    ls.name = name;
    ls.joints = seq.joints;
    for (std::size_t t = 0; t < seq.frames(); ++t) {
      auto it = index.find(seq.labels[t]);
      if (it == index.end())
        throw std::invalid_argument(name + ": frame " + std::to_string(seq.frame_index[t]) +
                                    (seq.labels[t].empty() ? " is unlabeled" : " has unknown label '" + seq.labels[t] + "'"));
      ls.labels.push_back(it->second);
    }
    if (seq.feature_dim > 0) ls.features = seq.features;
    d.sequences.push_back(std::move(ls));
  }
  return d;
}

Dataset load_dataset(const std::string& dir, std::vector<std::string> class_names) {
  std::vector<SkeletonSequence> seqs;
  std::vector<std::string> names;
  for (const auto& path : list_sequence_files(dir)) {
    seqs.push_back(load_sequence(path));
    names.push_back(std::filesystem::path(path).stem().string());
  }
  if (seqs.empty()) throw std::invalid_argument("no .seq files in '" + dir + "'");
  return make_dataset(seqs, names, std::move(class_names));
}

std::vector<Window> make_windows(const LabeledSequence& seq, std::size_t sequence_id, std::size_t window,
                                 std::size_t stride, std::size_t joint_count) {
  if (window == 0 || stride == 0) throw std::invalid_argument("make_windows: window and stride must be positive");
  const std::size_t frames = seq.frames();
  if (frames == 0) throw std::invalid_argument("make_windows: empty sequence '" + seq.name + "'");
  if (seq.joints.cols() != 3 * joint_count) throw ShapeError("make_windows: joint block width mismatch");
  std::vector<Window> out;
  for (std::size_t start = 0;; start += stride) {
    Window w;
    w.sequence = sequence_id;
    w.start = start;
    w.valid = std::min(window, frames - start);
    Sample& s = w.sample;
    s.input = Tensor({3, joint_count, window});
    s.labels.assign(window, 0);
    s.mask.assign(window, 0.0);
    for (std::size_t t = 0; t < w.valid; ++t) {
      for (std::size_t n = 0; n < joint_count; ++n)
        for (std::size_t c = 0; c < 3; ++c) s.input[(c * joint_count + n) * window + t] = seq.joints(start + t, 3 * n + c);
      s.labels[t] = seq.labels[start + t];
      s.mask[t] = 1.0;
    }
    if (seq.features) {
      const std::size_t dim = seq.features->cols();
      Tensor img = Tensor::matrix(window, dim);
      for (std::size_t t = 0; t < w.valid; ++t)
        for (std::size_t k = 0; k < dim; ++k) img(t, k) = (*seq.features)(start + t, k);
      s.image = std::move(img);
    }
    out.push_back(std::move(w));
    if (start + window >= frames) break;
  }
  return out;
}

std::vector<std::size_t> kfold_split(std::size_t sequence_count, std::size_t folds, std::uint64_t seed) {
  if (folds == 0) throw std::invalid_argument("kfold_split: folds must be positive");
  if (sequence_count < folds)
    throw std::invalid_argument("kfold_split: " + std::to_string(sequence_count) + " sequences cannot fill " +
                                std::to_string(folds) + " folds");
  std::vector<std::size_t> order(sequence_count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold(sequence_count);
  for (std::size_t i = 0; i < sequence_count; ++i) fold[order[i]] = i % folds;
  return fold;
}

// ================================================================== evaluation

metrics::SequenceResult predict_sequence(const PgnModel& model, const LabeledSequence& seq, std::size_t window,
                                         std::size_t stride) {
  const std::size_t classes = model.config().class_count;
  metrics::SequenceResult r;
  r.truth = seq.labels;
  r.pred.assign(seq.frames(), 0);
  r.scores = Tensor::matrix(seq.frames(), classes);
  for (const auto& w : make_windows(seq, 0, window, stride, model.hierarchy().joints())) {
    const Prediction p = predict(model.infer_logits(w.sample));
    for (std::size_t t = 0; t < w.valid; ++t) {
      r.pred[w.start + t] = p.labels[t];
      for (std::size_t c = 0; c < classes; ++c) r.scores(w.start + t, c) = p.probabilities(t, c);
    }
  }
  return r;
}

metrics::EvalReport evaluate(const PgnModel& model, const Dataset& data, const std::vector<std::size_t>& ids,
                             std::size_t window, std::size_t stride, double iou_threshold) {
  std::vector<metrics::SequenceResult> results;
  for (std::size_t id : ids) results.push_back(predict_sequence(model, data.sequences.at(id), window, stride));
  return metrics::evaluate_streams(results, model.config().class_count, iou_threshold);
}

// ================================================================== training

std::string format_log_header() { return "epoch,fold,lr,loss,mAP,edit,f1,accuracy\n"; }

std::string format_log_record(const EpochRecord& r) {
  std::ostringstream os;
  os << r.epoch << ',' << r.fold << ',' << format_double(r.lr) << ',' << format_double(r.loss) << ','
     << format_double(r.map) << ',' << format_double(r.edit) << ',' << format_double(r.f1) << ','
     << format_double(r.accuracy) << '\n';
  return os.str();
}

ModelConfig model_config_for(const TrainConfig& config, const Dataset& data) {
  ModelConfig m = config.model;
  if (data.joint_count != m.skeleton.joint_count)
    throw ConfigError("dataset has " + std::to_string(data.joint_count) + " joints, skeleton has " +
                      std::to_string(m.skeleton.joint_count));
  if (!m.class_names.empty() && m.class_names != data.class_names)
    throw ConfigError("configured class_names differ from the dataset's classes");
  m.class_names = data.class_names;
  m.class_count = data.class_names.size();
  if (m.fusion) {
    if (data.feature_dim == 0) throw ConfigError("fusion is enabled but the sequences carry no image features");
    m.image_feature_dim = data.feature_dim;
  }
  m.seed = config.seed;
  m.validate();
  return m;
}

namespace {

struct RunOutcome {
  FoldSummary summary;
  std::vector<std::uint8_t> checkpoint;
};

RunOutcome run_fold(const TrainConfig& config, const ModelConfig& mc, const Dataset& data,
                    const std::vector<std::size_t>& train_ids, const std::vector<std::size_t>& val_ids,
                    std::size_t fold, std::size_t lr_index, double lr, std::vector<EpochRecord>& log,
                    const EpochCallback& on_epoch) {
  PgnModel model(mc);
  std::vector<Window> windows;
  for (std::size_t id : train_ids) {
    auto w = make_windows(data.sequences[id], id, config.window, config.effective_train_stride(), data.joint_count);
    std::move(w.begin(), w.end(), std::back_inserter(windows));
  }
  {
    std::vector<const Sample*> all;
    for (const auto& w : windows) all.push_back(&w.sample);
    model.fit_input_norm(all);
  }
  std::mt19937_64 rng(config.seed ^ (0x9e3779b97f4a7c15ULL * (fold + 1)) ^ (0xbf58476d1ce4e5b9ULL * (lr_index + 1)));
  AdamState adam;
  const AdamOptions opts{lr, config.beta1, config.beta2, config.epsilon, config.weight_decay};
  auto validate = [&] {
    return evaluate(model, data, val_ids, config.window, config.effective_eval_stride(), config.iou_threshold);
  };

  RunOutcome out;
  out.summary.fold = fold;
  out.summary.lr = lr;
  out.summary.best = validate();
  out.checkpoint = save_checkpoint(model);

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    bool diverged = false;
    for (std::size_t b = 0; b < order.size() && !diverged; b += config.batch_size) {
      std::vector<const Sample*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i)
        batch.push_back(&windows[order[i]].sample);
      Gradients grads;
      try {
        const double loss = model.batch_gradients(batch, grads);
        if (!std::isfinite(loss)) throw NonFiniteError("non-finite training loss");
        adam_step(model.parameters(), grads, adam, opts);
        model.project_constraints();
        loss_sum += loss * static_cast<double>(batch.size());
      } catch (const NonFiniteError&) {
        diverged = true;
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.fold = fold;
    rec.lr = lr;
    if (diverged) {
      rec.loss = std::numeric_limits<double>::quiet_NaN();
      rec.map = rec.edit = rec.f1 = rec.accuracy = std::numeric_limits<double>::quiet_NaN();
      rec.diverged = true;
      out.summary.diverged = true;
      log.push_back(rec);
      break;
    }
    rec.loss = loss_sum / static_cast<double>(windows.size());
    const metrics::EvalReport report = validate();
    rec.map = report.map;
    rec.edit = report.edit;
    rec.f1 = report.f1;
    rec.accuracy = report.accuracy;
    log.push_back(rec);
    if (report.map > out.summary.best.map) {
      out.summary.best = report;
      out.summary.best_epoch = epoch;
      out.checkpoint = save_checkpoint(model);
    }
    if (on_epoch && !on_epoch(rec, model)) break;
  }
  return out;
}

}  // namespace

TrainResult train_run(const TrainConfig& config, const Dataset& data, const EpochCallback& on_epoch) {
  config.validate();
  const ModelConfig mc = model_config_for(config, data);
  const std::size_t n = data.sequences.size();

  std::vector<std::size_t> fold_of;
  if (!config.validate_on_train) fold_of = kfold_split(n, config.folds, config.seed);
  const std::size_t runs = config.cross_validation && !config.validate_on_train ? config.folds : 1;

  TrainResult result;
  result.best_map = -1.0;
  const auto rates = config.learning_rates();
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t li = 0; li < rates.size(); ++li) {
    std::vector<std::uint8_t> lr_best_checkpoint;
    double lr_best_map = -1.0;
    double score_sum = 0.0;
    std::size_t score_count = 0;
    bool any_diverged = false;
    for (std::size_t fold = 0; fold < runs; ++fold) {
      std::vector<std::size_t> train_ids, val_ids;
      for (std::size_t i = 0; i < n; ++i) {
        if (config.validate_on_train) {
          train_ids.push_back(i);
          val_ids.push_back(i);
        } else {
          (fold_of[i] == fold ? val_ids : train_ids).push_back(i);
        }
      }
      RunOutcome o = run_fold(config, mc, data, train_ids, val_ids, fold, li, rates[li], result.log, on_epoch);
      if (o.summary.diverged) {
        any_diverged = true;
      } else {
        score_sum += o.summary.best.map;
        ++score_count;
      }
      if (o.summary.best.map > lr_best_map) {
        lr_best_map = o.summary.best.map;
        lr_best_checkpoint = std::move(o.checkpoint);
      }
      result.folds.push_back(std::move(o.summary));
    }
    if (any_diverged) score_count = 0;
    const double score = score_count ? score_sum / static_cast<double>(score_count)
                                     : std::numeric_limits<double>::quiet_NaN();
    result.lr_scores.emplace_back(rates[li], score);
    if (score_count && score > best_score) {
      best_score = score;
      result.best_lr = rates[li];
      result.best_map = lr_best_map;
      result.best_checkpoint = std::move(lr_best_checkpoint);
    }
  }
  if (result.best_checkpoint.empty()) {
    // Every run diverged; keep the initialization so callers still get a model.
    result.best_lr = rates.front();
    result.best_checkpoint = save_checkpoint(PgnModel(mc));
  }
  return result;
}

}  // namespace stpgn
