#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "stpgn/gradcheck_suite.hpp"
#include "stpgn/kv.hpp"
#include "stpgn/metrics.hpp"
#include "stpgn/model.hpp"
#include "stpgn/plot.hpp"
#include "stpgn/reba.hpp"
#include "stpgn/sequence.hpp"
#include "stpgn/synth.hpp"
#include "stpgn/train.hpp"

namespace fs = std::filesystem;
using namespace stpgn;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string out_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

struct Pooled {
  Tensor scores;
  std::vector<int> truth;
};

Pooled pool(const std::vector<metrics::SequenceResult>& results, std::size_t classes) {
  std::size_t frames = 0;
  for (const auto& r : results) frames += r.truth.size();
  Pooled p;
  p.scores = Tensor::matrix(frames, classes);
  std::size_t row = 0;
  for (const auto& r : results) {
    for (std::size_t t = 0; t < r.truth.size(); ++t, ++row)
      for (std::size_t c = 0; c < classes; ++c) p.scores(row, c) = r.scores(t, c);
    p.truth.insert(p.truth.end(), r.truth.begin(), r.truth.end());
  }
  return p;
}

void write_eval_outputs(const std::string& dir, const metrics::EvalReport& report,
                        const std::vector<metrics::SequenceResult>& results, const std::vector<std::string>& names) {
  write_text_file(out_path(dir, "report.csv"), metrics::format_report(report, names));
  write_text_file(out_path(dir, "confusion.csv"), metrics::format_confusion(report.confusion, names));
  write_text_file(out_path(dir, "confusion.svg"), plot::confusion_svg(report.confusion, names));
  const Pooled p = pool(results, names.size());
  write_text_file(out_path(dir, "precision.svg"), plot::precision_curves_svg(p.scores, p.truth, names));
}

std::vector<metrics::SequenceResult> predict_all(const PgnModel& model, const Dataset& data,
                                                 const std::vector<std::size_t>& ids, std::size_t window,
                                                 std::size_t stride) {
  std::vector<metrics::SequenceResult> out;
  for (std::size_t id : ids) out.push_back(predict_sequence(model, data.sequences.at(id), window, stride));
  return out;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  std::string config, data, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg = TrainConfig::load(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.epochs) cfg.epochs = *a.epochs;
  cfg.validate();
  const Dataset data = load_dataset(a.data, cfg.model.class_names);
  fs::create_directories(a.out);

  std::ostringstream log;
  log << format_log_header();
  TrainResult result = train_run(cfg, data, [&](const EpochRecord& r, const PgnModel&) {
    std::cerr << "epoch " << r.epoch << " fold " << r.fold << " lr " << format_double(r.lr) << " loss "
              << format_double(r.loss) << " mAP " << format_double(r.map) << '\n';
    return true;
  });
  for (const auto& r : result.log) log << format_log_record(r);
  write_text_file(out_path(a.out, "log.csv"), log.str());
  write_text_file(out_path(a.out, "config.txt"), cfg.serialize());
  {
    std::ofstream ck(out_path(a.out, "model.ckpt"), std::ios::binary);
    ck.write(reinterpret_cast<const char*>(result.best_checkpoint.data()),
             static_cast<std::streamsize>(result.best_checkpoint.size()));
    if (!ck) throw std::runtime_error("cannot write checkpoint to '" + a.out + "'");
  }

  std::ostringstream folds;
  folds << "fold,lr,diverged,best_epoch,mAP,edit,f1,accuracy\n";
  std::vector<double> maps, edits, f1s;
  const FoldSummary* chosen = nullptr;
  for (const auto& f : result.folds) {
    folds << f.fold << ',' << format_double(f.lr) << ',' << f.diverged << ',' << f.best_epoch << ','
          << format_double(f.best.map) << ',' << format_double(f.best.edit) << ',' << format_double(f.best.f1) << ','
          << format_double(f.best.accuracy) << '\n';
    if (f.lr != result.best_lr) continue;
    maps.push_back(f.best.map);
    edits.push_back(f.best.edit);
    f1s.push_back(f.best.f1);
    if (!chosen || f.best.map > chosen->best.map) chosen = &f;
  }
  write_text_file(out_path(a.out, "folds.csv"), folds.str());

  std::ostringstream summary;
  summary << "metric,mean,std\n";
  auto row = [&](const char* name, const std::vector<double>& v) {
    const auto ms = metrics::mean_std(v);
    summary << name << ',' << format_double(ms.mean) << ',' << format_double(ms.std) << '\n';
  };
  row("mAP", maps);
  row("edit", edits);
  row("f1_overlap", f1s);
  summary << "best_lr," << format_double(result.best_lr) << ",0\n";
  write_text_file(out_path(a.out, "summary.csv"), summary.str());

  if (chosen) {
    std::vector<std::size_t> val_ids;
    if (cfg.validate_on_train) {
      for (std::size_t i = 0; i < data.sequences.size(); ++i) val_ids.push_back(i);
    } else {
      const auto fold_of = kfold_split(data.sequences.size(), cfg.folds, cfg.seed);
      for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] == chosen->fold) val_ids.push_back(i);
    }
    const PgnModel model = load_checkpoint(result.best_checkpoint);
    const auto results = predict_all(model, data, val_ids, cfg.window, cfg.effective_eval_stride());
    const auto report = metrics::evaluate_streams(results, data.class_names.size(), cfg.iou_threshold);
    write_eval_outputs(a.out, report, results, data.class_names);
    write_text_file(out_path(a.out, "training_curve.svg"), plot::training_curve_svg(result.log, chosen->fold, chosen->lr));
    std::cout << metrics::format_report(report, data.class_names);
  }
  std::cout << "wrote " << out_path(a.out, "model.ckpt") << '\n';
  return 0;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
  std::string checkpoint, data, out;
  std::size_t window = 80;
  std::size_t stride = 0;
  double iou = 0.1;
};

int cmd_eval(const EvalArgs& a) {
  const PgnModel model = read_checkpoint_file(a.checkpoint);
  const Dataset data = load_dataset(a.data, model.config().class_names);
  if (data.joint_count != model.hierarchy().joints())
    throw std::runtime_error("data has " + std::to_string(data.joint_count) + " joints, checkpoint expects " +
                             std::to_string(model.hierarchy().joints()));
  std::vector<std::size_t> ids(data.sequences.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  const auto results = predict_all(model, data, ids, a.window, a.stride ? a.stride : a.window);
  const auto report = metrics::evaluate_streams(results, data.class_names.size(), a.iou);
  std::cout << metrics::format_report(report, data.class_names);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_eval_outputs(a.out, report, results, data.class_names);
  }
  return 0;
}

// ------------------------------------------------------------------ infer / reba

reba::JointMap joint_map_for(const SkeletonSequence& seq) {
  return seq.joint_names.empty() ? reba::default_joint_map() : reba::joint_map_from_names(seq.joint_names);
}

std::string score_text(const reba::RebaScore& s) { return s.scorable ? std::to_string(s.final_score) : "NA"; }

struct InferArgs {
  std::string checkpoint, input, tables, mapping;
  std::size_t window = 80;
};

int cmd_infer(const InferArgs& a) {
  const PgnModel model = read_checkpoint_file(a.checkpoint);
  const SkeletonSequence seq = load_sequence(a.input);
  const ModelConfig& mc = model.config();
  if (seq.joint_count != model.hierarchy().joints())
    throw std::runtime_error("input has " + std::to_string(seq.joint_count) + " joints, checkpoint expects " +
                             std::to_string(model.hierarchy().joints()));
  if (mc.fusion && seq.feature_dim != mc.image_feature_dim)
    throw std::runtime_error("input carries " + std::to_string(seq.feature_dim) +
                             " image features, checkpoint expects " + std::to_string(mc.image_feature_dim));
  if (a.window == 0) throw UsageError("--window must be positive");
  const reba::Tables tables = reba::load_tables(a.tables);
  const reba::ActionMapping mapping = reba::load_mapping(a.mapping);
  const reba::JointMap joints = joint_map_for(seq);

  LabeledSequence ls;
  ls.name = a.input;
  ls.joints = seq.joints;
  ls.labels.assign(seq.frames(), 0);
  if (mc.fusion) ls.features = seq.features;
  // Non-overlapping windows in arrival order: every prediction only sees
  // frames up to its own.
  const metrics::SequenceResult pred = predict_sequence(model, ls, a.window, a.window);

  std::ostringstream os;
  os << "frame,label,reba_raw,reba_adjusted,risk,note\n";
  std::size_t unknown = 0;
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    const std::string& label = mc.class_names.at(static_cast<std::size_t>(pred.pred[t]));
    const auto row = seq.joints.values().subspan(t * seq.joints.cols(), seq.joints.cols());
    const reba::RebaScore raw = reba::score_frame(tables, row, joints);
    std::string note;
    std::string adjusted = "NA", risk = "NA";
    if (raw.scorable) {
      const reba::Adjusted adj = reba::adjust_with_action(tables, raw, label, mapping);
      adjusted = std::to_string(adj.score.final_score);
      risk = reba::risk_name(adj.score.risk);
      if (!adj.recognized) {
        ++unknown;
        note = "unmapped label";
      }
    } else {
      note = raw.reason;
    }
    os << seq.frame_index[t] << ',' << label << ',' << score_text(raw) << ',' << adjusted << ',' << risk << ','
       << note << '\n';
  }
  std::cout << os.str();
  if (unknown) std::cerr << "warning: " << unknown << " frames carry labels the mapping does not parse\n";
  return 0;
}

struct RebaArgs {
  std::string input, tables, mapping;
};

int cmd_reba(const RebaArgs& a) {
  const SkeletonSequence seq = load_sequence(a.input);
  const reba::Tables tables = a.tables.empty() ? reba::default_tables() : reba::load_tables(a.tables);
  std::optional<reba::ActionMapping> mapping;
  if (!a.mapping.empty()) mapping = reba::load_mapping(a.mapping);
  const reba::JointMap joints = joint_map_for(seq);
  std::ostringstream os;
  os << "frame,score_a,score_b,final,risk_band,label\n";
  std::size_t unscorable = 0;
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    const auto row = seq.joints.values().subspan(t * seq.joints.cols(), seq.joints.cols());
    reba::RebaScore s = reba::score_frame(tables, row, joints);
    const std::string label = seq.labels[t].empty() ? "-" : seq.labels[t];
    if (s.scorable && mapping && !seq.labels[t].empty()) s = reba::adjust_with_action(tables, s, label, *mapping).score;
    if (!s.scorable) {
      ++unscorable;
      os << seq.frame_index[t] << ",NA,NA,NA,NA," << label << '\n';
      continue;
    }
    os << seq.frame_index[t] << ',' << s.score_a << ',' << s.score_b << ',' << s.final_score << ','
       << reba::risk_name(s.risk) << ',' << label << '\n';
  }
  std::cout << os.str();
  if (unscorable) std::cerr << "warning: " << unscorable << " frames could not be scored\n";
  return 0;
}

// ------------------------------------------------------------------ synth / gradcheck

int cmd_synth(const SynthConfig& cfg, const std::string& out) {
  fs::create_directories(out);
  const auto data = synth_dataset(cfg);
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%04zu.seq", i);
    write_sequence(out_path(out, name), data[i].sequence);
  }
  std::cout << "wrote " << data.size() << " sequences to " << out << '\n';
  return 0;
}

int cmd_gradcheck(bool inject_fault) {
  auto cases = gradcheck::default_cases();
  if (inject_fault) cases.push_back(gradcheck::corrupted_case());
  const auto report = gradcheck::run_cases(cases);
  std::cout << gradcheck::format_report(report);
  return report.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal pyramid graph network for action segmentation and REBA scoring"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model and write log, checkpoint, reports and plots");
  train->add_option("--config", ta.config, "Training configuration file")->required()->check(CLI::ExistingFile);
  train->add_option("--data", ta.data, "Directory of labeled .seq files")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--seed", ta.seed, "Override the configured seed");
  train->add_option("--epochs", ta.epochs, "Override the configured epoch count");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on labeled sequences");
  eval->add_option("--checkpoint", ea.checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", ea.data)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", ea.out, "Also write report, confusion matrix and plots here");
  eval->add_option("--window", ea.window, "Window length in frames")->capture_default_str();
  eval->add_option("--stride", ea.stride, "Window stride (0 = window)")->capture_default_str();
  eval->add_option("--iou", ea.iou, "F1 overlap IoU threshold")->capture_default_str();

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Per-frame labels with raw and action-adjusted REBA scores");
  infer->add_option("--checkpoint", ia.checkpoint)->required()->check(CLI::ExistingFile);
  infer->add_option("--input", ia.input)->required()->check(CLI::ExistingFile);
  infer->add_option("--reba-tables", ia.tables)->required()->check(CLI::ExistingFile);
  infer->add_option("--mapping", ia.mapping)->required()->check(CLI::ExistingFile);
  infer->add_option("--window", ia.window, "Window length in frames")->capture_default_str();

  RebaArgs ra;
  auto* reba_cmd = app.add_subcommand("reba", "Score every frame of a sequence, no model involved");
  reba_cmd->add_option("--input", ra.input)->required()->check(CLI::ExistingFile);
  reba_cmd->add_option("--tables", ra.tables, "Worksheet tables (default: built in)")->check(CLI::ExistingFile);
  reba_cmd->add_option("--mapping", ra.mapping, "Adjust with the ground-truth labels")->check(CLI::ExistingFile);

  SynthConfig sc;
  std::string synth_out;
  bool single_action = false;
  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic dataset");
  synth->add_option("--classes", sc.classes)->capture_default_str();
  synth->add_option("--sequences", sc.sequences)->capture_default_str();
  synth->add_option("--noise", sc.noise)->capture_default_str();
  synth->add_option("--seed", sc.seed)->capture_default_str();
  synth->add_option("--frames", sc.frames)->capture_default_str();
  synth->add_option("--feature-dim", sc.feature_dim, "Per-frame image feature size")->capture_default_str();
  synth->add_flag("--single-action", single_action, "One action per sequence");
  synth->add_option("--out", synth_out)->required();

  bool inject_fault = false;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every op, layer and the toy model");
  gc->add_flag("--inject-fault", inject_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, std::cout, std::cerr);
  }

  try {
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(ea);
    if (*infer) return cmd_infer(ia);
    if (*reba_cmd) return cmd_reba(ra);
    if (*synth) {
      sc.multi_action = !single_action;
      return cmd_synth(sc, synth_out);
    }
    if (*gc) return cmd_gradcheck(inject_fault);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
