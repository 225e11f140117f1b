#include "stpgn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "stpgn/kv.hpp"

namespace stpgn::metrics {

SegmentSequence segment(std::span<const int> frame_labels) {
  if (frame_labels.empty()) throw std::invalid_argument("segment: empty label stream");
  SegmentSequence out;
  std::size_t start = 0;
  for (std::size_t t = 1; t <= frame_labels.size(); ++t) {
    if (t == frame_labels.size() || frame_labels[t] != frame_labels[start]) {
      out.push_back({frame_labels[start], start, t});
      start = t;
    }
  }
  return out;
}

std::vector<int> expand(const SegmentSequence& segments) {
  std::vector<int> out;
  for (const auto& s : segments) out.insert(out.end(), s.length(), s.label);
  return out;
}

void validate_segments(const SegmentSequence& segments) {
  std::size_t at = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i];
    if (s.start != at || s.end <= s.start)
      throw std::invalid_argument("segment " + std::to_string(i) + " is empty or not contiguous");
    if (i > 0 && segments[i - 1].label == s.label)
      throw std::invalid_argument("segments " + std::to_string(i - 1) + " and " + std::to_string(i) +
                                  " share a label");
    at = s.end;
  }
}

double average_precision(std::span<const double> scores, std::span<const unsigned char> positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("average_precision: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!positive[order[r]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return hits ? sum / static_cast<double>(hits) : 0.0;
}

double frame_map(const Tensor& scores, std::span<const int> labels, std::vector<double>* per_class) {
  if (scores.rank() != 2 || scores.rows() != labels.size())
    throw ShapeError("frame_map: scores " + shape_string(scores.shape()) + " vs " + std::to_string(labels.size()) +
                     " labels");
  if (labels.empty()) throw std::invalid_argument("frame_map: no frames");
  const std::size_t frames = scores.rows(), classes = scores.cols();
  for (std::size_t t = 0; t < frames; ++t) {
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += scores(t, c);
    if (std::abs(s - 1.0) > 1e-6)
      throw std::invalid_argument("frame_map: scores in row " + std::to_string(t) + " sum to " + format_double(s));
  }
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= classes)
      throw std::invalid_argument("frame_map: label " + std::to_string(l) + " out of range");

  std::vector<double> ap(classes, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> column(frames);
  std::vector<unsigned char> positive(frames);
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    bool any = false;
    for (std::size_t t = 0; t < frames; ++t) {
      column[t] = scores(t, c);
      positive[t] = labels[t] == static_cast<int>(c);
      any |= positive[t] != 0;
    }
    if (!any) continue;
    ap[c] = 100.0 * average_precision(column, positive);
    total += ap[c];
    ++present;
  }
  if (per_class) *per_class = ap;
  return total / static_cast<double>(present);
}

std::size_t levenshtein(std::span<const int> a, std::span<const int> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double edit_score(const SegmentSequence& pred, const SegmentSequence& truth) {
  const std::size_t longest = std::max(pred.size(), truth.size());
  if (longest == 0) return 100.0;
  std::vector<int> p, t;
  for (const auto& s : pred) p.push_back(s.label);
  for (const auto& s : truth) t.push_back(s.label);
  return 100.0 * (1.0 - static_cast<double>(levenshtein(p, t)) / static_cast<double>(longest));
}

double temporal_iou(const Segment& a, const Segment& b) {
  const std::size_t lo = std::max(a.start, b.start), hi = std::min(a.end, b.end);
  const double inter = hi > lo ? static_cast<double>(hi - lo) : 0.0;
  const double uni = static_cast<double>(std::max(a.end, b.end) - std::min(a.start, b.start));
  return uni > 0.0 ? inter / uni : 0.0;
}

std::size_t overlap_matches(const SegmentSequence& pred, const SegmentSequence& truth, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    throw std::invalid_argument("f1_overlap: threshold must lie in (0, 1]");
  std::vector<bool> used(truth.size(), false);
  std::size_t matched = 0;
  for (const auto& p : pred) {
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (used[j] || truth[j].label != p.label) continue;
      if (temporal_iou(p, truth[j]) >= iou_threshold) {
        used[j] = true;
        ++matched;
        break;
      }
    }
  }
  return matched;
}

double f1_overlap(const SegmentSequence& pred, const SegmentSequence& truth, double iou_threshold) {
  const std::size_t tp = overlap_matches(pred, truth, iou_threshold);
  if (pred.empty() && truth.empty()) return 100.0;
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(tp) / static_cast<double>(truth.size());
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

std::size_t Confusion::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }

std::size_t Confusion::row_sum(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < classes_; ++p) s += at(truth, p);
  return s;
}

Tensor Confusion::row_normalized() const {
  Tensor out = Tensor::matrix(classes_, classes_);
  for (std::size_t t = 0; t < classes_; ++t) {
    const std::size_t s = row_sum(t);
    if (s == 0) continue;
    for (std::size_t p = 0; p < classes_; ++p) out(t, p) = static_cast<double>(at(t, p)) / static_cast<double>(s);
  }
  return out;
}

void Confusion::add(const Confusion& other) {
  if (other.classes_ != classes_) throw std::invalid_argument("Confusion::add: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

Confusion confusion(std::span<const int> pred, std::span<const int> truth, std::size_t classes) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("confusion: " + std::to_string(pred.size()) + " predictions for " +
                                std::to_string(truth.size()) + " truth frames");
  Confusion c(classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0 || static_cast<std::size_t>(pred[i]) >= classes ||
        static_cast<std::size_t>(truth[i]) >= classes)
      throw std::invalid_argument("confusion: label out of range at frame " + std::to_string(i));
    ++c.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(pred[i]));
  }
  return c;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return r;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return r;
}

EvalReport evaluate_streams(const std::vector<SequenceResult>& results, std::size_t classes, double iou_threshold) {
  EvalReport report;
  report.confusion = Confusion(classes);
  if (results.empty()) return report;
  std::size_t frames = 0;
  for (const auto& r : results) frames += r.truth.size();
  Tensor pooled = Tensor::matrix(frames, classes);
  std::vector<int> truth;
  truth.reserve(frames);
  std::size_t row = 0, correct = 0;
  double edit = 0.0, f1 = 0.0;
  for (const auto& r : results) {
    if (r.pred.size() != r.truth.size() || r.scores.rows() != r.truth.size() || r.scores.cols() != classes)
      throw ShapeError("evaluate_streams: prediction, truth and score lengths differ");
    for (std::size_t t = 0; t < r.truth.size(); ++t, ++row) {
      for (std::size_t c = 0; c < classes; ++c) pooled(row, c) = r.scores(t, c);
      correct += r.pred[t] == r.truth[t];
    }
    truth.insert(truth.end(), r.truth.begin(), r.truth.end());
    report.confusion.add(confusion(r.pred, r.truth, classes));
    const auto ps = segment(r.pred), ts = segment(r.truth);
    edit += edit_score(ps, ts);
    f1 += f1_overlap(ps, ts, iou_threshold);
  }
  report.frames = frames;
  report.map = frame_map(pooled, truth, &report.per_class_ap);
  report.edit = edit / static_cast<double>(results.size());
  report.f1 = f1 / static_cast<double>(results.size());
  report.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(frames);
  return report;
}

std::string format_report(const EvalReport& report, const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os << "metric,value\n";
  os << "mAP," << format_double(report.map) << '\n';
  os << "edit," << format_double(report.edit) << '\n';
  os << "f1_overlap," << format_double(report.f1) << '\n';
  os << "accuracy," << format_double(report.accuracy) << '\n';
  os << "frames," << report.frames << '\n';
  for (std::size_t c = 0; c < report.per_class_ap.size(); ++c) {
    const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
    os << "ap:" << name << ',' << format_double(report.per_class_ap[c]) << '\n';
  }
  return os.str();
}

std::string format_confusion(const Confusion& c, const std::vector<std::string>& class_names) {
  auto name = [&](std::size_t i) { return i < class_names.size() ? class_names[i] : std::to_string(i); };
  std::ostringstream os;
  os << "truth\\pred";
  for (std::size_t p = 0; p < c.classes(); ++p) os << ',' << name(p);
  os << '\n';
  for (std::size_t t = 0; t < c.classes(); ++t) {
    os << name(t);
    for (std::size_t p = 0; p < c.classes(); ++p) os << ',' << c.at(t, p);
    os << '\n';
  }
  return os.str();
}

}  // namespace stpgn::metrics
