#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stpgn/tensor.hpp"

namespace stpgn::metrics {

struct Segment {
  int label = 0;
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive

  std::size_t length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

using SegmentSequence = std::vector<Segment>;

// Maximal runs of equal labels. Throws std::invalid_argument on empty input.
SegmentSequence segment(std::span<const int> frame_labels);
std::vector<int> expand(const SegmentSequence& segments);
// Contiguous from frame 0, non-empty, adjacent labels distinct.
void validate_segments(const SegmentSequence& segments);

// Ranks items by score (descending, ties by index) and averages the
// precision at every positive. Returns 0 when there are no positives.
double average_precision(std::span<const double> scores, std::span<const unsigned char> positive);

// Frame-wise mean average precision in percent. `scores` is frames x classes
// with rows summing to 1. Classes absent from `labels` are left out of the
// mean; their per-class entry is NaN.
double frame_map(const Tensor& scores, std::span<const int> labels, std::vector<double>* per_class = nullptr);

std::size_t levenshtein(std::span<const int> a, std::span<const int> b);
// 100 * (1 - lev(pred, truth) / max(|pred|, |truth|)) on segment labels.
double edit_score(const SegmentSequence& pred, const SegmentSequence& truth);

double temporal_iou(const Segment& a, const Segment& b);
// Number of one-to-one same-label pairs with IoU >= threshold, matching each
// predicted segment (in order) to the earliest unmatched truth segment.
std::size_t overlap_matches(const SegmentSequence& pred, const SegmentSequence& truth, double iou_threshold);
// F1 in percent over overlap_matches.
double f1_overlap(const SegmentSequence& pred, const SegmentSequence& truth, double iou_threshold = 0.1);

class Confusion {
 public:
  explicit Confusion(std::size_t classes = 0) : classes_(classes), counts_(classes * classes, 0) {}
  std::size_t classes() const { return classes_; }
  std::size_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * classes_ + pred]; }
  std::size_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * classes_ + pred]; }
  std::size_t total() const;
  std::size_t row_sum(std::size_t truth) const;
  // Rows divided by their sums; empty rows stay zero.
  Tensor row_normalized() const;
  void add(const Confusion& other);

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
};

Confusion confusion(std::span<const int> pred, std::span<const int> truth, std::size_t classes);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for fewer than two values
};
MeanStd mean_std(std::span<const double> values);

struct EvalReport {
  double map = 0.0;
  double edit = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::vector<double> per_class_ap;
  Confusion confusion;
  std::size_t frames = 0;
};

// One predicted stream per sequence, with matching truth and scores.
struct SequenceResult {
  std::vector<int> truth;
  std::vector<int> pred;
  Tensor scores;  // frames x classes
};

// mAP pools frames over all sequences; Edit and F1 are averaged over sequences.
EvalReport evaluate_streams(const std::vector<SequenceResult>& results, std::size_t classes,
                            double iou_threshold = 0.1);

// "metric,value" lines followed by per-class AP rows.
std::string format_report(const EvalReport& report, const std::vector<std::string>& class_names);
std::string format_confusion(const Confusion& c, const std::vector<std::string>& class_names);

}  // namespace stpgn::metrics
