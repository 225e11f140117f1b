#pragma once

#include <span>
#include <string>
#include <vector>

#include "stpgn/metrics.hpp"
#include "stpgn/train.hpp"

namespace stpgn::plot {

// Standalone SVG documents.
std::string confusion_svg(const metrics::Confusion& c, const std::vector<std::string>& class_names);
// One precision-recall curve per class present in `labels`.
std::string precision_curves_svg(const Tensor& scores, std::span<const int> labels,
                                 const std::vector<std::string>& class_names);
// Training loss and validation mAP per epoch for one fold and learning rate.
std::string training_curve_svg(const std::vector<EpochRecord>& log, std::size_t fold, double lr);

}  // namespace stpgn::plot
