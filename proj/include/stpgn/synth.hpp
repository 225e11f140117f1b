#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stpgn/metrics.hpp"
#include "stpgn/sequence.hpp"

namespace stpgn {

struct SynthConfig {
  std::size_t classes = 2;
  std::size_t sequences = 20;
  double noise = 0.05;
  std::uint64_t seed = 1;
  std::size_t frames = 120;
  // Scripted multi-action sequences: segment lengths drawn from this range.
  std::size_t min_segment = 20;
  std::size_t max_segment = 60;
  // false: each sequence holds a single action.
  bool multi_action = true;
  std::size_t feature_dim = 0;  // optional per-frame "image" features
  double fps = 12.0;
};

struct SynthSequence {
  SkeletonSequence sequence;
  metrics::SegmentSequence segments;  // class ids, as scripted
};

// Upright 13-joint pose in metres, y up, facing -z.
std::vector<double> neutral_pose();

std::string synth_class_name(std::size_t c);

// Class c lifts the left arm by a class-specific height and adds a
// class-specific sinusoid. At zero noise the left wrist height alone separates
// the classes; Gaussian noise of `noise` is added to every coordinate.
std::vector<SynthSequence> synth_dataset(const SynthConfig& config);

}  // namespace stpgn
