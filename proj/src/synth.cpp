#include "stpgn/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "stpgn/graph.hpp"

namespace stpgn {

namespace {

constexpr double kClassSpacing = 0.25;
constexpr double kMotifAmplitude = 0.05;

enum Joint { r_ankle, l_ankle, r_knee, l_knee, r_hip, l_hip, r_wrist, l_wrist, r_elbow, l_elbow, r_shoulder,
             l_shoulder, head };

}  // namespace

std::vector<double> neutral_pose() {
  std::vector<double> p(13 * 3, 0.0);
  auto set = [&](int j, double x, double y, double z) {
    p[3 * j] = x;
    p[3 * j + 1] = y;
    p[3 * j + 2] = z;
  };
  set(r_ankle, -0.1, 0.05, 0.0);
  set(l_ankle, 0.1, 0.05, 0.0);
  set(r_knee, -0.1, 0.5, 0.0);
  set(l_knee, 0.1, 0.5, 0.0);
  set(r_hip, -0.1, 0.95, 0.0);
  set(l_hip, 0.1, 0.95, 0.0);
  set(r_shoulder, -0.2, 1.45, 0.0);
  set(l_shoulder, 0.2, 1.45, 0.0);
  set(r_elbow, -0.2, 1.15, 0.0);
  set(l_elbow, 0.2, 1.15, 0.0);
  set(r_wrist, -0.2, 0.9, 0.0);
  set(l_wrist, 0.2, 0.9, 0.0);
  set(head, 0.0, 1.7, 0.0);
  return p;
}

std::string synth_class_name(std::size_t c) {
  const std::string n = std::to_string(c);
  return "action" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

std::vector<SynthSequence> synth_dataset(const SynthConfig& cfg) {
  if (cfg.classes < 2) throw std::invalid_argument("synth: at least 2 classes are required");
  if (cfg.frames == 0 || cfg.sequences == 0) throw std::invalid_argument("synth: frames and sequences must be positive");
  if (cfg.min_segment == 0 || cfg.max_segment < cfg.min_segment)
    throw std::invalid_argument("synth: need 0 < min_segment <= max_segment");
  if (!(cfg.noise >= 0.0)) throw std::invalid_argument("synth: noise must be non-negative");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto base = neutral_pose();
  const auto names = graph::default_skeleton().joint_names;

  Tensor projection;
  if (cfg.feature_dim > 0) {
    projection = Tensor::matrix(cfg.classes, cfg.feature_dim);
    for (auto& v : projection.values()) v = gauss(rng);
  }

  std::vector<SynthSequence> out;
  for (std::size_t s = 0; s < cfg.sequences; ++s) {
    SynthSequence item;
    // Script the label stream.
    std::vector<int> labels;
    if (!cfg.multi_action) {
      labels.assign(cfg.frames, static_cast<int>(s % cfg.classes));
    } else {
      int prev = -1;
      while (labels.size() < cfg.frames) {
        const std::size_t span = cfg.max_segment - cfg.min_segment + 1;
        std::size_t len = cfg.min_segment + static_cast<std::size_t>(unit(rng) * static_cast<double>(span)) % span;
        const std::size_t left = cfg.frames - labels.size();
        if (len > left || left - len < cfg.min_segment) len = left;
        int c;
        do {
          c = static_cast<int>(static_cast<std::size_t>(unit(rng) * static_cast<double>(cfg.classes)) % cfg.classes);
        } while (c == prev);
        labels.insert(labels.end(), len, c);
        prev = c;
      }
    }
    item.segments = metrics::segment(labels);

    const double off_x = unit(rng) - 0.5, off_z = unit(rng) - 0.5;
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    SkeletonSequence& seq = item.sequence;
    seq.joint_count = 13;
    seq.joint_names = names;
    seq.fps = cfg.fps;
    seq.feature_dim = cfg.feature_dim;
    seq.joints = Tensor::matrix(cfg.frames, 39);
    if (cfg.feature_dim > 0) seq.features = Tensor::matrix(cfg.frames, cfg.feature_dim);
    for (std::size_t t = 0; t < cfg.frames; ++t) {
      const int c = labels[t];
      const double time = static_cast<double>(t);
      const double lift = kClassSpacing * c;
      const double motif = kMotifAmplitude * std::sin(0.3 * (c + 1) * time + phase);
      std::vector<double> p = base;
      p[3 * l_wrist + 1] += lift + motif;
      p[3 * l_elbow + 1] += 0.5 * lift + 0.5 * motif;
      p[3 * l_wrist + 2] -= 0.1 * c;
      p[3 * r_wrist + 2] += kMotifAmplitude * std::cos(0.2 * (c + 1) * time + phase);
      for (std::size_t j = 0; j < 13; ++j) {
        seq.joints(t, 3 * j) = p[3 * j] + off_x + cfg.noise * gauss(rng);
        seq.joints(t, 3 * j + 1) = p[3 * j + 1] + cfg.noise * gauss(rng);
        seq.joints(t, 3 * j + 2) = p[3 * j + 2] + off_z + cfg.noise * gauss(rng);
      }
      for (std::size_t k = 0; k < cfg.feature_dim; ++k)
        seq.features(t, k) = projection(static_cast<std::size_t>(c), k) + cfg.noise * gauss(rng);
      seq.frame_index.push_back(static_cast<std::int64_t>(t));
      seq.labels.push_back(synth_class_name(static_cast<std::size_t>(c)));
    }
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace stpgn
