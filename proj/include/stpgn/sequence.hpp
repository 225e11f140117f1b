#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stpgn/tensor.hpp"

namespace stpgn {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kSequenceFormatVersion = 1;

// A recorded skeleton stream.
//
// Text format, one item per line, '#' lines ignored:
//   stpgn-sequence 1
//   joints <N>
//   names <name,name,...>        (optional)
//   fps <rate>
//   coords <convention>
//   feature_dim <D>
//   <frame> <label|-> <3N coordinates> <D features>
// Fields are separated by single spaces; labels may not contain whitespace.
struct SkeletonSequence {
  std::size_t joint_count = 0;
  std::vector<std::string> joint_names;
  double fps = 30.0;
  std::string coords = "camera";
  std::size_t feature_dim = 0;
  std::vector<std::int64_t> frame_index;
  Tensor joints;                    // frames x 3N, joint-major (x, y, z)
  std::vector<std::string> labels;  // "" for unlabeled frames
  Tensor features;                  // frames x feature_dim, empty when feature_dim = 0

  std::size_t frames() const { return frame_index.size(); }
  // Validates shapes and strictly increasing frame indices.
  void validate() const;
};

SkeletonSequence parse_sequence(const std::string& text, const std::string& source = "<text>");
std::string format_sequence(const SkeletonSequence& seq);
SkeletonSequence load_sequence(const std::string& path);
void write_sequence(const std::string& path, const SkeletonSequence& seq);

// Sorted list of *.seq files in a directory.
std::vector<std::string> list_sequence_files(const std::string& dir);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace stpgn
