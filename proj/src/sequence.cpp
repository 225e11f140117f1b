#include "stpgn/sequence.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stpgn/kv.hpp"

namespace stpgn {

namespace {

std::vector<std::string> tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& msg) {
  throw FormatError(source + ":" + std::to_string(line) + ": " + msg);
}

std::size_t parse_count(const std::string& s, const std::string& source, std::size_t line) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) fail(source, line, "expected a count, got '" + s + "'");
  return v;
}

}  // namespace

void SkeletonSequence::validate() const {
  const std::size_t n = frames();
  if (joint_count == 0) throw FormatError("sequence has no joints");
  if (!joint_names.empty() && joint_names.size() != joint_count)
    throw FormatError("sequence lists " + std::to_string(joint_names.size()) + " joint names for " +
                      std::to_string(joint_count) + " joints");
  if (joints.rows() != n || joints.cols() != 3 * joint_count || (n == 0 && joints.size() != 0))
    throw FormatError("sequence joint block " + shape_string(joints.shape()) + " does not match " +
                      std::to_string(n) + " frames x " + std::to_string(3 * joint_count));
  if (labels.size() != n) throw FormatError("sequence label count differs from frame count");
  if (feature_dim > 0 && (features.rows() != n || features.cols() != feature_dim))
    throw FormatError("sequence feature block " + shape_string(features.shape()) + " does not match feature_dim " +
                      std::to_string(feature_dim));
  for (std::size_t t = 1; t < n; ++t)
    if (frame_index[t] <= frame_index[t - 1])
      throw FormatError("frame indices must increase strictly (frame " + std::to_string(frame_index[t]) + ")");
}

SkeletonSequence parse_sequence(const std::string& text, const std::string& source) {
  SkeletonSequence seq;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_version = false, have_joints = false;
  std::vector<double> coords, feats;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tok = tokens(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (!have_version) {
      if (tok.size() != 2 || tok[0] != "stpgn-sequence") fail(source, lineno, "missing 'stpgn-sequence <version>' header");
      const std::size_t version = parse_count(tok[1], source, lineno);
      if (version != static_cast<std::size_t>(kSequenceFormatVersion))
        fail(source, lineno, "unsupported sequence format version " + tok[1] + " (this build reads " +
                                 std::to_string(kSequenceFormatVersion) + ")");
      have_version = true;
      continue;
    }
    const std::string& key = tok[0];
    if (key == "joints" || key == "names" || key == "fps" || key == "coords" || key == "feature_dim") {
      if (!seq.frame_index.empty()) fail(source, lineno, "header line '" + key + "' after frame records");
      if (tok.size() != 2) fail(source, lineno, "header '" + key + "' takes one value");
      if (key == "joints") {
        seq.joint_count = parse_count(tok[1], source, lineno);
        have_joints = true;
      } else if (key == "names") {
        seq.joint_names = split(tok[1], ',');
      } else if (key == "fps") {
        try {
          seq.fps = parse_double(tok[1]);
        } catch (const std::invalid_argument&) {
          fail(source, lineno, "bad fps '" + tok[1] + "'");
        }
      } else if (key == "coords") {
        seq.coords = tok[1];
      } else {
        seq.feature_dim = parse_count(tok[1], source, lineno);
      }
      continue;
    }
    if (!have_joints) fail(source, lineno, "frame record before 'joints' header");
    const std::size_t want = 2 + 3 * seq.joint_count + seq.feature_dim;
    if (tok.size() != want)
      fail(source, lineno, "expected " + std::to_string(3 * seq.joint_count) + " coordinates and " +
                               std::to_string(seq.feature_dim) + " features, found " +
                               std::to_string(tok.size() < 2 ? 0 : tok.size() - 2) + " values");
    std::int64_t frame = 0;
    {
      auto [ptr, ec] = std::from_chars(tok[0].data(), tok[0].data() + tok[0].size(), frame);
      if (ec != std::errc() || ptr != tok[0].data() + tok[0].size())
        fail(source, lineno, "bad frame index '" + tok[0] + "'");
    }
    if (!seq.frame_index.empty() && frame <= seq.frame_index.back())
      fail(source, lineno, "frame index " + tok[0] + " does not increase");
    seq.frame_index.push_back(frame);
    seq.labels.push_back(tok[1] == "-" ? std::string() : tok[1]);
    for (std::size_t i = 0; i < 3 * seq.joint_count + seq.feature_dim; ++i) {
      double v = 0.0;
      try {
        v = parse_double(tok[2 + i]);
      } catch (const std::invalid_argument&) {
        fail(source, lineno, "bad number '" + tok[2 + i] + "'");
      }
      (i < 3 * seq.joint_count ? coords : feats).push_back(v);
    }
  }
  if (!have_version) throw FormatError(source + ": empty sequence file");
  if (!have_joints) throw FormatError(source + ": missing 'joints' header");
  const std::size_t n = seq.frame_index.size();
  seq.joints = Tensor({n, 3 * seq.joint_count}, std::move(coords));
  if (seq.feature_dim > 0) seq.features = Tensor({n, seq.feature_dim}, std::move(feats));
  try {
    seq.validate();
  } catch (const FormatError& e) {
    throw FormatError(source + ": " + e.what());
  }
  return seq;
}

std::string format_sequence(const SkeletonSequence& seq) {
  seq.validate();
  std::string out;
  out += "stpgn-sequence " + std::to_string(kSequenceFormatVersion) + "\n";
  out += "joints " + std::to_string(seq.joint_count) + "\n";
  if (!seq.joint_names.empty()) out += "names " + join(seq.joint_names, ",") + "\n";
  out += "fps " + format_double(seq.fps) + "\n";
  out += "coords " + seq.coords + "\n";
  out += "feature_dim " + std::to_string(seq.feature_dim) + "\n";
  for (std::size_t t = 0; t < seq.frames(); ++t) {
    out += std::to_string(seq.frame_index[t]);
    out += ' ';
    out += seq.labels[t].empty() ? "-" : seq.labels[t];
    for (std::size_t i = 0; i < seq.joints.cols(); ++i) {
      out += ' ';
      out += format_double(seq.joints(t, i));
    }
    for (std::size_t i = 0; i < seq.feature_dim; ++i) {
      out += ' ';
      out += format_double(seq.features(t, i));
    }
    out += '\n';
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

SkeletonSequence load_sequence(const std::string& path) { return parse_sequence(read_text_file(path), path); }

void write_sequence(const std::string& path, const SkeletonSequence& seq) { write_text_file(path, format_sequence(seq)); }

std::vector<std::string> list_sequence_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir + "' is not a directory");
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".seq") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace stpgn
