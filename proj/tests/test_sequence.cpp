#include <doctest.h>

#include <cmath>
#include <set>

#include "stpgn/graph.hpp"
#include "stpgn/sequence.hpp"
#include "stpgn/synth.hpp"
#include "stpgn/train.hpp"
#include "test_util.hpp"

using namespace stpgn;

namespace {

SkeletonSequence two_joint(std::size_t frames) {
  SkeletonSequence s;
  s.joint_count = 2;
  s.joint_names = {"a", "b"};
  s.fps = 12.5;
  s.feature_dim = 1;
  s.joints = Tensor::matrix(frames, 6);
  s.features = Tensor::matrix(frames, 1);
  for (std::size_t t = 0; t < frames; ++t) {
    s.frame_index.push_back(static_cast<std::int64_t>(2 * t + 5));
    for (std::size_t k = 0; k < 6; ++k) s.joints(t, k) = 0.1 * static_cast<double>(t) + 1.0 / 3.0 * k - 1e-17;
    s.features(t, 0) = std::sqrt(static_cast<double>(t));
    s.labels.push_back(t == 1 ? "" : "walk");
  }
  return s;
}

}  // namespace

TEST_CASE("sequence text round trip is bit-identical") {
  const SkeletonSequence s = two_joint(4);
  const SkeletonSequence back = parse_sequence(format_sequence(s));
  CHECK(back.joint_count == 2);
  CHECK(back.joint_names == s.joint_names);
  CHECK(back.fps == s.fps);
  CHECK(back.frame_index == s.frame_index);
  CHECK(back.labels == s.labels);
  CHECK(testutil::bit_equal(back.joints, s.joints));
  CHECK(testutil::bit_equal(back.features, s.features));
  CHECK(format_sequence(back) == format_sequence(s));

  const std::string dir = testutil::temp_dir("seq");
  write_sequence(dir + "/b.seq", s);
  write_sequence(dir + "/a.seq", s);
  write_text_file(dir + "/notes.txt", "x");
  const auto files = list_sequence_files(dir);
  REQUIRE(files.size() == 2);
  CHECK(files[0].find("a.seq") != std::string::npos);
  CHECK(format_sequence(load_sequence(files[1])) == format_sequence(s));
}

TEST_CASE("malformed sequence files are rejected with the line number") {
  const std::string text = format_sequence(two_joint(3));
  // The last frame line loses its final number.
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  const std::size_t last = lines.size() - 1;
  std::string broken;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string l = lines[i];
    if (i == last) l = l.substr(0, l.rfind(' '));
    broken += l + '\n';
  }
  try {
    parse_sequence(broken, "bad.seq");
    FAIL("short frame accepted");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad.seq:" + std::to_string(last + 1)) != std::string::npos);
  }
  std::string wrong_version = text;
  wrong_version.replace(wrong_version.find("stpgn-sequence 1"), 16, "stpgn-sequence 9");
  CHECK_THROWS_AS(parse_sequence(wrong_version), FormatError);
  CHECK_THROWS_AS(parse_sequence("joints 2\n"), FormatError);

  SkeletonSequence bad = two_joint(3);
  bad.frame_index[2] = bad.frame_index[1];
  CHECK_THROWS(bad.validate());
}

TEST_CASE("shipped part file builds the default hierarchy") {
  const auto spec = graph::load_part_spec(std::string(STPGN_DATA_DIR) + "/default_parts.txt", 13);
  const auto h = graph::build_hierarchy(graph::default_skeleton(), spec);
  CHECK(h.part_count() == 6);
  CHECK(h.global_count() == 3);
  CHECK(spec.joint_part == graph::default_part_spec().joint_part);
}

TEST_CASE("synthetic data is deterministic") {
  SynthConfig c;
  c.sequences = 3;
  c.frames = 40;
  c.classes = 3;
  c.seed = 9;
  const auto a = synth_dataset(c), b = synth_dataset(c);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(format_sequence(a[i].sequence) == format_sequence(b[i].sequence));
  c.seed = 10;
  CHECK(format_sequence(synth_dataset(c)[0].sequence) != format_sequence(a[0].sequence));
}

TEST_CASE("synthetic segments match the frame labels") {
  SynthConfig c;
  c.sequences = 5;
  c.frames = 100;
  c.classes = 4;
  c.min_segment = 10;
  c.max_segment = 30;
  for (const auto& s : synth_dataset(c)) {
    CHECK_NOTHROW(metrics::validate_segments(s.segments));
    const auto frames = metrics::expand(s.segments);
    REQUIRE(frames.size() == s.sequence.frames());
    for (std::size_t t = 0; t < frames.size(); ++t)
      CHECK(s.sequence.labels[t] == synth_class_name(static_cast<std::size_t>(frames[t])));
    CHECK(s.sequence.joint_count == 13);
  }
  c.multi_action = false;
  for (const auto& s : synth_dataset(c)) CHECK(s.segments.size() == 1);
}

TEST_CASE("at zero noise the left wrist height separates the classes") {
  SynthConfig c;
  c.sequences = 8;
  c.frames = 60;
  c.classes = 3;
  c.noise = 0.0;
  c.multi_action = false;
  std::vector<std::pair<double, double>> range(3, {1e9, -1e9});
  for (const auto& s : synth_dataset(c)) {
    const auto cls = static_cast<std::size_t>(s.segments.front().label);
    for (std::size_t t = 0; t < s.sequence.frames(); ++t) {
      const double y = s.sequence.joints(t, 3 * 7 + 1);
      range[cls].first = std::min(range[cls].first, y);
      range[cls].second = std::max(range[cls].second, y);
    }
  }
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b) {
      if (range[a].first > range[a].second || range[b].first > range[b].second) continue;
      CHECK((range[a].second < range[b].first || range[b].second < range[a].first));
    }
}

TEST_CASE("datasets from sequences") {
  SynthConfig c;
  c.sequences = 2;
  c.frames = 30;
  c.classes = 2;
  std::vector<SkeletonSequence> seqs;
  for (auto& s : synth_dataset(c)) seqs.push_back(s.sequence);
  const Dataset d = make_dataset(seqs, {"x", "y"});
  CHECK(d.joint_count == 13);
  CHECK(d.sequences.size() == 2);
  CHECK(d.class_names.size() <= 2);
  seqs[0].labels[3] = "";
  CHECK_THROWS(make_dataset(seqs, {"x", "y"}));
  seqs[0].labels[3] = "zzz";
  CHECK_THROWS(make_dataset(seqs, {"x", "y"}, {synth_class_name(0), synth_class_name(1)}));
}
