#include "stpgn/reba.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "stpgn/kv.hpp"
#include "stpgn/sequence.hpp"

namespace stpgn::reba {

// ================================================================== bands

Bands clamp_bands(Bands b) {
  b.trunk = std::clamp(b.trunk, 1, kBandMax.trunk);
  b.neck = std::clamp(b.neck, 1, kBandMax.neck);
  b.legs = std::clamp(b.legs, 1, kBandMax.legs);
  b.upper_arm = std::clamp(b.upper_arm, 1, kBandMax.upper_arm);
  b.lower_arm = std::clamp(b.lower_arm, 1, kBandMax.lower_arm);
  b.wrist = std::clamp(b.wrist, 1, kBandMax.wrist);
  return b;
}

int trunk_band(double a, bool twist) {
  int band;
  if (std::abs(a) <= kUprightToleranceDeg) band = 1;
  else if (a > 60.0) band = 4;
  else if (a > 20.0 || a < -20.0) band = 3;
  else band = 2;
  return band + (twist ? 1 : 0);
}

int neck_band(double a, bool twist) {
  const int band = (a > 20.0 || a < -kUprightToleranceDeg) ? 2 : 1;
  return band + (twist ? 1 : 0);
}

int legs_band(bool bilateral, double knee) {
  int band = bilateral ? 1 : 2;
  if (knee > 60.0) band += 2;
  else if (knee >= 30.0) band += 1;
  return band;
}

int upper_arm_band(double a, bool raised, bool abducted) {
  int band;
  if (a >= -20.0 && a <= 20.0) band = 1;
  else if (a < -20.0 || a <= 45.0) band = 2;
  else if (a <= 90.0) band = 3;
  else band = 4;
  return band + (raised ? 1 : 0) + (abducted ? 1 : 0);
}

int lower_arm_band(double a) { return (a >= 60.0 && a <= 100.0) ? 1 : 2; }

int wrist_band(double a, bool deviation) { return (std::abs(a) > 15.0 ? 2 : 1) + (deviation ? 1 : 0); }

Bands bands_from_angles(const PostureAngles& a) {
  Bands b;
  b.trunk = trunk_band(a.trunk_flexion, a.trunk_twist_or_side_bend);
  b.neck = neck_band(a.neck_flexion, a.neck_twist_or_side_bend);
  b.legs = legs_band(a.legs_bilateral, a.knee_flexion);
  b.upper_arm = upper_arm_band(a.upper_arm_elevation, a.shoulder_raised, a.arm_abducted);
  b.lower_arm = lower_arm_band(a.lower_arm_flexion);
  b.wrist = wrist_band(a.wrist_flexion, a.wrist_deviation);
  return b;
}

int load_score(double load_kg, bool shock) {
  if (!(load_kg >= 0.0)) throw std::invalid_argument("load must be a non-negative number of kilograms");
  const int base = load_kg < 5.0 ? 0 : (load_kg <= 10.0 ? 1 : 2);
  return base + (shock ? 1 : 0);
}

int coupling_score(Coupling c) { return static_cast<int>(c); }

int activity_score(const TaskFactors& f) {
  return (f.static_hold ? 1 : 0) + (f.repeated ? 1 : 0) + (f.rapid_change ? 1 : 0);
}

std::string coupling_name(Coupling c) {
  switch (c) {
    case Coupling::good: return "good";
    case Coupling::fair: return "fair";
    case Coupling::poor: return "poor";
    case Coupling::unacceptable: return "unacceptable";
  }
  return "?";
}

Coupling parse_coupling(const std::string& name) {
  if (name == "good") return Coupling::good;
  if (name == "fair") return Coupling::fair;
  if (name == "poor") return Coupling::poor;
  if (name == "unacceptable") return Coupling::unacceptable;
  throw std::invalid_argument("unknown coupling '" + name + "' (good, fair, poor, unacceptable)");
}

// ================================================================== tables

const Tables& default_tables() {
  static const Tables t = {
      {{{1, 2, 3, 4}, {2, 3, 4, 5}, {2, 4, 5, 6}, {3, 5, 6, 7}, {4, 6, 7, 8}},
       {{1, 2, 3, 4}, {3, 4, 5, 6}, {4, 5, 6, 7}, {5, 6, 7, 8}, {6, 7, 8, 9}},
       {{3, 3, 5, 6}, {4, 5, 6, 7}, {5, 6, 7, 8}, {6, 7, 8, 9}, {7, 8, 9, 9}}},
      {{{1, 2, 2}, {1, 2, 3}},
       {{1, 2, 3}, {2, 3, 4}},
       {{3, 4, 5}, {4, 5, 5}},
       {{4, 5, 5}, {5, 6, 7}},
       {{6, 7, 8}, {7, 8, 8}},
       {{7, 8, 8}, {8, 9, 9}}},
      {{1, 1, 1, 2, 3, 3, 4, 5, 6, 7, 7, 7},
       {1, 2, 2, 3, 4, 4, 5, 6, 6, 7, 7, 8},
       {2, 3, 3, 3, 4, 5, 6, 7, 7, 8, 8, 8},
       {3, 4, 4, 4, 5, 6, 7, 8, 8, 9, 9, 9},
       {4, 4, 4, 5, 6, 7, 8, 8, 9, 9, 9, 9},
       {6, 6, 6, 7, 8, 8, 9, 9, 10, 10, 10, 10},
       {7, 7, 7, 8, 9, 9, 9, 10, 10, 11, 11, 11},
       {8, 8, 8, 9, 10, 10, 10, 10, 10, 11, 11, 11},
       {9, 9, 9, 10, 10, 10, 11, 11, 11, 12, 12, 12},
       {10, 10, 10, 11, 11, 11, 11, 12, 12, 12, 12, 12},
       {11, 11, 11, 11, 12, 12, 12, 12, 12, 12, 12, 12},
       {12, 12, 12, 12, 12, 12, 12, 12, 12, 12, 12, 12}},
  };
  return t;
}

namespace {

struct TableSpec {
  const char* name;
  std::vector<std::pair<std::string, int>> axes;
};

const TableSpec kTableSpecs[3] = {
    {"A", {{"neck", 3}, {"trunk", 5}, {"legs", 4}}},
    {"B", {{"upper_arm", 6}, {"lower_arm", 2}, {"wrist", 3}}},
    {"C", {{"score_a", 12}, {"score_b", 12}}},
};

int* table_data(Tables& t, int which) {
  switch (which) {
    case 0: return &t.a[0][0][0];
    case 1: return &t.b[0][0][0];
    default: return &t.c[0][0];
  }
}

int table_size(int which) {
  int n = 1;
  for (const auto& ax : kTableSpecs[which].axes) n *= ax.second;
  return n;
}

}  // namespace

Tables parse_tables(const std::string& text, const std::string& source) {
  Tables t{};
  bool seen[3] = {false, false, false};
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  int current = -1, filled = 0;
  auto fail = [&](const std::string& msg) {
    throw FormatError(source + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string s; ls >> s;) tok.push_back(s);
    if (tok.empty()) continue;
    if (tok[0] == "table") {
      if (current >= 0 && filled != table_size(current))
        fail(std::string("table ") + kTableSpecs[current].name + " has " + std::to_string(filled) + " of " +
             std::to_string(table_size(current)) + " entries");
      if (tok.size() < 2) fail("table needs a name");
      current = -1;
      for (int i = 0; i < 3; ++i)
        if (tok[1] == kTableSpecs[i].name) current = i;
      if (current < 0) fail("unknown table '" + tok[1] + "'");
      if (seen[current]) fail("table " + tok[1] + " defined twice");
      const auto& axes = kTableSpecs[current].axes;
      if (tok.size() != 2 + axes.size()) fail("table " + tok[1] + " needs " + std::to_string(axes.size()) + " axes");
      for (std::size_t a = 0; a < axes.size(); ++a) {
        const std::string want = axes[a].first + "=" + std::to_string(axes[a].second);
        if (tok[2 + a] != want) fail("expected axis '" + want + "', found '" + tok[2 + a] + "'");
      }
      seen[current] = true;
      filled = 0;
      continue;
    }
    if (current < 0) fail("values before any 'table' line");
    for (const auto& s : tok) {
      int v = 0;
      try {
        std::size_t used = 0;
        v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
      } catch (const std::exception&) {
        fail("not an integer: '" + s + "'");
      }
      if (v < 1 || v > 12) fail("table entry " + s + " outside 1..12");
      if (filled >= table_size(current)) fail(std::string("too many entries for table ") + kTableSpecs[current].name);
      table_data(t, current)[filled++] = v;
    }
  }
  if (current >= 0 && filled != table_size(current))
    throw FormatError(source + ": table " + kTableSpecs[current].name + " is incomplete");
  for (int i = 0; i < 3; ++i)
    if (!seen[i]) throw FormatError(source + ": table " + kTableSpecs[i].name + " missing");
  return t;
}

Tables load_tables(const std::string& path) { return parse_tables(read_text_file(path), path); }

std::string format_tables(const Tables& t) {
  std::ostringstream os;
  Tables copy = t;
  for (int i = 0; i < 3; ++i) {
    const auto& spec = kTableSpecs[i];
    os << "table " << spec.name;
    for (const auto& ax : spec.axes) os << ' ' << ax.first << '=' << ax.second;
    os << '\n';
    const int width = spec.axes.back().second;
    const int* d = table_data(copy, i);
    for (int k = 0; k < table_size(i); ++k) os << d[k] << ((k + 1) % width == 0 ? '\n' : ' ');
  }
  return os.str();
}

// ================================================================== scoring

Risk risk_band(int s) {
  if (s <= 1) return Risk::negligible;
  if (s <= 3) return Risk::low;
  if (s <= 7) return Risk::medium;
  if (s <= 10) return Risk::high;
  return Risk::very_high;
}

std::string risk_name(Risk r) {
  switch (r) {
    case Risk::negligible: return "negligible";
    case Risk::low: return "low";
    case Risk::medium: return "medium";
    case Risk::high: return "high";
    case Risk::very_high: return "very_high";
  }
  return "?";
}

namespace {

void check_bands(const Bands& b) {
  if (clamp_bands(b) != b) throw std::out_of_range("REBA band index outside the worksheet range");
}

}  // namespace

int score_group_a(const Tables& t, const Bands& b, const TaskFactors& f) {
  check_bands(b);
  return t.a[b.neck - 1][b.trunk - 1][b.legs - 1] + load_score(f.load_kg, f.shock);
}

int score_group_b(const Tables& t, const Bands& b, const TaskFactors& f) {
  check_bands(b);
  return t.b[b.upper_arm - 1][b.lower_arm - 1][b.wrist - 1] + coupling_score(f.coupling);
}

RebaScore compose_score_c(const Tables& t, int score_a, int score_b, const TaskFactors& f) {
  if (score_a < 1 || score_a > 12 || score_b < 1 || score_b > 12)
    throw std::out_of_range("compose_score_c: scores A and B must lie in 1..12");
  RebaScore r;
  r.factors = f;
  r.score_a = score_a;
  r.score_b = score_b;
  r.score_c = t.c[score_a - 1][score_b - 1];
  r.activity = activity_score(f);
  r.final_score = r.score_c + r.activity;
  r.risk = risk_band(r.final_score);
  return r;
}

RebaScore score(const Tables& t, const Bands& b, const TaskFactors& f) {
  RebaScore r = compose_score_c(t, score_group_a(t, b, f), score_group_b(t, b, f), f);
  r.bands = b;
  r.table_a = t.a[b.neck - 1][b.trunk - 1][b.legs - 1];
  r.table_b = t.b[b.upper_arm - 1][b.lower_arm - 1][b.wrist - 1];
  return r;
}

RebaScore unscorable(std::string reason) {
  RebaScore r;
  r.scorable = false;
  r.reason = std::move(reason);
  return r;
}

// ================================================================== angles

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 mul(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 reject(const Vec3& a, const Vec3& unit) { return sub(a, mul(unit, dot(a, unit))); }
double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct Degenerate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Vec3 unit(const Vec3& a, const char* what) {
  const double n = norm(a);
  if (!(n > 1e-12)) throw Degenerate(std::string("degenerate ") + what);
  return mul(a, 1.0 / n);
}

double angle_between(const Vec3& a, const Vec3& b, const char* what) {
  const double na = norm(a), nb = norm(b);
  if (!(na > 1e-12 && nb > 1e-12)) throw Degenerate(std::string("degenerate ") + what);
  return deg(std::acos(std::clamp(dot(a, b) / (na * nb), -1.0, 1.0)));
}

double wrap180(double a) {
  while (a > 180.0) a -= 360.0;
  while (a < -180.0) a += 360.0;
  return a;
}

struct ArmAngles {
  double elevation = 0.0;
  bool abducted = false;
  double elbow = 0.0;
  double wrist = 0.0;
  Bands bands;
};

}  // namespace

JointMap default_joint_map() {
  JointMap m;
  m.r_ankle = 0;
  m.l_ankle = 1;
  m.r_knee = 2;
  m.l_knee = 3;
  m.r_hip = 4;
  m.l_hip = 5;
  m.r_wrist = 6;
  m.l_wrist = 7;
  m.r_elbow = 8;
  m.l_elbow = 9;
  m.r_shoulder = 10;
  m.l_shoulder = 11;
  m.head = 12;
  return m;
}

JointMap joint_map_from_names(const std::vector<std::string>& names) {
  JointMap m;
  auto find = [&](std::initializer_list<const char*> options) {
    for (const char* o : options)
      for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == o) return static_cast<int>(i);
    return -1;
  };
  m.head = find({"head", "nose"});
  m.r_shoulder = find({"right_shoulder", "r_shoulder"});
  m.l_shoulder = find({"left_shoulder", "l_shoulder"});
  m.r_elbow = find({"right_elbow", "r_elbow"});
  m.l_elbow = find({"left_elbow", "l_elbow"});
  m.r_wrist = find({"right_wrist", "r_wrist"});
  m.l_wrist = find({"left_wrist", "l_wrist"});
  m.r_hip = find({"right_hip", "r_hip"});
  m.l_hip = find({"left_hip", "l_hip"});
  m.r_knee = find({"right_knee", "r_knee"});
  m.l_knee = find({"left_knee", "l_knee"});
  m.r_ankle = find({"right_ankle", "r_ankle"});
  m.l_ankle = find({"left_ankle", "l_ankle"});
  m.r_hand = find({"right_hand", "r_hand"});
  m.l_hand = find({"left_hand", "l_hand"});
  return m;
}

AngleResult extract_angles(std::span<const double> frame, const JointMap& j, const AngleOptions& o) {
  AngleResult result;
  const std::size_t count = frame.size() / 3;
  auto get = [&](int idx, const char* role) -> Vec3 {
    if (idx < 0 || static_cast<std::size_t>(idx) >= count) throw Degenerate(std::string("missing joint ") + role);
    const Vec3 v{frame[3 * idx], frame[3 * idx + 1], frame[3 * idx + 2]};
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2]))
      throw Degenerate(std::string("non-finite joint ") + role);
    return v;
  };
  try {
    const Vec3 head = get(j.head, "head");
    const Vec3 rs = get(j.r_shoulder, "right_shoulder"), ls = get(j.l_shoulder, "left_shoulder");
    const Vec3 re = get(j.r_elbow, "right_elbow"), le = get(j.l_elbow, "left_elbow");
    const Vec3 rw = get(j.r_wrist, "right_wrist"), lw = get(j.l_wrist, "left_wrist");
    const Vec3 rh = get(j.r_hip, "right_hip"), lh = get(j.l_hip, "left_hip");
    const Vec3 rk = get(j.r_knee, "right_knee"), lk = get(j.l_knee, "left_knee");
    const Vec3 ra = get(j.r_ankle, "right_ankle"), la = get(j.l_ankle, "left_ankle");

    const Vec3 up = unit(mul(o.gravity, -1.0), "gravity vector");
    const Vec3 hip_mid = mul(add(rh, lh), 0.5), sh_mid = mul(add(rs, ls), 0.5);
    const Vec3 trunk = sub(sh_mid, hip_mid);
    Vec3 left = reject(sub(lh, rh), up);
    if (norm(left) < 1e-9) left = reject(sub(ls, rs), up);
    const Vec3 L = unit(left, "body left axis");
    const Vec3 F = cross(up, L);

    PostureAngles& a = result.angles;
    auto sagittal = [&](const Vec3& v) { return deg(std::atan2(dot(v, F), dot(v, up))); };
    auto lateral = [&](const Vec3& v) { return deg(std::atan2(dot(v, L), std::hypot(dot(v, F), dot(v, up)))); };
    if (norm(trunk) < 1e-12) throw Degenerate("degenerate trunk");
    a.trunk_flexion = sagittal(trunk);
    const double trunk_side = lateral(trunk);
    a.trunk_twist_or_side_bend = std::abs(trunk_side) > o.side_bend_threshold_deg;

    const Vec3 neck = sub(head, sh_mid);
    if (norm(neck) < 1e-12) throw Degenerate("degenerate neck");
    a.neck_flexion = wrap180(sagittal(neck) - a.trunk_flexion);
    a.neck_twist_or_side_bend = std::abs(lateral(neck) - trunk_side) > o.side_bend_threshold_deg;

    const double knee_r = angle_between(sub(rk, rh), sub(ra, rk), "right leg");
    const double knee_l = angle_between(sub(lk, lh), sub(la, lk), "left leg");
    a.knee_flexion = std::max(knee_r, knee_l);
    const double leg_length = 0.5 * (norm(sub(ra, rh)) + norm(sub(la, lh)));
    a.legs_bilateral = std::abs(dot(sub(la, ra), up)) < o.bilateral_ratio * leg_length;

    const Vec3 td = unit(trunk, "trunk");
    const Vec3 down = mul(td, -1.0);
    Vec3 fwd = reject(F, td);
    if (norm(fwd) < 1e-9) fwd = reject(mul(up, -1.0), td);  // trunk horizontal
    fwd = unit(fwd, "trunk forward axis");
    const Vec3 side = cross(td, fwd);

    auto arm = [&](const Vec3& s, const Vec3& e, const Vec3& w, int hand, const char* name) {
      ArmAngles r;
      const Vec3 upper = sub(e, s), fore = sub(w, e);
      const double elev = angle_between(upper, down, name);
      const double f = dot(upper, fwd), l = dot(upper, side);
      r.abducted = std::abs(l) > std::abs(f) && elev > o.abduction_threshold_deg;
      r.elevation = (f < 0.0 && !r.abducted) ? -elev : elev;
      r.elbow = angle_between(upper, fore, name);
      if (hand >= 0) r.wrist = angle_between(fore, sub(get(hand, "hand"), w), name);
      r.bands.upper_arm = std::min(upper_arm_band(r.elevation, false, r.abducted), kBandMax.upper_arm);
      r.bands.lower_arm = lower_arm_band(r.elbow);
      r.bands.wrist = wrist_band(r.wrist, false);
      return r;
    };
    const ArmAngles right = arm(rs, re, rw, j.r_hand, "right arm");
    const ArmAngles left_arm = arm(ls, le, lw, j.l_hand, "left arm");
    const Tables& t = default_tables();
    auto table_b = [&](const Bands& b) { return t.b[b.upper_arm - 1][b.lower_arm - 1][b.wrist - 1]; };
    const bool use_left = table_b(left_arm.bands) > table_b(right.bands);
    const ArmAngles& chosen = use_left ? left_arm : right;
    a.arm_side = use_left ? 1 : 0;
    a.upper_arm_elevation = chosen.elevation;
    a.arm_abducted = chosen.abducted;
    a.lower_arm_flexion = chosen.elbow;
    a.wrist_flexion = chosen.wrist;
    result.ok = true;
  } catch (const Degenerate& e) {
    result.ok = false;
    result.reason = e.what();
  }
  return result;
}

RebaScore score_frame(const Tables& t, std::span<const double> frame, const JointMap& joints,
                      const AngleOptions& options) {
  const AngleResult r = extract_angles(frame, joints, options);
  if (!r.ok) return unscorable(r.reason);
  return score(t, clamp_bands(bands_from_angles(r.angles)), TaskFactors{});
}

// ================================================================== labels

std::optional<std::map<std::string, std::string>> parse_label(const LabelGrammar& g, const std::string& label) {
  if (label.empty()) return std::nullopt;
  std::vector<std::string> tokens;
  {
    std::string cur;
    for (char ch : label) {
      if (ch == g.separator) {
        tokens.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    tokens.push_back(cur);
  }
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  for (const auto& tier : g.tiers) {
    std::size_t best_len = 0;
    const std::string* best = nullptr;
    for (const auto& value : tier.values) {
      std::vector<std::string> parts;
      std::string cur;
      for (char ch : value) {
        if (ch == g.separator) {
          parts.push_back(cur);
          cur.clear();
        } else {
          cur += ch;
        }
      }
      parts.push_back(cur);
      if (pos + parts.size() > tokens.size() || parts.size() <= best_len) continue;
      if (std::equal(parts.begin(), parts.end(), tokens.begin() + static_cast<std::ptrdiff_t>(pos))) {
        best_len = parts.size();
        best = &value;
      }
    }
    if (best) {
      out[tier.name] = *best;
      pos += best_len;
    }
  }
  if (pos != tokens.size()) return std::nullopt;
  return out;
}

namespace {

const char* const kAssignKeys[] = {"load_kg", "shock", "coupling",  "static",    "repeated", "rapid",
                                   "trunk",   "neck",  "legs",      "upper_arm", "lower_arm", "wrist"};

bool is_assign_key(const std::string& k) {
  return std::find(std::begin(kAssignKeys), std::end(kAssignKeys), k) != std::end(kAssignKeys);
}

bool parse_flag(const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("expected 0 or 1, got '" + v + "'");
}

void apply(const Assignment& a, Bands& b, TaskFactors& f) {
  auto band = [&](int& slot) {
    const int v = std::stoi(a.value);
    slot = a.add ? slot + v : v;
  };
  if (a.key == "load_kg") {
    const double v = parse_double(a.value);
    f.load_kg = std::max(0.0, a.add ? f.load_kg + v : v);
  } else if (a.key == "shock") {
    f.shock = parse_flag(a.value);
  } else if (a.key == "coupling") {
    f.coupling = parse_coupling(a.value);
  } else if (a.key == "static") {
    f.static_hold = parse_flag(a.value);
  } else if (a.key == "repeated") {
    f.repeated = parse_flag(a.value);
  } else if (a.key == "rapid") {
    f.rapid_change = parse_flag(a.value);
  } else if (a.key == "trunk") {
    band(b.trunk);
  } else if (a.key == "neck") {
    band(b.neck);
  } else if (a.key == "legs") {
    band(b.legs);
  } else if (a.key == "upper_arm") {
    band(b.upper_arm);
  } else if (a.key == "lower_arm") {
    band(b.lower_arm);
  } else if (a.key == "wrist") {
    band(b.wrist);
  }
}

}  // namespace

ActionMapping parse_mapping(const std::string& text, const std::string& source) {
  ActionMapping m;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw FormatError(source + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string s; ls >> s;) tok.push_back(s);
    if (tok.empty()) continue;
    if (tok[0] == "grammar") {
      if (tok.size() != 2) fail("grammar takes one name");
      m.grammar.name = tok[1];
    } else if (tok[0] == "separator") {
      if (tok.size() != 2 || tok[1].size() != 1) fail("separator must be a single character");
      m.grammar.separator = tok[1][0];
    } else if (tok[0] == "tier") {
      if (tok.size() < 3) fail("tier needs a name and at least one value");
      if (is_assign_key(tok[1])) fail("tier name '" + tok[1] + "' collides with a factor key");
      m.grammar.tiers.push_back({tok[1], {tok.begin() + 2, tok.end()}});
    } else if (tok[0] == "rule") {
      Rule r;
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const std::string& s = tok[i];
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) fail("malformed rule term '" + s + "'");
        const bool add = s[eq - 1] == '+';
        const std::string key = s.substr(0, add ? eq - 1 : eq), value = s.substr(eq + 1);
        if (is_assign_key(key)) {
          Assignment a{key, add, value};
          try {
            Bands b;
            TaskFactors f;
            apply(a, b, f);
          } catch (const std::exception& e) {
            fail("bad value in '" + s + "': " + e.what());
          }
          if (add && (key == "shock" || key == "coupling" || key == "static" || key == "repeated" || key == "rapid"))
            fail("'" + key + "' cannot be incremented");
          r.then.push_back(a);
          continue;
        }
        if (add) fail("conditions use '=', not '+=': '" + s + "'");
        auto tier = std::find_if(m.grammar.tiers.begin(), m.grammar.tiers.end(),
                                 [&](const Tier& t) { return t.name == key; });
        if (tier == m.grammar.tiers.end()) fail("unknown tier or key '" + key + "'");
        if (value != "*" && std::find(tier->values.begin(), tier->values.end(), value) == tier->values.end())
          fail("tier '" + key + "' has no value '" + value + "'");
        r.when.push_back({key, value});
      }
      if (r.then.empty()) fail("rule assigns nothing");
      m.rules.push_back(std::move(r));
    } else {
      fail("unknown directive '" + tok[0] + "'");
    }
  }
  if (m.grammar.tiers.empty()) throw FormatError(source + ": mapping defines no tiers");
  return m;
}

ActionMapping load_mapping(const std::string& path) { return parse_mapping(read_text_file(path), path); }

Adjusted adjust_with_action(const Tables& t, const RebaScore& s, const std::string& label, const ActionMapping& m) {
  Adjusted out;
  out.score = s;
  if (!s.scorable) return out;
  const auto parsed = parse_label(m.grammar, label);
  if (!parsed) {
    out.recognized = false;
    out.warning = "label '" + label + "' does not parse under grammar '" + m.grammar.name + "'; score unchanged";
    return out;
  }
  Bands b = s.bands;
  TaskFactors f = s.factors;
  bool changed = false;
  for (const auto& rule : m.rules) {
    const bool match = std::all_of(rule.when.begin(), rule.when.end(), [&](const Condition& c) {
      auto it = parsed->find(c.tier);
      return it != parsed->end() && (c.value == "*" || it->second == c.value);
    });
    if (!match) continue;
    for (const auto& a : rule.then) apply(a, b, f);
    changed = true;
  }
  if (changed) out.score = score(t, clamp_bands(b), f);
  return out;
}

}  // namespace stpgn::reba
