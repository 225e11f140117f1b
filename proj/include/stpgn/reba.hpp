#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stpgn::reba {

using Vec3 = std::array<double, 3>;

struct PostureAngles {
  double trunk_flexion = 0.0;  // degrees, negative = extension
  bool trunk_twist_or_side_bend = false;
  double neck_flexion = 0.0;  // relative to the trunk, negative = extension
  bool neck_twist_or_side_bend = false;
  bool legs_bilateral = true;
  double knee_flexion = 0.0;         // worse knee
  double upper_arm_elevation = 0.0;  // scored side, negative = extension
  bool shoulder_raised = false;
  bool arm_abducted = false;
  double lower_arm_flexion = 0.0;  // elbow angle, 0 = straight
  double wrist_flexion = 0.0;
  bool wrist_deviation = false;
  int arm_side = 0;  // 0 right, 1 left
};

enum class Coupling { good = 0, fair = 1, poor = 2, unacceptable = 3 };

struct TaskFactors {
  double load_kg = 0.0;
  bool shock = false;  // shock or rapid build-up of force
  Coupling coupling = Coupling::good;
  bool static_hold = false;   // a body part held for more than a minute
  bool repeated = false;      // small-range actions repeated often
  bool rapid_change = false;  // rapid large changes in posture
};

// Worksheet band indices: trunk 1-5, neck 1-3, legs 1-4, upper arm 1-6,
// lower arm 1-2, wrist 1-3.
struct Bands {
  int trunk = 1;
  int neck = 1;
  int legs = 1;
  int upper_arm = 1;
  int lower_arm = 1;
  int wrist = 1;

  bool operator==(const Bands&) const = default;
};

inline constexpr Bands kBandMax{5, 3, 4, 6, 2, 3};
Bands clamp_bands(Bands b);

// Angles within this many degrees of zero count as upright/neutral.
inline constexpr double kUprightToleranceDeg = 5.0;

int trunk_band(double flexion_deg, bool twist_or_side_bend);
int neck_band(double flexion_deg, bool twist_or_side_bend);
int legs_band(bool bilateral, double knee_flexion_deg);
int upper_arm_band(double elevation_deg, bool raised, bool abducted);
int lower_arm_band(double flexion_deg);
int wrist_band(double flexion_deg, bool deviation);
Bands bands_from_angles(const PostureAngles& a);

int load_score(double load_kg, bool shock);
int coupling_score(Coupling c);
int activity_score(const TaskFactors& f);
std::string coupling_name(Coupling c);
Coupling parse_coupling(const std::string& name);

struct Tables {
  int a[3][5][4];    // [neck][trunk][legs]
  int b[6][2][3];    // [upper_arm][lower_arm][wrist]
  int c[12][12];     // [score_a][score_b]
};

// The published worksheet tables.
const Tables& default_tables();
// Plain-text tables:
//   table A neck=3 trunk=5 legs=4
//   <60 integers, row-major>
//   table B upper_arm=6 lower_arm=2 wrist=3
//   <36 integers>
//   table C score_a=12 score_b=12
//   <144 integers>
Tables parse_tables(const std::string& text, const std::string& source = "<text>");
Tables load_tables(const std::string& path);
std::string format_tables(const Tables& t);

enum class Risk { negligible, low, medium, high, very_high };
Risk risk_band(int final_score);
std::string risk_name(Risk r);

struct RebaScore {
  bool scorable = true;
  std::string reason;  // why a frame could not be scored
  Bands bands;
  TaskFactors factors;
  int table_a = 0;
  int table_b = 0;
  int score_a = 0;
  int score_b = 0;
  int score_c = 0;
  int activity = 0;
  int final_score = 0;
  Risk risk = Risk::negligible;
};

int score_group_a(const Tables& t, const Bands& b, const TaskFactors& f);
int score_group_b(const Tables& t, const Bands& b, const TaskFactors& f);
// Table C lookup plus activity score.
RebaScore compose_score_c(const Tables& t, int score_a, int score_b, const TaskFactors& f);
RebaScore score(const Tables& t, const Bands& b, const TaskFactors& f);
RebaScore unscorable(std::string reason);

// ------------------------------------------------------------------ angles

// Joint indices in the frame vector. A negative index marks an absent joint.
struct JointMap {
  int head = -1;
  int r_shoulder = -1, l_shoulder = -1;
  int r_elbow = -1, l_elbow = -1;
  int r_wrist = -1, l_wrist = -1;
  int r_hip = -1, l_hip = -1;
  int r_knee = -1, l_knee = -1;
  int r_ankle = -1, l_ankle = -1;
  int r_hand = -1, l_hand = -1;  // optional, enables wrist angles
};

JointMap default_joint_map();
// Looks up conventional joint names (right_wrist, left_hip, head, ...).
JointMap joint_map_from_names(const std::vector<std::string>& names);

struct AngleOptions {
  Vec3 gravity{0.0, -1.0, 0.0};
  double side_bend_threshold_deg = 10.0;
  double abduction_threshold_deg = 20.0;
  // Feet count as both supporting when their height difference is below
  // this fraction of the mean hip-to-ankle length.
  double bilateral_ratio = 0.15;
};

struct AngleResult {
  bool ok = false;
  std::string reason;
  PostureAngles angles;
};

// `frame` holds 3 coordinates per joint.
AngleResult extract_angles(std::span<const double> frame, const JointMap& joints, const AngleOptions& options = {});

// Scores a frame with no task factors; unscorable frames keep the reason.
RebaScore score_frame(const Tables& t, std::span<const double> frame, const JointMap& joints,
                      const AngleOptions& options = {});

// ------------------------------------------------------------------ labels

struct Tier {
  std::string name;
  std::vector<std::string> values;
};

struct LabelGrammar {
  std::string name;
  char separator = '-';
  std::vector<Tier> tiers;
};

// tier name -> value. Tiers are matched in order, each optional; values may
// themselves contain the separator ("pick-up"). Fails when tokens remain.
std::optional<std::map<std::string, std::string>> parse_label(const LabelGrammar& g, const std::string& label);

struct Condition {
  std::string tier;
  std::string value;  // "*" = any value present
};

struct Assignment {
  std::string key;
  bool add = false;  // "+=" instead of "="
  std::string value;
};

struct Rule {
  std::vector<Condition> when;
  std::vector<Assignment> then;
};

// Mapping file:
//   grammar <name>
//   separator <char>
//   tier <name> <value> <value> ...
//   rule <tier>=<value|*> ... <key>=<v> | <key>+=<v> ...
// Keys: load_kg, shock, coupling, static, repeated, rapid, trunk, neck, legs,
// upper_arm, lower_arm, wrist.
struct ActionMapping {
  LabelGrammar grammar;
  std::vector<Rule> rules;
};

ActionMapping parse_mapping(const std::string& text, const std::string& source = "<text>");
ActionMapping load_mapping(const std::string& path);

struct Adjusted {
  RebaScore score;
  bool recognized = true;
  std::string warning;
};

// Applies every matching rule, in file order, to the score's bands and
// factors and recomposes it. Unparseable labels pass through unchanged.
Adjusted adjust_with_action(const Tables& t, const RebaScore& s, const std::string& label, const ActionMapping& m);

}  // namespace stpgn::reba
