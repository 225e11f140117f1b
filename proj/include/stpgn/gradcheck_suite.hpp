#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stpgn/gradcheck.hpp"

namespace stpgn::gradcheck {

inline constexpr double kPrimitiveTolerance = 1e-6;
inline constexpr double kLayerTolerance = 1e-4;
// Relative-error floor for layers and end-to-end toys. Structurally zero
// coordinates (masked adjacency entries) and deep recurrent weights carry
// gradients at or below finite-difference resolution.
inline constexpr double kLayerFloor = 1e-6;

// One registered check. `run` builds its own parameters and inputs and
// returns the finite-difference report.
struct Case {
  std::string name;
  double tolerance = kLayerTolerance;
  std::function<FdReport()> run;
  double floor = 1e-8;
};

struct ComponentResult {
  std::string name;
  double tolerance = 0.0;
  double floor = 0.0;
  FdReport report;
  double seconds = 0.0;
  bool passed = false;
};

struct SuiteReport {
  std::vector<ComponentResult> components;
  double seconds = 0.0;
  bool passed = true;
};

// Every primitive op, every layer and the end-to-end toy models.
std::vector<Case> default_cases(std::uint64_t seed = 11);

// A deliberately wrong gradient rule (x^2 with derivative 2.2x). It must fail.
Case corrupted_case();

SuiteReport run_cases(const std::vector<Case>& cases);
// One line per component, then an overall verdict.
std::string format_report(const SuiteReport& report);

}  // namespace stpgn::gradcheck
