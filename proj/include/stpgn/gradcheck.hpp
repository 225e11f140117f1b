#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "stpgn/tape.hpp"

namespace stpgn {

struct FdOptions {
  double epsilon = 1e-5;
  // Smallest gradient magnitude used as the relative-error denominator. Central
  // differences carry ~1e-12 absolute noise on O(1) losses, so coordinates
  // far below this cannot be resolved in relative terms.
  double floor = 1e-8;
  // 0 checks every coordinate; otherwise a seeded sample of this many per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 7;
};

struct FdReport {
  double max_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

// Builds the scalar loss on a fresh tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

// Compares backward() against central differences (f(p+e) - f(p-e)) / 2e for
// every (or a sampled subset of) coordinate of `params`. Parameter values are
// restored before returning.
FdReport finite_difference_check(const LossBuilder& build, std::span<Parameter* const> params,
                                 const FdOptions& options = {});

// |a - n| / max(|a|, |n|, floor).
double gradient_error(double analytic, double numeric, double floor);

}  // namespace stpgn
