#include "stpgn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace stpgn {

double gradient_error(double analytic, double numeric, double floor) {
  const double diff = std::abs(analytic - numeric);
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return diff / scale;
}

namespace {

double evaluate(const LossBuilder& build) {
  Tape tape;
  tape.set_check_finite(false);
  return build(tape).value()[0];
}

}  // namespace

FdReport finite_difference_check(const LossBuilder& build, std::span<Parameter* const> params,
                                 const FdOptions& options) {
  Gradients analytic;
  {
    Tape tape;
    tape.set_check_finite(false);
    Var loss = build(tape);
    tape.backward(loss, analytic);
  }

  FdReport report;
  std::mt19937_64 rng(options.seed);
  for (Parameter* p : params) {
    const Tensor* g = analytic.find(*p);
    const std::size_t n = p->value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_param && n > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      double& slot = p->value[idx];
      const double saved = slot;
      slot = saved + options.epsilon;
      const double up = evaluate(build);
      slot = saved - options.epsilon;
      const double down = evaluate(build);
      slot = saved;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double a = g ? (*g)[idx] : 0.0;
      const double err = gradient_error(a, numeric, options.floor);
      ++report.coords_checked;
      if (err > report.max_error || report.worst_param.empty()) {
        report.max_error = std::max(report.max_error, err);
        if (err >= report.max_error) {
          report.worst_param = p->name;
          report.worst_index = idx;
          report.worst_analytic = a;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace stpgn
