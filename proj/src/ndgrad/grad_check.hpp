#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ndgrad/tape.hpp"

namespace rosmm::ndgrad {

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t skipped = 0;  // coordinates near a kink, excluded from comparison
  int worst_input = -1;
  int64_t worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_fd = 0.0;

  bool pass(double tol) const { return checked > 0 && max_rel_err < tol; }
};

// Central-difference check of reverse-mode gradients, double precision only.
// fn builds a scalar loss from the inputs on the given tape (tape may be null
// for value-only evaluation). fn must be deterministic; this is verified by
// evaluating the base point twice and requiring bit-identical results.
//
// Coordinates where the two one-sided slopes disagree are skipped: piecewise
// linear activations are not differentiable at their kinks and the central
// difference straddling one is meaningless. The exclusion threshold equals the
// 1e-4 pass tolerance: a straddled kink that slips through can then shift the
// central difference by at most half the tolerance, so it cannot produce a
// spurious failure on its own. Strongly curved smooth coordinates may be
// skipped too, which only costs coverage, never soundness.
inline GradCheckReport grad_check(
    const std::function<TensorPtr<double>(Tape<double>*, const std::vector<TensorPtr<double>>&)>& fn,
    const std::vector<TensorPtr<double>>& inputs, double eps) {
  if (!(eps > 1e-7 && eps < 1e-3))
    throw std::invalid_argument("grad_check: eps must lie in (1e-7, 1e-3), got " + std::to_string(eps));
  if (inputs.empty()) throw std::invalid_argument("grad_check: no inputs");

  const double f0 = fn(nullptr, inputs)->data[0];
  const double f0_again = fn(nullptr, inputs)->data[0];
  if (f0 != f0_again) throw std::runtime_error("grad_check: function is not deterministic at the base point");

  for (auto& in : inputs) {
    in->requires_grad = true;
    in->zero_grad();
    in->ensure_grad();
  }
  Tape<double> tape;
  auto loss = fn(&tape, inputs);
  if (loss->numel() != 1) throw std::invalid_argument("grad_check: fn must return a scalar");
  tape.backward(loss);

  std::vector<std::vector<double>> analytic(inputs.size());
  for (size_t i = 0; i < inputs.size(); ++i) analytic[i] = inputs[i]->grad;

  GradCheckReport report;
  for (size_t i = 0; i < inputs.size(); ++i) {
    auto& x = inputs[i]->data;
    for (size_t j = 0; j < x.size(); ++j) {
      const double saved = x[j];
      x[j] = saved + eps;
      const double fp = fn(nullptr, inputs)->data[0];
      x[j] = saved - eps;
      const double fm = fn(nullptr, inputs)->data[0];
      x[j] = saved;

      const double slope_p = (fp - f0) / eps;
      const double slope_m = (f0 - fm) / eps;
      const double slope_scale = std::max({1.0, std::abs(slope_p), std::abs(slope_m)});
      if (std::abs(slope_p - slope_m) > 1e-4 * slope_scale) {
        ++report.skipped;
        continue;
      }

      const double fd = (fp - fm) / (2.0 * eps);
      const double a = analytic[i][j];
      const double rel = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_input = static_cast<int>(i);
        report.worst_coord = static_cast<int64_t>(j);
        report.worst_analytic = a;
        report.worst_fd = fd;
      }
    }
  }
  return report;
}

}  // namespace rosmm::ndgrad
