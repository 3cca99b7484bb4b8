#pragma once

// Test-only central finite-difference gradient checker. The loss callback
// must rebuild its graph from the parameters' current values on every call
// so perturbations propagate through the whole pipeline.

#include <functional>
#include <string>
#include <vector>

#include "slukit/autodiff.hpp"
#include "slukit/common.hpp"

namespace slukit::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_entry;
  std::size_t checked = 0;
};

// rel error with an absolute floor for near-zero gradient entries
inline double rel_err(double analytic, double fd) {
  const double denom = std::max(std::abs(analytic), std::abs(fd));
  if (denom < 1e-6) return std::abs(analytic - fd) < 1e-9 ? 0.0 : std::abs(analytic - fd);
  return std::abs(analytic - fd) / denom;
}

inline GradCheckResult grad_check(const std::function<double()>& loss_fn,
                                  const std::function<void()>& analytic_fn,
                                  const std::vector<ad::Parameter*>& params,
                                  double eps = 1e-5, int max_entries_per_tensor = 0,
                                  std::uint64_t seed = 1234) {
  for (auto* p : params) p->grad.setZero();
  analytic_fn();

  GradCheckResult result;
  Rng rng = make_rng(seed);
  for (auto* p : params) {
    const Eigen::Index n = p->value.size();
    std::vector<Eigen::Index> entries;
    if (max_entries_per_tensor <= 0 || n <= max_entries_per_tensor) {
      for (Eigen::Index i = 0; i < n; ++i) entries.push_back(i);
    } else {
      // always include the largest-gradient entry, then sample the rest
      Eigen::Index argmax = 0;
      p->grad.reshaped().cwiseAbs().maxCoeff(&argmax);
      entries.push_back(argmax);
      for (int i = 1; i < max_entries_per_tensor; ++i)
        entries.push_back(static_cast<Eigen::Index>(
            uniform_index(rng, static_cast<std::size_t>(n))));
    }
    for (Eigen::Index flat : entries) {
      double* cell = p->value.data() + flat;
      const double saved = *cell;
      *cell = saved + eps;
      const double lp = loss_fn();
      *cell = saved - eps;
      const double lm = loss_fn();
      *cell = saved;
      const double fd = (lp - lm) / (2.0 * eps);
      const double analytic = *(p->grad.data() + flat);
      const double err = rel_err(analytic, fd);
      ++result.checked;
      if (err > result.max_rel_err) {
        result.max_rel_err = err;
        result.worst_entry = p->name + "[" + std::to_string(flat) + "] analytic=" +
                             std::to_string(analytic) + " fd=" + std::to_string(fd);
      }
    }
  }
  return result;
}

}  // namespace slukit::testing
