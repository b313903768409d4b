// Central finite-difference gradient checking (f64 verification oracle).

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "eegatt/tensor.hpp"

namespace eegatt {

// Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|),
// where numeric = (f(theta + h e_i) - f(theta - h e_i)) / 2h.
// f must be an evaluable pure function of theta near the base point.
template <typename F>
double grad_check_max_rel_error(F&& f, const Tensor<double>& theta, const Tensor<double>& analytic,
                                double step) {
  if (theta.numel() != analytic.numel())
    throw std::invalid_argument("grad_check: analytic gradient shape " + shape_str(analytic.shape) +
                                " does not match theta " + shape_str(theta.shape));
  Tensor<double> work = theta;
  double worst = 0.0;
  for (int64_t i = 0; i < theta.numel(); ++i) {
    double orig = work.data[static_cast<size_t>(i)];
    work.data[static_cast<size_t>(i)] = orig + step;
    double fp = f(work);
    work.data[static_cast<size_t>(i)] = orig - step;
    double fm = f(work);
    work.data[static_cast<size_t>(i)] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("grad_check: non-finite function value at coordinate " + std::to_string(i));
    double numeric = (fp - fm) / (2.0 * step);
    double a = analytic.data[static_cast<size_t>(i)];
    double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
    worst = std::max(worst, std::fabs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace eegatt
