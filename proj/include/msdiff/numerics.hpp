#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace msdiff {

// Fixed-shape recursive summation. The split points depend only on the
// length, so results are bit-reproducible for a given input order.
inline double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kLeaf = 32;
  if (values.size() <= kLeaf) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

// Least-squares line through (log x, log y).
struct PowerFit {
  double order = 0.0;      // slope
  double log_coeff = 0.0;  // intercept
  double r_squared = 0.0;
};

inline PowerFit fit_power_law(std::span<const double> x, std::span<const double> y) {
  const std::size_t m = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double lx = std::log(x[k]);
    const double ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
  }
  const double n = static_cast<double>(m);
  const double cov = sxy - sx * sy / n;
  const double varx = sxx - sx * sx / n;
  const double vary = syy - sy * sy / n;
  PowerFit fit;
  fit.order = cov / varx;
  fit.log_coeff = (sy - fit.order * sx) / n;
  fit.r_squared = vary > 0 ? cov * cov / (varx * vary) : 1.0;
  return fit;
}

// Observed orders between consecutive refinement levels, where each level
// shrinks the parameter by `ratio`.
inline std::vector<double> observed_orders(std::span<const double> errors, double ratio = 2.0) {
  std::vector<double> orders;
  for (std::size_t k = 1; k < errors.size(); ++k)
    orders.push_back(std::log(errors[k - 1] / errors[k]) / std::log(ratio));
  return orders;
}

}  // namespace msdiff
