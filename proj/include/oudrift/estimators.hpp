#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "oudrift/error.hpp"
#include "oudrift/ou_core.hpp"

namespace oudrift {

enum class Estimator { AMCE, AMLE };

inline std::string_view to_string(Estimator e) { return e == Estimator::AMCE ? "amce" : "amle"; }

// Which observations enter the empirical second moment: Body sums
// X_{t_0}..X_{t_{n-1}}, Abstract sums X_{t_1}..X_{t_n}.
enum class IndexConvention { Body, Abstract };

inline std::string_view to_string(IndexConvention c) {
  return c == IndexConvention::Body ? "body" : "abstract";
}

// Denominators at or below this are treated as an unusable path.
inline constexpr double kDenominatorFloor = 1e-30;

struct EstimateRecord {
  Estimator estimator;
  double estimate;
  double normalized_error;
  double denominator;
  OuParams params;
  std::uint64_t seed;
  std::uint64_t stream;
};

// sqrt(T / (2 theta)) (estimate - theta); unit variance in the CLT limit for both estimators.
inline double normalized_error(double estimate, const OuParams& p) {
  return std::sqrt(p.horizon() / (2.0 * p.theta())) * (estimate - p.theta());
}

inline double f_n(const SamplePath& path, IndexConvention convention = IndexConvention::Body) {
  const auto& x = path.values();
  const auto n = static_cast<std::size_t>(path.params().n());
  const std::size_t first = convention == IndexConvention::Body ? 0 : 1;
  long double sum = 0.0L;
  for (std::size_t i = first; i < first + n; ++i) sum += static_cast<long double>(x[i]) * x[i];
  return static_cast<double>(sum / static_cast<long double>(n));
}

// sqrt(T) (f_n - 1/(2 theta_true)).
inline double big_f_n(const SamplePath& path, double theta_true,
                      IndexConvention convention = IndexConvention::Body) {
  if (!(theta_true > 0.0)) throw InvalidParams("theta_true must be positive");
  return std::sqrt(path.params().horizon()) * (f_n(path, convention) - 1.0 / (2.0 * theta_true));
}

// Approximate minimum contrast estimator 1 / (2 f_n(X)). The true theta used
// for the normalized error is the one the path was simulated with.
inline EstimateRecord amce(const SamplePath& path, IndexConvention convention = IndexConvention::Body) {
  const double fn = f_n(path, convention);
  if (!(fn > kDenominatorFloor))
    throw DegenerateDenominator("f_n(X) = " + std::to_string(fn) + " is not usable");
  const double est = 1.0 / (2.0 * fn);
  return {Estimator::AMCE, est, normalized_error(est, path.params()), fn,
          path.params(), path.seed(), path.stream()};
}

// Approximate maximum likelihood estimator
//   -sum X_{i-1} (X_i - X_{i-1}) / (delta sum X_{i-1}^2).
// The reported denominator is S_n / T.
inline EstimateRecord amle(const SamplePath& path) {
  const auto& x = path.values();
  const auto& p = path.params();
  long double cross = 0.0L;
  long double squares = 0.0L;
  for (std::size_t i = 1; i < x.size(); ++i) {
    const long double prev = x[i - 1];
    cross += prev * (static_cast<long double>(x[i]) - prev);
    squares += prev * prev;
  }
  const double denom = static_cast<double>(squares / static_cast<long double>(p.n()));
  if (!(denom > kDenominatorFloor))
    throw DegenerateDenominator("S_n / T = " + std::to_string(denom) + " is not usable");
  const double est = static_cast<double>(-cross / (static_cast<long double>(p.delta()) * squares));
  return {Estimator::AMLE, est, normalized_error(est, p), denom, p, path.seed(), path.stream()};
}

inline EstimateRecord estimate(Estimator which, const SamplePath& path,
                               IndexConvention convention = IndexConvention::Body) {
  return which == Estimator::AMCE ? amce(path, convention) : amle(path);
}

// S_n = delta sum_{i=1}^n X_{t_{i-1}}^2.
inline double s_n(const SamplePath& path) {
  const auto& x = path.values();
  long double sum = 0.0L;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) sum += static_cast<long double>(x[i]) * x[i];
  return static_cast<double>(sum * path.params().delta());
}

// Lambda_n = sum_i e^{-theta t_i} X_{t_{i-1}} (zeta_{t_i} - zeta_{t_{i-1}}) with
// zeta_t = int_0^t e^{theta s} dW_s. On the exact grid the zeta increment is
// e^{theta t_i} sqrt(s2) xi_i, so the exponentials cancel.
inline double lambda_n(const SamplePath& path) {
  const auto& xi = path.innovations();
  const auto& x = path.values();
  const double step_sd = std::sqrt(transition_coefficients(path.params()).s2);
  long double sum = 0.0L;
  for (std::size_t i = 1; i < x.size(); ++i) sum += static_cast<long double>(x[i - 1]) * xi[i];
  return static_cast<double>(sum * step_sd);
}

// Right-hand side of -theta_hat = (e^{-theta delta} - 1) / delta + Lambda_n / S_n.
inline double amle_decomposition_rhs(const SamplePath& path) {
  const auto& p = path.params();
  return std::expm1(-p.theta() * p.delta()) / p.delta() + lambda_n(path) / s_n(path);
}

} // namespace oudrift
