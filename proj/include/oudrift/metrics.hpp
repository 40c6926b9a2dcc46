#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "oudrift/error.hpp"
#include "oudrift/random.hpp"

namespace oudrift::metrics {

inline double normal_pdf(double x) noexcept {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}
inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_sf(double x) noexcept { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

namespace detail {

inline void validate(std::span<const double> sample) {
  if (sample.empty()) throw EmptySample("sample is empty");
  for (double v : sample)
    if (!std::isfinite(v)) throw NonFiniteValue("sample contains a non-finite value");
}

// int_{-inf}^x Phi = x Phi(x) + phi(x).
inline double lower_area(double x) noexcept { return x * normal_cdf(x) + normal_pdf(x); }
// int_x^{inf} (1 - Phi) = phi(x) - x (1 - Phi(x)).
inline double upper_area(double x) noexcept { return normal_pdf(x) - x * normal_sf(x); }

// int_l^u Phi(x) dx for finite l <= u.
inline double phi_area(double l, double u) noexcept {
  if (l >= 0.0) return (u - l) - (upper_area(l) - upper_area(u));
  return lower_area(u) - lower_area(l);
}

// int_l^u |c - Phi(x)| dx for finite l <= u, where q = Phi^{-1}(c), 0 < c < 1.
inline double abs_gap_area(double l, double u, double c, double q) noexcept {
  if (u <= l) return 0.0;
  if (q <= l) return phi_area(l, u) - c * (u - l);
  if (q >= u) return c * (u - l) - phi_area(l, u);
  return (c * (q - l) - phi_area(l, q)) + (phi_area(q, u) - c * (u - q));
}

} // namespace detail

// W1 between an empirical law of fixed size m and N(0,1), as the exact
// integral of |F_hat - Phi| over the real line. F_hat is the constant k/m
// between consecutive order statistics; each piece is split where Phi
// crosses k/m and integrated with the Phi antiderivatives, tails included.
// The m-1 crossing points are computed once per size.
class StdNormalW1 {
public:
  explicit StdNormalW1(std::size_t m) : m_(m), levels_(m > 0 ? m - 1 : 0), quantiles_(levels_.size()) {
    if (m == 0) throw EmptySample("sample is empty");
    for (std::size_t k = 1; k < m; ++k) {
      levels_[k - 1] = static_cast<double>(k) / static_cast<double>(m);
      quantiles_[k - 1] = normal_quantile(levels_[k - 1]);
    }
  }

  std::size_t size() const noexcept { return m_; }

  // `sorted` must be ascending, finite and of length size().
  double sorted(std::span<const double> x) const {
    if (x.size() != m_) throw TooSmall("sample size does not match the engine");
    double total = detail::lower_area(x.front()) + detail::upper_area(x.back());
    for (std::size_t k = 1; k < m_; ++k)
      total += detail::abs_gap_area(x[k - 1], x[k], levels_[k - 1], quantiles_[k - 1]);
    return total;
  }

  double operator()(std::span<const double> sample) const {
    detail::validate(sample);
    std::vector<double> x(sample.begin(), sample.end());
    std::sort(x.begin(), x.end());
    return sorted(x);
  }

private:
  std::size_t m_;
  std::vector<double> levels_;
  std::vector<double> quantiles_;
};

inline double w1_to_std_normal(std::span<const double> sample) {
  detail::validate(sample);
  return StdNormalW1(sample.size())(sample);
}

// sup_x |F_hat(x) - Phi(x)|, attained at an order statistic from one side.
inline double kolmogorov_to_std_normal(std::span<const double> sample) {
  detail::validate(sample);
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const double m = static_cast<double>(x.size());
  double best = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = normal_cdf(x[i]);
    best = std::max({best, std::abs(static_cast<double>(i + 1) / m - cdf),
                     std::abs(static_cast<double>(i) / m - cdf)});
  }
  return best;
}

// Central-moment cumulants with delete-one jackknife standard errors.
// var is the plug-in m2, k3 = m3, k4 = m4 - 3 m2^2.
struct Cumulants {
  double mean;
  double var;
  double k3;
  double k4;
  double mean_se;
  double var_se;
  double k3_se;
  double k4_se;
};

namespace detail {

struct CentralMoments {
  long double mean, m2, m3, m4;
};

// Moments of a sample given its power sums about a fixed shift.
inline CentralMoments from_power_sums(long double count, long double s1, long double s2, long double s3,
                                      long double s4) noexcept {
  const long double mu = s1 / count;
  const long double e2 = s2 / count, e3 = s3 / count, e4 = s4 / count;
  const long double mu2 = mu * mu;
  return {mu, e2 - mu2, e3 - 3.0L * mu * e2 + 2.0L * mu2 * mu,
          e4 - 4.0L * mu * e3 + 6.0L * mu2 * e2 - 3.0L * mu2 * mu2};
}

} // namespace detail

inline Cumulants sample_cumulants(std::span<const double> sample) {
  detail::validate(sample);
  if (sample.size() < 4) throw TooSmall("sample_cumulants needs at least 4 values");
  const auto count = static_cast<long double>(sample.size());

  long double shift = 0.0L;
  for (double v : sample) shift += v;
  shift /= count;

  long double s1 = 0.0L, s2 = 0.0L, s3 = 0.0L, s4 = 0.0L;
  for (double v : sample) {
    const long double y = v - shift;
    const long double y2 = y * y;
    s1 += y;
    s2 += y2;
    s3 += y2 * y;
    s4 += y2 * y2;
  }
  const auto full = detail::from_power_sums(count, s1, s2, s3, s4);

  // Jackknife: leave-one-out statistics from the same power sums, accumulated
  // as deviations from the full-sample value.
  const long double full_k4 = full.m4 - 3.0L * full.m2 * full.m2;
  const long double loo_count = count - 1.0L;
  long double sum_mean = 0.0L, sum_var = 0.0L, sum_k3 = 0.0L, sum_k4 = 0.0L;
  long double sq_mean = 0.0L, sq_var = 0.0L, sq_k3 = 0.0L, sq_k4 = 0.0L;
  for (double v : sample) {
    const long double y = v - shift;
    const long double y2 = y * y;
    const auto loo = detail::from_power_sums(loo_count, s1 - y, s2 - y2, s3 - y2 * y, s4 - y2 * y2);
    const long double d_mean = loo.mean - full.mean;
    const long double d_var = loo.m2 - full.m2;
    const long double d_k3 = loo.m3 - full.m3;
    const long double d_k4 = (loo.m4 - 3.0L * loo.m2 * loo.m2) - full_k4;
    sum_mean += d_mean; sq_mean += d_mean * d_mean;
    sum_var += d_var; sq_var += d_var * d_var;
    sum_k3 += d_k3; sq_k3 += d_k3 * d_k3;
    sum_k4 += d_k4; sq_k4 += d_k4 * d_k4;
  }
  auto jack_se = [&](long double sum, long double sq) {
    const long double spread = std::max(0.0L, sq - sum * sum / count);
    return static_cast<double>(std::sqrt((count - 1.0L) / count * spread));
  };
  return {static_cast<double>(full.mean + shift),
          static_cast<double>(full.m2),
          static_cast<double>(full.m3),
          static_cast<double>(full_k4),
          jack_se(sum_mean, sq_mean),
          jack_se(sum_var, sq_var),
          jack_se(sum_k3, sq_k3),
          jack_se(sum_k4, sq_k4)};
}

struct MomentSummary {
  double mean;
  double variance;
  double skewness;
  double excess_kurtosis;
};

struct DistanceReport {
  double w1;
  double kolmogorov;
  std::size_t sample_size;
  MomentSummary moments;
};

inline MomentSummary moment_summary(std::span<const double> sample) {
  detail::validate(sample);
  long double mean = 0.0L;
  for (double v : sample) mean += v;
  mean /= static_cast<long double>(sample.size());
  long double m2 = 0.0L, m3 = 0.0L, m4 = 0.0L;
  for (double v : sample) {
    const long double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  const auto count = static_cast<long double>(sample.size());
  m2 /= count;
  m3 /= count;
  m4 /= count;
  const bool flat = m2 <= 0.0L;
  return {static_cast<double>(mean), static_cast<double>(m2),
          flat ? 0.0 : static_cast<double>(m3 / std::pow(m2, 1.5L)),
          flat ? 0.0 : static_cast<double>(m4 / (m2 * m2) - 3.0L)};
}

inline DistanceReport distance_report(std::span<const double> sample) {
  return {w1_to_std_normal(sample), kolmogorov_to_std_normal(sample), sample.size(),
          moment_summary(sample)};
}

inline constexpr int kDefaultBootstrapResamples = 200;

// Nonparametric bootstrap standard error of w1_to_std_normal.
inline double bootstrap_w1_se(std::span<const double> sample, std::uint64_t seed,
                              int resamples = kDefaultBootstrapResamples) {
  detail::validate(sample);
  if (resamples < 2) throw TooSmall("bootstrap needs at least 2 resamples");
  const StdNormalW1 engine(sample.size());
  std::vector<double> draw(sample.size());
  long double sum = 0.0L, sq = 0.0L;
  for (int b = 0; b < resamples; ++b) {
    IndexStream pick(seed, static_cast<std::uint64_t>(b));
    for (auto& d : draw) d = sample[pick.next(sample.size())];
    std::sort(draw.begin(), draw.end());
    const long double w = engine.sorted(draw);
    sum += w;
    sq += w * w;
  }
  const long double r = resamples;
  return static_cast<double>(std::sqrt(std::max(0.0L, (sq - sum * sum / r) / (r - 1.0L))));
}

} // namespace oudrift::metrics
