#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "oudrift/error.hpp"
#include "oudrift/ou_core.hpp"

// Exact moments and cumulants of F_n(Z) = sqrt(T) (f_n(Z) - 1/(2 theta)) and of
// Lambda_n / sqrt(T). Every closed form has a literal finite-sum twin so the
// two can be checked against each other.
namespace oudrift::oracles {

inline constexpr std::int64_t kTripleSumCap = 512;
inline constexpr std::int64_t kQuadrupleSumCap = 128;
inline constexpr std::int64_t kReducedSumCap = 8192;
inline constexpr std::int64_t kChaosMatrixCap = 1024;

namespace detail {

// Kahan-Babuska accumulator in long double.
class Accumulator {
public:
  void add(long double v) noexcept {
    const long double t = sum_ + v;
    if (std::fabs(sum_) >= std::fabs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  long double value() const noexcept { return sum_ + comp_; }

private:
  long double sum_ = 0.0L;
  long double comp_ = 0.0L;
};

// rho(k delta) for k = 0..n-1.
inline std::vector<long double> rho_table(const OuParams& p) {
  std::vector<long double> r(static_cast<std::size_t>(p.n()));
  const long double theta = p.theta();
  for (std::size_t k = 0; k < r.size(); ++k)
    r[k] = std::exp(-theta * static_cast<long double>(k) * p.delta()) / (2.0L * theta);
  return r;
}

inline void require_at_most(const OuParams& p, std::int64_t cap, std::string_view what) {
  if (p.n() > cap)
    throw TooLarge(std::string(what) + " is limited to n <= " + std::to_string(cap) + ", got n = " +
                   std::to_string(p.n()));
}

// Entries of Sigma^2 where Sigma_{ab} = rho((a-b) delta), in O(1) each:
// for a <= b,
//   (Sigma^2)_{ab} = q^{b-a} / (4 theta^2) [ (b-a+1) + G(a) + G(n-1-b) ],
// q = e^{-theta delta}, G(m) = sum_{k=1}^m q^{2k}.
class SigmaSquared {
public:
  explicit SigmaSquared(const OuParams& p)
      : n_(p.n()), scale_(1.0L / (4.0L * static_cast<long double>(p.theta()) * p.theta())) {
    const long double x = static_cast<long double>(p.theta()) * p.delta();
    const auto n = static_cast<std::size_t>(n_);
    pow_q_.resize(n);
    geo_.resize(n);
    for (std::size_t k = 0; k < n; ++k) pow_q_[k] = std::exp(-x * static_cast<long double>(k));
    geo_[0] = 0.0L;
    for (std::size_t m = 1; m < n; ++m)
      geo_[m] = geo_[m - 1] + std::exp(-2.0L * x * static_cast<long double>(m));
  }

  long double operator()(std::int64_t a, std::int64_t b) const noexcept {
    if (a > b) std::swap(a, b);
    const auto gap = static_cast<std::size_t>(b - a);
    return scale_ * pow_q_[gap] *
           (static_cast<long double>(gap + 1) + geo_[static_cast<std::size_t>(a)] +
            geo_[static_cast<std::size_t>(n_ - 1 - b)]);
  }

private:
  std::int64_t n_;
  long double scale_;
  std::vector<long double> pow_q_;
  std::vector<long double> geo_;
};

} // namespace detail

// E[F_n(Z)^2] = (2 delta / n) sum_{i,j} rho^2((j-i) delta), evaluated literally.
inline double exact_var_fn_z_literal(const OuParams& p) {
  const auto r = detail::rho_table(p);
  const auto n = static_cast<std::size_t>(p.n());
  detail::Accumulator acc;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const long double v = r[i > j ? i - j : j - i];
      acc.add(v * v);
    }
  return static_cast<double>(2.0L * p.delta() / static_cast<long double>(n) * acc.value());
}

// Closed form of the same double sum:
//   delta/(2 theta^2) + delta/(theta^2 n) sum_{k=1}^{n-1} (n-k) r^k,   r = e^{-2 theta delta},
// with sum_{k=1}^{n-1} (n-k) r^k = r (n u - v) / u^2, u = 1 - r, v = 1 - r^n.
inline double exact_var_fn_z(const OuParams& p) {
  const long double theta = p.theta();
  const long double delta = p.delta();
  const long double n = static_cast<long double>(p.n());
  const long double x = 2.0L * theta * delta;
  const long double u = -std::expm1(-x);
  const long double r = 1.0L - u;
  long double tail;
  if (n * x < 1e-3L) {
    // n u - v cancels badly; sum the short series directly.
    detail::Accumulator acc;
    long double rk = 1.0L;
    for (std::int64_t k = 1; k < p.n(); ++k) {
      rk *= r;
      acc.add((n - static_cast<long double>(k)) * rk);
    }
    tail = acc.value();
  } else {
    const long double v = -std::expm1(-x * n);
    tail = r * (n * u - v) / (u * u);
  }
  return static_cast<double>(delta / (2.0L * theta * theta) + delta / (theta * theta * n) * tail);
}

// Third cumulant 8 (delta/n)^{3/2} sum_{i,j,k} rho(j-i) rho(i-k) rho(k-j), literal O(n^3).
inline double k3_fn_z(const OuParams& p, std::int64_t cap = kTripleSumCap) {
  detail::require_at_most(p, cap, "k3_fn_z triple sum");
  const auto r = detail::rho_table(p);
  const auto n = static_cast<std::int64_t>(r.size());
  long double total = 0.0L;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      const long double rij = r[static_cast<std::size_t>(std::abs(j - i))];
      long double inner = 0.0L;
      for (std::int64_t k = 0; k < n; ++k)
        inner += r[static_cast<std::size_t>(std::abs(i - k))] * r[static_cast<std::size_t>(std::abs(k - j))];
      total += rij * inner;
    }
  const long double scale = std::pow(static_cast<long double>(p.delta()) / n, 1.5L);
  return static_cast<double>(8.0L * scale * total);
}

// Same third cumulant as trace(Sigma^3) = sum_{a,b} (Sigma^2)_{ab} Sigma_{ab}, O(n^2).
inline double k3_fn_z_reduced(const OuParams& p, std::int64_t cap = kReducedSumCap) {
  detail::require_at_most(p, cap, "k3_fn_z reduced sum");
  const detail::SigmaSquared sq(p);
  const auto r = detail::rho_table(p);
  const std::int64_t n = p.n();
  long double total = 0.0L;
  for (std::int64_t a = 0; a < n; ++a)
    for (std::int64_t b = 0; b < n; ++b) total += sq(a, b) * r[static_cast<std::size_t>(std::abs(a - b))];
  const long double scale = std::pow(static_cast<long double>(p.delta()) / n, 1.5L);
  return static_cast<double>(8.0L * scale * total);
}

// 48 ||eps_n (x)_1 eps_n||^2
//   = 48 delta^2/n^2 sum_{k1..k4} rho(k1-k2) rho(k3-k4) rho(k1-k3) rho(k2-k4),
// literal O(n^4). For a second-chaos variable this equals kappa_4 exactly.
inline double k4_fn_z_bound_literal(const OuParams& p, std::int64_t cap = kQuadrupleSumCap) {
  detail::require_at_most(p, cap, "k4_fn_z quadruple sum");
  const auto r = detail::rho_table(p);
  const auto n = static_cast<std::int64_t>(r.size());
  auto at = [&](std::int64_t d) { return r[static_cast<std::size_t>(d < 0 ? -d : d)]; };
  long double total = 0.0L;
  for (std::int64_t k1 = 0; k1 < n; ++k1)
    for (std::int64_t k2 = 0; k2 < n; ++k2) {
      const long double r12 = at(k1 - k2);
      for (std::int64_t k3 = 0; k3 < n; ++k3) {
        const long double r13 = at(k1 - k3);
        long double inner = 0.0L;
        for (std::int64_t k4 = 0; k4 < n; ++k4) inner += at(k3 - k4) * at(k2 - k4);
        total += r12 * r13 * inner;
      }
    }
  const long double dn = static_cast<long double>(p.delta()) / n;
  return static_cast<double>(48.0L * dn * dn * total);
}

// Same quantity after collapsing the k4 and k1 sums into (Sigma^2) entries:
// the sum is trace(Sigma^4) = sum_{a,b} (Sigma^2)_{ab}^2, O(n^2).
inline double k4_fn_z_bound_reduced(const OuParams& p, std::int64_t cap = kReducedSumCap) {
  detail::require_at_most(p, cap, "k4_fn_z reduced sum");
  const detail::SigmaSquared sq(p);
  const std::int64_t n = p.n();
  long double total = 0.0L;
  for (std::int64_t a = 0; a < n; ++a) {
    const long double diag = sq(a, a);
    total += diag * diag;
    for (std::int64_t b = a + 1; b < n; ++b) {
      const long double v = sq(a, b);
      total += 2.0L * v * v;
    }
  }
  const long double dn = static_cast<long double>(p.delta()) / n;
  return static_cast<double>(48.0L * dn * dn * total);
}

inline double k4_fn_z_bound(const OuParams& p) {
  return p.n() <= kQuadrupleSumCap ? k4_fn_z_bound_literal(p) : k4_fn_z_bound_reduced(p);
}

// E[(Lambda_n / sqrt T)^2] = c (1/n) sum_{i=1}^n (1 - e^{-2 theta t_{i-1}}),
// c = (1 - e^{-2 theta delta}) / ((2 theta)^2 delta). Literal form.
inline double exact_var_lambda_literal(const OuParams& p) {
  const long double theta = p.theta();
  const long double delta = p.delta();
  const long double c = -std::expm1(-2.0L * theta * delta) / (4.0L * theta * theta * delta);
  detail::Accumulator acc;
  for (std::int64_t i = 1; i <= p.n(); ++i)
    acc.add(-std::expm1(-2.0L * theta * static_cast<long double>(i - 1) * delta));
  return static_cast<double>(c * acc.value() / static_cast<long double>(p.n()));
}

// Closed form c - c (1 - e^{-2 theta T}) / (n (1 - e^{-2 theta delta})).
inline double exact_var_lambda(const OuParams& p) {
  const long double theta = p.theta();
  const long double delta = p.delta();
  const long double n = static_cast<long double>(p.n());
  const long double u = -std::expm1(-2.0L * theta * delta);
  const long double c = u / (4.0L * theta * theta * delta);
  const long double v = -std::expm1(-2.0L * theta * n * delta);
  return static_cast<double>(c * (1.0L - v / (n * u)));
}

// Closed-form fourth cumulant of Lambda_n / sqrt(T) as derived by keeping only
// the diagonal terms of the fourth moment:
//   c^2 (1/n^2) sum_{i=1}^n (1 - e^{-2 theta t_{i-1}})^2.
// This omits the cross terms E[zeta_{i-1} dzeta_i zeta_{j-1}^2 dzeta_j^2 ...]
// and is far below the true kappa_4 (see lambda_cumulants_exact).
inline double k4_lambda(const OuParams& p) {
  const long double theta = p.theta();
  const long double delta = p.delta();
  const long double c = -std::expm1(-2.0L * theta * delta) / (4.0L * theta * theta * delta);
  detail::Accumulator acc;
  for (std::int64_t i = 1; i <= p.n(); ++i) {
    const long double w = -std::expm1(-2.0L * theta * static_cast<long double>(i - 1) * delta);
    acc.add(w * w);
  }
  const long double n = static_cast<long double>(p.n());
  return static_cast<double>(c * c * acc.value() / (n * n));
}

// Upper bound c^2 / n on k4_lambda.
inline double k4_lambda_bound(const OuParams& p) {
  const long double theta = p.theta();
  const long double delta = p.delta();
  const long double c = -std::expm1(-2.0L * theta * delta) / (4.0L * theta * theta * delta);
  return static_cast<double>(c * c / static_cast<long double>(p.n()));
}

// Claimed third cumulant of Lambda_n / sqrt(T).
inline double k3_lambda_is_zero(const OuParams&) { return 0.0; }

struct ChaosCumulants {
  double variance;
  double k3;
  double k4;
};

// Exact cumulants of Lambda_n / sqrt(T) from its quadratic-form representation
// xi^T A xi in the innovations: A_{ij} = s2 a^{i-1-j} / (2 sqrt T) for j < i,
// symmetric, zero diagonal. Then kappa_m = 2^{m-1} (m-1)! trace(A^m). O(n^3).
inline ChaosCumulants lambda_cumulants_exact(const OuParams& p, std::int64_t cap = kChaosMatrixCap) {
  detail::require_at_most(p, cap, "lambda_cumulants_exact");
  const auto n = static_cast<std::size_t>(p.n());
  const long double x = static_cast<long double>(p.theta()) * p.delta();
  const long double s2 = -std::expm1(-2.0L * x) / (2.0L * p.theta());
  const long double coef = s2 / (2.0L * std::sqrt(static_cast<long double>(p.horizon())));
  std::vector<long double> pow_a(n + 1);
  for (std::size_t k = 0; k <= n; ++k) pow_a[k] = std::exp(-x * static_cast<long double>(k));

  // Innovations 1..n map to rows 0..n-1.
  std::vector<long double> a(n * n, 0.0L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) a[i * n + j] = a[j * n + i] = coef * pow_a[i - 1 - j];

  std::vector<long double> a2(n * n, 0.0L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const long double aik = a[i * n + k];
      if (aik == 0.0L) continue;
      for (std::size_t j = 0; j < n; ++j) a2[i * n + j] += aik * a[k * n + j];
    }
  long double tr2 = 0.0L, tr3 = 0.0L, tr4 = 0.0L;
  for (std::size_t i = 0; i < n * n; ++i) {
    tr3 += a2[i] * a[i];
    tr4 += a2[i] * a2[i];
  }
  for (std::size_t i = 0; i < n; ++i) tr2 += a2[i * n + i];
  return {static_cast<double>(2.0L * tr2), static_cast<double>(8.0L * tr3),
          static_cast<double>(48.0L * tr4)};
}

enum class Quantity { VarFnZ, K3FnZ, K4FnZAbsBound, VarLambda, K4Lambda, K3LambdaExact, K4LambdaExact };

inline std::string_view to_string(Quantity q) {
  switch (q) {
  case Quantity::VarFnZ: return "exact_var_fn_z";
  case Quantity::K3FnZ: return "k3_fn_z";
  case Quantity::K4FnZAbsBound: return "k4_fn_z_bound";
  case Quantity::VarLambda: return "exact_var_lambda";
  case Quantity::K4Lambda: return "k4_lambda";
  case Quantity::K3LambdaExact: return "k3_lambda_exact";
  case Quantity::K4LambdaExact: return "k4_lambda_exact";
  }
  return "?";
}

// exact_value: the oracle. asymptotic_value: the limit as delta -> 0, T -> inf.
// bound_value: the rate expression of the matching estimate with its
// unknown constant set to 1.
struct MomentReport {
  Quantity quantity;
  double exact_value;
  double asymptotic_value;
  double bound_value;
  OuParams params;
};

inline MomentReport report(Quantity q, const OuParams& p) {
  const double theta = p.theta();
  const double delta = p.delta();
  const double n = static_cast<double>(p.n());
  const double inv_t = 1.0 / p.horizon();
  switch (q) {
  case Quantity::VarFnZ:
    return {q, exact_var_fn_z(p), 1.0 / (2.0 * theta * theta * theta), delta * delta + inv_t, p};
  case Quantity::K3FnZ:
    return {q, p.n() <= kTripleSumCap ? k3_fn_z(p) : k3_fn_z_reduced(p), 0.0,
            std::sqrt(delta) / std::pow(n, 1.5), p};
  case Quantity::K4FnZAbsBound:
    return {q, k4_fn_z_bound(p), 0.0, inv_t, p};
  case Quantity::VarLambda:
    return {q, exact_var_lambda(p), 1.0 / (2.0 * theta), delta + inv_t, p};
  case Quantity::K4Lambda:
    return {q, k4_lambda(p), 0.0, k4_lambda_bound(p), p};
  case Quantity::K3LambdaExact:
    return {q, lambda_cumulants_exact(p).k3, 0.0, std::sqrt(inv_t), p};
  case Quantity::K4LambdaExact:
    return {q, lambda_cumulants_exact(p).k4, 0.0, inv_t, p};
  }
  throw InvalidParams("unknown quantity");
}

} // namespace oudrift::oracles
