#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oudrift/error.hpp"
#include "oudrift/random.hpp"

namespace oudrift {

// Model and grid for dX = -theta X dt + dW observed at t_i = i * delta,
// i = 0..n. The horizon T = n * delta is always derived.
class OuParams {
public:
  OuParams(double theta, double delta, std::int64_t n) : theta_(theta), delta_(delta), n_(n) {
    if (!(std::isfinite(theta) && theta > 0.0))
      throw InvalidParams("theta must be a finite positive number, got " + std::to_string(theta));
    if (!(std::isfinite(delta) && delta > 0.0))
      throw InvalidParams("delta must be a finite positive number, got " + std::to_string(delta));
    if (n < 1)
      throw InvalidParams("n must be >= 1, got " + std::to_string(n));
  }

  double theta() const noexcept { return theta_; }
  double delta() const noexcept { return delta_; }
  std::int64_t n() const noexcept { return n_; }
  double horizon() const noexcept { return static_cast<double>(n_) * delta_; }
  double time(std::int64_t i) const noexcept { return static_cast<double>(i) * delta_; }

  friend bool operator==(const OuParams&, const OuParams&) = default;

private:
  double theta_;
  double delta_;
  std::int64_t n_;
};

enum class Variant { FromZero, Stationary };

inline std::string_view to_string(Variant v) {
  return v == Variant::FromZero ? "from_zero" : "stationary";
}

// Exact one-step transition X_{t+delta} = a X_t + sqrt(s2) xi.
struct Transition {
  double a;
  double s2;
};

inline Transition transition_coefficients(const OuParams& p) {
  const double x = p.theta() * p.delta();
  // s2 = (1 - e^{-2 theta delta}) / (2 theta), written with expm1 for small steps.
  return {std::exp(-x), -std::expm1(-2.0 * x) / (2.0 * p.theta())};
}

// Stationary covariance E[Z_t Z_0].
inline double rho(const OuParams& p, double t) {
  return std::exp(-p.theta() * std::abs(t)) / (2.0 * p.theta());
}

// One realised trajectory on the grid. When `innovations` is present it holds
// the standard normals driving the path: element 0 is the draw used for Z_0
// and element i (1..n) drives the step t_{i-1} -> t_i.
class SamplePath {
public:
  SamplePath(OuParams params, std::vector<double> values, Variant variant, std::uint64_t seed,
             std::uint64_t stream = 0, std::optional<std::vector<double>> innovations = std::nullopt)
      : params_(params), values_(std::move(values)), variant_(variant), seed_(seed),
        stream_(stream), innovations_(std::move(innovations)) {
    const auto expected = static_cast<std::size_t>(params_.n()) + 1;
    if (values_.size() != expected)
      throw InvalidPath("path has " + std::to_string(values_.size()) + " values, expected n+1 = " +
                        std::to_string(expected));
    if (variant_ == Variant::FromZero && values_.front() != 0.0)
      throw InvalidPath("FromZero path must start at exactly 0");
    for (double v : values_)
      if (!std::isfinite(v)) throw InvalidPath("path contains a non-finite value");
    if (innovations_ && innovations_->size() != expected)
      throw InvalidPath("innovations must have n+1 entries");
  }

  const OuParams& params() const noexcept { return params_; }
  const std::vector<double>& values() const noexcept { return values_; }
  Variant variant() const noexcept { return variant_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  bool has_innovations() const noexcept { return innovations_.has_value(); }
  const std::vector<double>& innovations() const {
    if (!innovations_) throw MissingInnovations("path was simulated without retained innovations");
    return *innovations_;
  }

private:
  OuParams params_;
  std::vector<double> values_;
  Variant variant_;
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::optional<std::vector<double>> innovations_;
};

struct SimulationOptions {
  bool retain_innovations = false;
  // Overrides the stationary start Z_0; the coupling tests use 0.0.
  std::optional<double> stationary_start;
};

// Standard normals of stream (seed, stream): element 0 feeds Z_0, element i
// (1..n) drives the step t_{i-1} -> t_i.
inline std::vector<double> draw_innovations(const OuParams& p, std::uint64_t seed, std::uint64_t stream) {
  NormalStream normals(seed, stream);
  std::vector<double> xi(static_cast<std::size_t>(p.n()) + 1);
  for (auto& v : xi) v = normals.next();
  return xi;
}

// Runs the exact AR(1) recursion over given innovations.
inline SamplePath path_from_innovations(const OuParams& p, Variant variant, std::vector<double> xi,
                                        std::uint64_t seed, std::uint64_t stream,
                                        const SimulationOptions& opts = {}) {
  const auto [a, s2] = transition_coefficients(p);
  const double step_sd = std::sqrt(s2);
  std::vector<double> values(xi.size());
  if (variant == Variant::Stationary)
    values[0] = opts.stationary_start.value_or(std::sqrt(rho(p, 0.0)) * xi[0]);
  for (std::size_t i = 1; i < xi.size(); ++i) values[i] = a * values[i - 1] + step_sd * xi[i];
  std::optional<std::vector<double>> kept;
  if (opts.retain_innovations) kept.emplace(std::move(xi));
  return SamplePath(p, std::move(values), variant, seed, stream, std::move(kept));
}

// Exact-in-law sample of X (FromZero) or Z (Stationary). Both variants read
// the same stream layout, so X and Z drawn from one (seed, stream) satisfy
// X_t = Z_t - e^{-theta t} Z_0 up to round-off.
inline SamplePath simulate_path(const OuParams& p, Variant variant, std::uint64_t seed,
                                std::uint64_t stream = 0, const SimulationOptions& opts = {}) {
  return path_from_innovations(p, variant, draw_innovations(p, seed, stream), seed, stream, opts);
}

struct CoupledPaths {
  SamplePath x;
  SamplePath z;
};

// X and Z driven by one innovation stream; identical to two simulate_path calls.
inline CoupledPaths simulate_coupled(const OuParams& p, std::uint64_t seed, std::uint64_t stream = 0,
                                     const SimulationOptions& opts = {}) {
  auto xi = draw_innovations(p, seed, stream);
  auto z = path_from_innovations(p, Variant::Stationary, xi, seed, stream, opts);
  return {path_from_innovations(p, Variant::FromZero, std::move(xi), seed, stream, opts), std::move(z)};
}

} // namespace oudrift
