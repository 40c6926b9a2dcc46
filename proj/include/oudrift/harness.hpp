#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "oudrift/error.hpp"
#include "oudrift/estimators.hpp"
#include "oudrift/metrics.hpp"
#include "oudrift/oracles.hpp"
#include "oudrift/ou_core.hpp"

namespace oudrift::harness {

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

struct Cell {
  std::int64_t n;
  double delta;

  double horizon() const noexcept { return static_cast<double>(n) * delta; }
  friend bool operator==(const Cell&, const Cell&) = default;
};

// Control quantities of the asymptotic regime at one cell.
struct CellTags {
  double delta_squared;       // delta^2
  double inv_sqrt_horizon;    // 1 / sqrt(n delta)
  double sqrt_n_delta_cubed;  // sqrt(n delta^3)
  double n_delta_eta;         // n delta^eta
};

inline CellTags tags(const Cell& c, double eta = 1.5) {
  const double n = static_cast<double>(c.n);
  return {c.delta * c.delta, 1.0 / std::sqrt(n * c.delta), std::sqrt(n * c.delta * c.delta * c.delta),
          n * std::pow(c.delta, eta)};
}

class Schedule {
public:
  Schedule(std::string name, std::vector<Cell> cells) : name_(std::move(name)), cells_(std::move(cells)) {
    for (const auto& c : cells_) {
      if (c.n < 2) throw ScheduleError(name_ + ": every cell needs n >= 2");
      if (!(std::isfinite(c.delta) && c.delta > 0.0)) throw ScheduleError(name_ + ": every cell needs delta > 0");
    }
  }

  const std::string& name() const noexcept { return name_; }
  const std::vector<Cell>& cells() const noexcept { return cells_; }

  // delta strictly decreasing and T strictly increasing along the cells.
  bool clt_valid() const noexcept {
    if (cells_.size() < 2) return false;
    for (std::size_t i = 1; i < cells_.size(); ++i)
      if (!(cells_[i].delta < cells_[i - 1].delta && cells_[i].horizon() > cells_[i - 1].horizon()))
        return false;
    return true;
  }

private:
  std::string name_;
  std::vector<Cell> cells_;
};

// delta_n = n^{-gamma} for n = 2^lo .. 2^hi.
inline Schedule power_schedule(std::string name, double gamma, int log2_lo, int log2_hi) {
  std::vector<Cell> cells;
  for (int k = log2_lo; k <= log2_hi; ++k) {
    const auto n = std::int64_t{1} << k;
    cells.push_back({n, std::pow(static_cast<double>(n), -gamma)});
  }
  return Schedule(std::move(name), std::move(cells));
}

inline Schedule fixed_delta_schedule(std::string name, double delta, std::vector<std::int64_t> ns) {
  std::vector<Cell> cells;
  for (auto n : ns) cells.push_back({n, delta});
  return Schedule(std::move(name), std::move(cells));
}

inline Schedule fixed_horizon_schedule(std::string name, double horizon, int log2_lo, int log2_hi) {
  std::vector<Cell> cells;
  for (int k = log2_lo; k <= log2_hi; ++k) {
    const auto n = std::int64_t{1} << k;
    cells.push_back({n, horizon / static_cast<double>(n)});
  }
  return Schedule(std::move(name), std::move(cells));
}

inline constexpr std::string_view kPresetNames[] = {"amce-gamma-half", "amle-gamma-3q", "coupling-sweep",
                                                    "negative-control-fixed-T"};

inline std::optional<Schedule> preset(std::string_view name) {
  if (name == "amce-gamma-half") return power_schedule(std::string(name), 0.5, 8, 14);
  if (name == "amle-gamma-3q") return power_schedule(std::string(name), 0.75, 8, 14);
  if (name == "coupling-sweep") return fixed_delta_schedule(std::string(name), 0.05, {256, 1024, 4096});
  if (name == "negative-control-fixed-T") return fixed_horizon_schedule(std::string(name), 8.0, 8, 12);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Parallel execution
// ---------------------------------------------------------------------------

// Requested worker count, then OU_BENCH_THREADS, then all cores.
inline int worker_count(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("OU_BENCH_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Calls body(i) for i in [0, count). Items are independent; the caller writes
// results to slot i and reduces them in index order afterwards.
template <class Body>
void parallel_for(std::size_t count, int threads, Body&& body) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count(threads)), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Monte Carlo cells
// ---------------------------------------------------------------------------

struct OracleCheck {
  std::string name;
  double exact;
  double empirical;
  double standard_error;
  double tolerance_se;
  bool gated;

  double z_score() const noexcept {
    return standard_error > 0.0 ? (empirical - exact) / standard_error : (empirical == exact ? 0.0 : INFINITY);
  }
  bool pass() const noexcept { return std::abs(z_score()) <= tolerance_se; }
};

struct McSummary {
  Cell cell;
  Estimator estimator;
  std::int64_t replications;
  std::int64_t excluded;
  metrics::DistanceReport distance;
  double w1_se;
  double mean_error;
  double mean_error_se;
  double rmse;
  double mean_estimate;
  double mae;
  double mae_se;
  metrics::Cumulants error_cumulants;
  std::vector<OracleCheck> oracle_checks;

  bool gated_checks_pass() const noexcept {
    return std::all_of(oracle_checks.begin(), oracle_checks.end(),
                       [](const OracleCheck& c) { return !c.gated || c.pass(); });
  }
};

struct CellOptions {
  IndexConvention convention = IndexConvention::Body;
  int threads = 0;
  int bootstrap_resamples = metrics::kDefaultBootstrapResamples;
  bool oracle_checks = true;
  double gate_sigmas = 4.0;
  double degenerate_abort_fraction = 1e-3;
};

inline constexpr std::int64_t kMinReplicationsForFit = 100;

namespace detail {

inline double mean_se(std::span<const double> v, double* mean_out = nullptr) {
  long double s = 0.0L;
  for (double x : v) s += x;
  const long double m = s / static_cast<long double>(v.size());
  long double ss = 0.0L;
  for (double x : v) ss += (x - m) * (x - m);
  if (mean_out) *mean_out = static_cast<double>(m);
  if (v.size() < 2) return 0.0;
  return static_cast<double>(std::sqrt(ss / static_cast<long double>(v.size() - 1) /
                                       static_cast<long double>(v.size())));
}

inline std::uint64_t bootstrap_seed(std::uint64_t master_seed, const Cell& c) {
  // splitmix64 finaliser over the master seed and the cell size.
  std::uint64_t z = master_seed ^ (static_cast<std::uint64_t>(c.n) * 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct Replicate {
  bool degenerate = false;
  double normalized_error = 0.0;
  double estimate = 0.0;
  double fn_z = 0.0;
  double lambda_scaled = 0.0;
};

inline void add_cumulant_checks(std::vector<OracleCheck>& out, const OuParams& p, std::span<const double> fz,
                                std::span<const double> g, double gate) {
  const auto cf = metrics::sample_cumulants(fz);
  out.push_back({"exact_var_fn_z", oracles::exact_var_fn_z(p), cf.var, cf.var_se, gate, true});
  if (p.n() <= oracles::kReducedSumCap) {
    out.push_back({"k3_fn_z", oracles::k3_fn_z_reduced(p), cf.k3, cf.k3_se, gate, true});
    out.push_back({"k4_fn_z_bound", oracles::k4_fn_z_bound(p), cf.k4, cf.k4_se, gate, true});
  }
  const auto cg = metrics::sample_cumulants(g);
  out.push_back({"exact_var_lambda", oracles::exact_var_lambda(p), cg.var, cg.var_se, gate, true});
  if (p.n() <= oracles::kChaosMatrixCap) {
    const auto exact = oracles::lambda_cumulants_exact(p);
    out.push_back({"k3_lambda_exact", exact.k3, cg.k3, cg.k3_se, gate, true});
    out.push_back({"k4_lambda_exact", exact.k4, cg.k4, cg.k4_se, gate, true});
  }
  // Closed forms that drop the cross terms of the Lambda moments; reported, not gated.
  out.push_back({"k3_lambda_is_zero", oracles::k3_lambda_is_zero(p), cg.k3, cg.k3_se, gate, false});
  out.push_back({"k4_lambda", oracles::k4_lambda(p), cg.k4, cg.k4_se, gate, false});
}

} // namespace detail

// Simulates `replications` coupled (X, Z) paths with streams 0..R-1 of
// master_seed and summarises the normalized estimation errors. Results do not
// depend on the worker count.
inline McSummary run_cell(double theta, const Cell& cell, Estimator estimator, std::int64_t replications,
                          std::uint64_t master_seed, const CellOptions& opts = {}) {
  if (replications < 2) throw TooSmall("run_cell needs at least 2 replications");
  const OuParams params(theta, cell.delta, cell.n);
  const double sqrt_t = std::sqrt(params.horizon());
  const double half_inv_theta = 1.0 / (2.0 * theta);
  const auto reps = static_cast<std::size_t>(replications);

  std::vector<detail::Replicate> out(reps);
  parallel_for(reps, opts.threads, [&](std::size_t i) {
    SimulationOptions sim;
    sim.retain_innovations = opts.oracle_checks;
    auto& r = out[i];
    if (opts.oracle_checks) {
      const auto paths = simulate_coupled(params, master_seed, i, sim);
      r.fn_z = sqrt_t * (f_n(paths.z, opts.convention) - half_inv_theta);
      r.lambda_scaled = lambda_n(paths.x) / sqrt_t;
      try {
        const auto rec = estimate(estimator, paths.x, opts.convention);
        r.estimate = rec.estimate;
        r.normalized_error = rec.normalized_error;
      } catch (const DegenerateDenominator&) {
        r.degenerate = true;
      }
    } else {
      const auto x = simulate_path(params, Variant::FromZero, master_seed, i, sim);
      try {
        const auto rec = estimate(estimator, x, opts.convention);
        r.estimate = rec.estimate;
        r.normalized_error = rec.normalized_error;
      } catch (const DegenerateDenominator&) {
        r.degenerate = true;
      }
    }
  });

  std::vector<double> errors, abs_errors, estimates, fz, g;
  errors.reserve(reps);
  for (const auto& r : out) {
    if (opts.oracle_checks) {
      fz.push_back(r.fn_z);
      g.push_back(r.lambda_scaled);
    }
    if (r.degenerate) continue;
    errors.push_back(r.normalized_error);
    abs_errors.push_back(std::abs(r.estimate - theta));
    estimates.push_back(r.estimate);
  }
  const auto excluded = static_cast<std::int64_t>(reps - errors.size());
  if (static_cast<double>(excluded) > opts.degenerate_abort_fraction * static_cast<double>(reps))
    throw TooManyDegeneratePaths(std::to_string(excluded) + " of " + std::to_string(reps) +
                                 " paths had a degenerate denominator");
  if (errors.size() < 4) throw TooSmall("fewer than 4 usable replications");

  McSummary s{cell, estimator, replications, excluded, metrics::distance_report(errors), 0.0, 0.0, 0.0, 0.0,
              0.0, 0.0, 0.0, metrics::sample_cumulants(errors), {}};
  s.w1_se = metrics::bootstrap_w1_se(errors, detail::bootstrap_seed(master_seed, cell), opts.bootstrap_resamples);
  s.mean_error_se = detail::mean_se(errors, &s.mean_error);
  long double sq = 0.0L;
  for (double e : errors) sq += static_cast<long double>(e) * e;
  s.rmse = static_cast<double>(std::sqrt(sq / static_cast<long double>(errors.size())));
  detail::mean_se(estimates, &s.mean_estimate);
  s.mae_se = detail::mean_se(abs_errors, &s.mae);

  if (opts.oracle_checks) {
    detail::add_cumulant_checks(s.oracle_checks, params, fz, g, opts.gate_sigmas);
    // Normality screen on the normalized errors; informational at desk scale.
    s.oracle_checks.push_back({"error_k3_zero", 0.0, s.error_cumulants.k3, s.error_cumulants.k3_se,
                               opts.gate_sigmas, false});
    s.oracle_checks.push_back({"error_k4_zero", 0.0, s.error_cumulants.k4, s.error_cumulants.k4_se,
                               opts.gate_sigmas, false});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Rate fits
// ---------------------------------------------------------------------------

struct RateFit {
  std::string schedule;
  std::string response;
  std::string predictor;
  double slope;
  double intercept;
  double r2;
  std::size_t cells;
};

// Least squares of log(distance) on log(bound).
inline RateFit fit_rate(std::span<const std::pair<double, double>> points, std::string schedule = {},
                        std::string response = {}, std::string predictor = {}) {
  if (points.size() < 3)
    throw InsufficientCells("a rate fit needs at least 3 cells, got " + std::to_string(points.size()));
  std::vector<long double> xs, ys;
  for (const auto& [bound, distance] : points) {
    if (!(bound > 0.0) || !(distance > 0.0) || !std::isfinite(bound) || !std::isfinite(distance))
      throw NonPositiveValue("rate fit values must be finite and positive");
    xs.push_back(std::log(static_cast<long double>(bound)));
    ys.push_back(std::log(static_cast<long double>(distance)));
  }
  const auto m = static_cast<long double>(xs.size());
  long double mx = 0.0L, my = 0.0L;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= m;
  my /= m;
  long double sxx = 0.0L, sxy = 0.0L, syy = 0.0L;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0.0L) throw NonPositiveValue("rate fit needs at least two distinct bound values");
  const long double slope = sxy / sxx;
  const long double intercept = my - slope * mx;
  const long double r2 = syy > 0.0L ? (sxy * sxy) / (sxx * syy) : 1.0L;
  return {std::move(schedule), std::move(response), std::move(predictor), static_cast<double>(slope),
          static_cast<double>(intercept), static_cast<double>(r2), points.size()};
}

// The two terms of the Wasserstein bound for each estimator:
//   AMCE: delta^2 + 1/sqrt(n delta)
//   AMLE: 1/sqrt(n delta) + sqrt(n delta^3)
struct BoundTerms {
  double term1;
  double term2;
  double total() const noexcept { return term1 + term2; }
  double dominant() const noexcept { return std::max(term1, term2); }
};

inline BoundTerms bound_terms(Estimator e, const Cell& c) {
  const auto t = tags(c);
  if (e == Estimator::AMCE) return {t.delta_squared, t.inv_sqrt_horizon};
  return {t.inv_sqrt_horizon, t.sqrt_n_delta_cubed};
}

inline std::string_view bound_expression(Estimator e) {
  return e == Estimator::AMCE ? "delta^2 + 1/sqrt(n delta)" : "1/sqrt(n delta) + sqrt(n delta^3)";
}

struct ScheduleResult {
  std::string schedule;
  Estimator estimator;
  bool clt_valid;
  std::vector<McSummary> cells;
  std::vector<BoundTerms> bounds;
  std::optional<RateFit> fit;           // W1 against the full bound expression
  std::optional<RateFit> dominant_fit;  // W1 against the larger bound term
  std::optional<RateFit> n_fit;         // W1 against n, i.e. the empirical exponent in n
  bool w1_strictly_decreasing = false;
  bool first_last_separated = false;  // W1 first - W1 last > 3 combined bootstrap SEs

  bool gated_checks_pass() const noexcept {
    return std::all_of(cells.begin(), cells.end(), [](const McSummary& s) { return s.gated_checks_pass(); });
  }
};

struct ScheduleOptions {
  CellOptions cell;
  // CLT responses need delta -> 0 and T -> infinity along the schedule; a
  // negative-control run turns this off and records the outcome only.
  bool require_clt_valid = true;
  bool fit = true;
};

inline ScheduleResult run_schedule(double theta, const Schedule& schedule, Estimator estimator,
                                   std::int64_t replications, std::uint64_t master_seed,
                                   const ScheduleOptions& opts = {}) {
  const bool valid = schedule.clt_valid();
  if (opts.require_clt_valid && !valid)
    throw ScheduleError(schedule.name() + " is not CLT-valid (delta must decrease and T must increase)");
  if (opts.fit) {
    const std::size_t eligible = replications >= kMinReplicationsForFit ? schedule.cells().size() : 0;
    if (eligible < 3)
      throw InsufficientCells("rate fit needs >= 3 cells with >= " + std::to_string(kMinReplicationsForFit) +
                              " replications; " + std::to_string(eligible) + " eligible");
  }

  ScheduleResult result{schedule.name(), estimator, valid, {}, {}, {}, {}, {}};
  for (const auto& cell : schedule.cells()) {
    result.cells.push_back(run_cell(theta, cell, estimator, replications, master_seed, opts.cell));
    result.bounds.push_back(bound_terms(estimator, cell));
  }

  const auto& cs = result.cells;
  result.w1_strictly_decreasing = true;
  for (std::size_t i = 1; i < cs.size(); ++i)
    if (!(cs[i].distance.w1 < cs[i - 1].distance.w1)) result.w1_strictly_decreasing = false;
  if (cs.size() >= 2) {
    const auto& a = cs.front();
    const auto& b = cs.back();
    result.first_last_separated =
        a.distance.w1 - b.distance.w1 > 3.0 * std::sqrt(a.w1_se * a.w1_se + b.w1_se * b.w1_se);
  }

  if (opts.fit) {
    std::vector<std::pair<double, double>> full, dominant, by_n;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      full.emplace_back(result.bounds[i].total(), cs[i].distance.w1);
      dominant.emplace_back(result.bounds[i].dominant(), cs[i].distance.w1);
      by_n.emplace_back(static_cast<double>(cs[i].cell.n), cs[i].distance.w1);
    }
    const std::string response = std::string("W1_") + (estimator == Estimator::AMCE ? "AMCE" : "AMLE");
    result.fit = fit_rate(full, schedule.name(), response, std::string(bound_expression(estimator)));
    result.dominant_fit = fit_rate(dominant, schedule.name(), response, "dominant bound term");
    result.n_fit = fit_rate(by_n, schedule.name(), response, "n");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Coupling between X and its stationary version Z
// ---------------------------------------------------------------------------

struct CouplingRow {
  Cell cell;
  double l2;          // ||F_n(X) - F_n(Z)||_{L^2}
  double l4;          // ||F_n(X) - F_n(Z)||_{L^4}
  double l2_scaled;   // l2 * n delta
  double l2_sqrt_t;   // l2 * sqrt(n delta)
  double max_abs;
};

struct CouplingReport {
  std::vector<CouplingRow> rows;
  double scaled_ratio;  // max / min of l2 * n delta across cells
  bool within_factor;   // scaled_ratio <= factor
  bool l4_decreasing;
};

inline CouplingReport coupling_check(double theta, std::span<const Cell> cells, std::int64_t replications,
                                     std::uint64_t master_seed, double factor = 10.0, int threads = 0,
                                     bool zero_start = false) {
  if (cells.empty()) throw InsufficientCells("coupling_check needs at least one cell");
  CouplingReport report{{}, 0.0, false, true};
  for (const auto& cell : cells) {
    const OuParams params(theta, cell.delta, cell.n);
    const double sqrt_t = std::sqrt(params.horizon());
    std::vector<double> diff(static_cast<std::size_t>(replications));
    SimulationOptions sim;
    if (zero_start) sim.stationary_start = 0.0;
    parallel_for(diff.size(), threads, [&](std::size_t i) {
      const auto paths = simulate_coupled(params, master_seed, i, sim);
      diff[i] = sqrt_t * (f_n(paths.x) - f_n(paths.z));
    });
    long double s2 = 0.0L, s4 = 0.0L;
    double max_abs = 0.0;
    for (double d : diff) {
      const long double d2 = static_cast<long double>(d) * d;
      s2 += d2;
      s4 += d2 * d2;
      max_abs = std::max(max_abs, std::abs(d));
    }
    const auto count = static_cast<long double>(diff.size());
    const double l2 = static_cast<double>(std::sqrt(s2 / count));
    const double l4 = static_cast<double>(std::sqrt(std::sqrt(s4 / count)));
    report.rows.push_back({cell, l2, l4, l2 * params.horizon(), l2 * sqrt_t, max_abs});
  }
  double lo = INFINITY, hi = 0.0;
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    lo = std::min(lo, report.rows[i].l2_scaled);
    hi = std::max(hi, report.rows[i].l2_scaled);
    if (i > 0 && !(report.rows[i].l4 < report.rows[i - 1].l4)) report.l4_decreasing = false;
  }
  report.scaled_ratio = lo > 0.0 ? hi / lo : (hi == 0.0 ? 1.0 : INFINITY);
  report.within_factor = report.scaled_ratio <= factor;
  return report;
}

// ---------------------------------------------------------------------------
// Consistency
// ---------------------------------------------------------------------------

struct ConsistencyRow {
  Cell cell;
  double mae;
  double mae_se;
  double mean_estimate;
  double relative_error;  // |mean estimate - theta| / theta
};

struct ConsistencyReport {
  std::vector<ConsistencyRow> rows;
  bool mae_decreasing;         // each step down by more than 3 combined SEs
  bool last_within_5_percent;  // relative error of the mean estimate at the last cell
};

inline ConsistencyReport consistency_check(double theta, const Schedule& schedule, Estimator estimator,
                                           std::int64_t replications, std::uint64_t master_seed,
                                           const CellOptions& opts = {}) {
  CellOptions cell_opts = opts;
  cell_opts.oracle_checks = false;
  cell_opts.bootstrap_resamples = 2;
  ConsistencyReport report{{}, true, false};
  for (const auto& cell : schedule.cells()) {
    const auto s = run_cell(theta, cell, estimator, replications, master_seed, cell_opts);
    report.rows.push_back({cell, s.mae, s.mae_se, s.mean_estimate, std::abs(s.mean_estimate - theta) / theta});
  }
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    const auto& a = report.rows[i - 1];
    const auto& b = report.rows[i];
    if (!(a.mae - b.mae > 3.0 * std::sqrt(a.mae_se * a.mae_se + b.mae_se * b.mae_se)))
      report.mae_decreasing = false;
  }
  if (!report.rows.empty()) report.last_within_5_percent = report.rows.back().relative_error <= 0.05;
  return report;
}

} // namespace oudrift::harness
