#pragma once

// Iterative spectral density estimation with periodic completion: starting
// from a flat spectrum, repeatedly (1) simulate the missing cells
// conditionally on the observations under the current spectrum, (2) average
// the periodograms of L completed fields, (3) smooth (optionally through a
// parametric quasi-AR1 filter), and (4) blend into the running estimate with
// burn-in discarding. Stops when the largest spectrum change, scaled by the
// pointwise standard deviation of the smoothed estimate, falls below epsilon.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "pespec/circulant.hpp"
#include "pespec/errors.hpp"
#include "pespec/imputation.hpp"
#include "pespec/lattice.hpp"
#include "pespec/parallel.hpp"
#include "pespec/rng.hpp"
#include "pespec/solver.hpp"
#include "pespec/spectral.hpp"

namespace pespec {

enum class FilterKind { none, ar1 };

struct EstimatorConfig {
  double tau = 1.0;         // used by callers to build the embedding
  double delta = 0.02;      // smoothing kernel bandwidth
  double epsilon = 0.05;    // stopping threshold
  int burn_in = 30;
  int L = 1;                // conditional simulations per iteration
  int max_iterations = 1000;
  FilterKind filter = FilterKind::none;
  PrecondChoice precond;
  PcgConfig pcg;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct IterationDiagnostics {
  std::vector<double> update_target;  // smoothed (filtered) mean periodogram
  double theta = 0.0;                 // fitted filter parameter, ar1 only
};

struct EstimationResult {
  SpectrumGrid spectrum;
  int iterations = 0;
  bool converged = false;
  std::vector<double> stat_trace;   // one entry per iteration
  std::vector<double> theta_trace;  // ar1 runs only
  GridField conditional_expectation;
  GridField conditional_simulation;
};

namespace detail {

// Streams are a pure function of (iteration, replicate), so runs replay
// identically whatever the thread count. High-bit bases keep one-off draws
// from colliding with iteration streams.
inline std::uint64_t iteration_stream(int k, int ell, int L) {
  return static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(L) +
         static_cast<std::uint64_t>(ell);
}
constexpr std::uint64_t final_sim_stream = 0x8000000000000000ull;
constexpr std::uint64_t cv_stream = 0xC000000000000000ull;

}  // namespace detail

// Flat starting spectrum at the level of the observed sample variance.
inline SpectrumGrid initial_spectrum(std::span<const double> data,
                                     const ObservationMask& mask,
                                     const LatticeSpec& spec) {
  if (mask.spec.z != spec.z)
    throw std::invalid_argument("initial_spectrum: lattice mismatch");
  if (data.size() != mask.n())
    throw std::invalid_argument("initial_spectrum: data size mismatch");
  const std::size_t n = data.size();
  if (n < 2)
    throw std::invalid_argument("initial_spectrum: need at least two cells");
  double mean = 0.0;
  for (double v : data) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : data) ss += (v - mean) * (v - mean);
  double var = ss / static_cast<double>(n - 1);
  if (!(var > 0.0))
    throw std::invalid_argument("initial_spectrum: data has zero variance");
  return {spec, std::vector<double>(spec.m(), var)};
}

// Whittle fit of the quasi-AR1 parameter to a mean periodogram:
// maximizes -(m/2) log 2 pi - (1/2) sum_k [log f_theta + avg / f_theta]
// by golden-section search on [0, 0.999] to 1e-6.
inline double whittle_theta(std::span<const double> avg,
                            const LatticeSpec& spec) {
  if (avg.size() != spec.m())
    throw std::invalid_argument("whittle_theta: size mismatch");
  auto neg_ll = [&](double theta) {
    SpectrumGrid f = ar1_spectrum(theta, spec);
    double s = 0.0;
    for (std::size_t k = 0; k < avg.size(); ++k)
      s += std::log(f.values[k]) + avg[k] / f.values[k];
    return s;
  };
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 0.0, b = 0.999;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double gc = neg_ll(c), gd = neg_ll(d);
  while (b - a > 1e-6) {
    if (gc < gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - invphi * (b - a);
      gc = neg_ll(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + invphi * (b - a);
      gd = neg_ll(d);
    }
  }
  return 0.5 * (a + b);
}

// Parametric-filter smoothing: fit theta, smooth the ratio avg / f_theta,
// multiply back. With theta = 0 the filter spectrum is identically one and
// this reduces bitwise to plain smoothing.
inline std::pair<std::vector<double>, double> filtered_update(
    std::span<const double> avg, const SmoothingKernel& kernel,
    const LatticeSpec& spec) {
  double theta = whittle_theta(avg, spec);
  SpectrumGrid f = ar1_spectrum(theta, spec);
  std::vector<double> ratio(avg.size());
  for (std::size_t k = 0; k < avg.size(); ++k)
    ratio[k] = avg[k] / f.values[k];
  std::vector<double> sm = smooth(ratio, kernel);
  for (std::size_t k = 0; k < sm.size(); ++k) sm[k] *= f.values[k];
  return {std::move(sm), theta};
}

// One estimation iteration k >= 1: simulate L completions under f_k, average
// their periodograms, smooth (through the filter if configured), then keep it
// outright during burn-in or blend it into the running post-burn-in average
// with weights ((k - B) f_k + target) / (k - B + 1).
inline std::pair<SpectrumGrid, IterationDiagnostics> iteration_step(
    const SpectrumGrid& f_k, std::span<const double> data,
    const ObservationMask& mask, const SmoothingKernel& kernel,
    const EstimatorConfig& cfg, int k) {
  if (k < 1) throw std::invalid_argument("iteration_step: k must be >= 1");
  if (cfg.L < 1)
    throw std::invalid_argument("iteration_step: L must be >= 1");
  const std::size_t m = f_k.spec.m();

  std::vector<std::vector<double>> slot(cfg.L);
  parallel_for(cfg.L, cfg.threads, [&](std::size_t ell) {
    RngStream rng(cfg.seed,
                  detail::iteration_stream(k, static_cast<int>(ell), cfg.L));
    ImputationResult sim = conditional_simulation(data, mask, f_k, rng,
                                                  cfg.precond, cfg.pcg);
    slot[ell] = periodogram(sim.completed).values;
  });
  std::vector<double> avg(m, 0.0);
  for (int ell = 0; ell < cfg.L; ++ell)
    for (std::size_t i = 0; i < m; ++i) avg[i] += slot[ell][i];
  for (double& v : avg) v /= static_cast<double>(cfg.L);

  IterationDiagnostics diag;
  if (cfg.filter == FilterKind::ar1) {
    auto [target, theta] = filtered_update(avg, kernel, f_k.spec);
    diag.update_target = std::move(target);
    diag.theta = theta;
  } else {
    diag.update_target = smooth(avg, kernel);
  }

  SpectrumGrid f_next{f_k.spec, std::vector<double>(m)};
  if (k <= cfg.burn_in) {
    f_next.values = diag.update_target;
  } else {
    const double r = static_cast<double>(k - cfg.burn_in);
    for (std::size_t i = 0; i < m; ++i)
      f_next.values[i] =
          (r * f_k.values[i] + diag.update_target[i]) / (r + 1.0);
  }
  return {std::move(f_next), std::move(diag)};
}

// max_k |f_new - f_old| / S(f_old), the stopping statistic. S comes from the
// older iterate. Cells where both the change and the scale vanish count as
// zero; a change against a zero scale counts as infinite.
inline double convergence_stat(std::span<const double> f_new,
                               std::span<const double> f_old,
                               const SmoothingKernel& kernel) {
  if (f_new.size() != f_old.size())
    throw std::invalid_argument("convergence_stat: size mismatch");
  std::vector<double> S = smoothed_sd(f_old, kernel);
  double worst = 0.0;
  for (std::size_t k = 0; k < f_new.size(); ++k) {
    double diff = std::abs(f_new[k] - f_old[k]);
    if (diff == 0.0) continue;
    worst = std::max(worst, S[k] > 0.0
                                ? diff / S[k]
                                : std::numeric_limits<double>::infinity());
  }
  return worst;
}

inline EstimationResult run_estimation(std::span<const double> data,
                                       const ObservationMask& mask,
                                       const LatticeSpec& spec,
                                       const EstimatorConfig& cfg) {
  if (mask.spec.z != spec.z)
    throw std::invalid_argument("run_estimation: lattice mismatch");
  if (cfg.max_iterations < 1 || cfg.burn_in < 0)
    throw std::invalid_argument("run_estimation: bad iteration limits");
  if (!(cfg.epsilon > 0.0))
    throw std::invalid_argument("run_estimation: epsilon must be positive");

  SmoothingKernel kernel = build_kernel(cfg.delta, spec);
  SpectrumGrid f = initial_spectrum(data, mask, spec);

  EstimationResult result;
  int executed = 0;
  for (int k = 1; k <= cfg.max_iterations; ++k) {
    auto [f_next, diag] = iteration_step(f, data, mask, kernel, cfg, k);
    double stat = convergence_stat(f_next.values, f.values, kernel);
    result.stat_trace.push_back(stat);
    if (cfg.filter == FilterKind::ar1) result.theta_trace.push_back(diag.theta);
    f = std::move(f_next);
    executed = k;
    if (k > cfg.burn_in && stat < cfg.epsilon) {
      result.converged = true;
      break;
    }
  }
  result.iterations = executed;
  floor_spectrum(f);
  result.spectrum = std::move(f);

  result.conditional_expectation =
      conditional_expectation(data, mask, result.spectrum, cfg.precond,
                              cfg.pcg)
          .completed;
  RngStream rng(cfg.seed, detail::final_sim_stream);
  result.conditional_simulation =
      conditional_simulation(data, mask, result.spectrum, rng, cfg.precond,
                             cfg.pcg)
          .completed;
  return result;
}

// Bandwidth selection by prediction: hold out a fraction of the observed
// cells, run the full estimation per candidate bandwidth, score by squared
// prediction error at the held-out cells. Non-convergent runs score infinity;
// ties keep the earliest candidate.
inline double select_bandwidth_cv(std::span<const double> data,
                                  const ObservationMask& mask,
                                  const LatticeSpec& spec,
                                  const EstimatorConfig& cfg,
                                  const std::vector<double>& deltas,
                                  double holdout_frac) {
  if (deltas.size() < 2)
    throw std::invalid_argument("bandwidth_cv: need at least two candidates");
  if (!(holdout_frac > 0.0) || !(holdout_frac < 1.0))
    throw std::invalid_argument("bandwidth_cv: holdout fraction in (0,1)");
  if (mask.spec.z != spec.z)
    throw std::invalid_argument("bandwidth_cv: lattice mismatch");
  const std::size_t n = mask.n();
  if (data.size() != n)
    throw std::invalid_argument("bandwidth_cv: data size mismatch");
  if (n < 2)
    throw std::invalid_argument("bandwidth_cv: need at least two observed cells");

  std::size_t h = static_cast<std::size_t>(holdout_frac * n);
  h = std::max<std::size_t>(1, std::min(h, n - 1));

  // sample h observed positions without replacement
  RngStream rng(cfg.seed, detail::cv_stream);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < h; ++i) {
    std::size_t j = i + rng.below(n - i);
    std::swap(order[i], order[j]);
  }

  ObservationMask reduced = mask;
  std::vector<std::size_t> held_cells;
  for (std::size_t i = 0; i < h; ++i) {
    std::size_t cell = mask.observed_cells[order[i]];
    reduced.observed[cell] = 0;
    held_cells.push_back(cell);
  }
  rebuild_index_lists(reduced);

  std::vector<double> value_at(mask.spec.m(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    value_at[mask.observed_cells[i]] = data[i];
  std::vector<double> reduced_data(reduced.n());
  for (std::size_t i = 0; i < reduced.n(); ++i)
    reduced_data[i] = value_at[reduced.observed_cells[i]];

  double best_score = std::numeric_limits<double>::infinity();
  double best_delta = deltas.front();
  bool first = true;
  for (double delta : deltas) {
    EstimatorConfig c = cfg;
    c.delta = delta;
    EstimationResult res = run_estimation(reduced_data, reduced, spec, c);
    double score = std::numeric_limits<double>::infinity();
    if (res.converged) {
      score = 0.0;
      for (std::size_t cell : held_cells) {
        double diff = res.conditional_expectation.values[cell] - value_at[cell];
        score += diff * diff;
      }
    }
    if (first || score < best_score) {
      best_score = score;
      best_delta = delta;
      first = false;
    }
  }
  return best_delta;
}

}  // namespace pespec
