#pragma once

// Synthetic-data machinery: exact stationary field simulation on an enlarged
// torus, canonical missingness patterns, relative error metrics, and the two
// study drivers (the exact dense iteration table and the replicated
// estimator comparison).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pespec/baselines.hpp"
#include "pespec/circulant.hpp"
#include "pespec/errors.hpp"
#include "pespec/estimator.hpp"
#include "pespec/lattice.hpp"
#include "pespec/parallel.hpp"
#include "pespec/rng.hpp"
#include "pespec/spectral.hpp"
#include "pespec/study.hpp"

namespace pespec {

namespace detail {

inline void validate_grid_dims(const std::vector<int>& y, const char* who) {
  if (y.empty()) throw std::invalid_argument(std::string(who) + ": empty grid");
  for (int v : y)
    if (v < 2)
      throw std::invalid_argument(std::string(who) +
                                  ": each dimension must be >= 2");
}

}  // namespace detail

// Exact simulation of a stationary field on J_y by circulant embedding on an
// enlarged torus. The torus starts at base_factor * y and doubles until the
// wrapped covariance is numerically nonnegative definite (eigenvalues down to
// -1e-8 of the maximum are tolerated and clamped); if doublings run out,
// eigenvalues are still clamped when no worse than -1e-6 of the maximum and
// the construction fails otherwise.
class MaternFieldSampler {
 public:
  MaternFieldSampler(const MaternParams& params, const std::vector<int>& y,
                     int base_factor = 3, int max_doublings = 3)
      : y_(y) {
    detail::validate_grid_dims(y, "field_sampler");
    if (base_factor < 1 || max_doublings < 0)
      throw std::invalid_argument("field_sampler: bad torus growth limits");
    CovarianceFn K = [params](const std::vector<int>& lag) {
      return matern_cov(lag, params);
    };
    int factor = base_factor;
    for (int attempt = 0;; ++attempt) {
      LatticeSpec torus;
      torus.y = y;
      torus.tau = factor;
      torus.z.resize(y.size());
      for (std::size_t j = 0; j < y.size(); ++j) torus.z[j] = factor * y[j];

      PeriodicCovariance R = wrapped_covariance(K, torus);
      std::vector<std::complex<double>> hat = dft_forward_real(torus.z, R.values);
      std::vector<double> eigs(hat.size());
      double max_e = 0.0, min_e = 0.0, resid = 0.0;
      for (std::size_t k = 0; k < hat.size(); ++k) {
        eigs[k] = hat[k].real();
        max_e = std::max(max_e, eigs[k]);
        min_e = std::min(min_e, eigs[k]);
        resid = std::max(resid, std::abs(hat[k].imag()));
      }
      if (!(max_e > 0.0) || resid > 1e-8 * max_e)
        throw numerical_error("field_sampler: invalid torus spectrum");

      if (min_e >= -1e-8 * max_e || attempt == max_doublings) {
        if (min_e < -1e-6 * max_e)
          throw embedding_error(
              "field_sampler: torus embedding is not nonnegative definite");
        for (double& e : eigs) e = std::max(e, 0.0);
        spec_ = torus;
        eigs_ = std::move(eigs);
        break;
      }
      factor *= 2;
    }
  }

  const LatticeSpec& torus() const { return spec_; }

  // One exact draw, restricted to J_y (returned on an unexpanded lattice).
  GridField draw(RngStream& rng) const {
    GridField full = sample_from_eigenvalues(spec_, eigs_, rng);
    LatticeSpec spec_y{y_, y_, 1.0};
    GridField out{spec_y, std::vector<double>(spec_y.m())};
    std::vector<int> c(y_.size(), 0);
    std::size_t i = 0;
    do {
      out.values[i++] = full.values[linear_index(spec_.z, c)];
    } while (next_coord(y_, c));
    return out;
  }

 private:
  std::vector<int> y_;
  LatticeSpec spec_;
  std::vector<double> eigs_;
};

// Canonical missingness patterns over J_y (1 = observed):
//   1: independent cells, each missing with probability 0.3;
//   2: a centered missing block of side round(sqrt(0.3) * y_j) per axis;
//   3: complete data.
inline std::vector<std::uint8_t> make_missingness(int setting,
                                                  const std::vector<int>& y,
                                                  RngStream& rng) {
  detail::validate_grid_dims(y, "missingness");
  const std::size_t count = cell_count(y);
  std::vector<std::uint8_t> observed(count, 1);
  switch (setting) {
    case 1:
      for (std::size_t i = 0; i < count; ++i)
        observed[i] = rng.uniform() >= 0.3 ? 1 : 0;
      break;
    case 2: {
      const double side = std::sqrt(0.3);
      std::vector<int> lo(y.size()), hi(y.size());
      for (std::size_t j = 0; j < y.size(); ++j) {
        int b = static_cast<int>(std::lround(side * y[j]));
        b = std::clamp(b, 1, y[j]);
        lo[j] = (y[j] - b) / 2;
        hi[j] = lo[j] + b;  // exclusive
      }
      std::vector<int> c(y.size(), 0);
      std::size_t i = 0;
      do {
        bool inside = true;
        for (std::size_t j = 0; j < y.size(); ++j)
          inside = inside && c[j] >= lo[j] && c[j] < hi[j];
        if (inside) observed[i] = 0;
        ++i;
      } while (next_coord(y, c));
      break;
    }
    case 3:
      break;
    default:
      throw std::invalid_argument("missingness: unknown setting");
  }
  return observed;
}

// Relative error summaries of repeated spectrum estimates against a truth.
struct Metrics {
  std::vector<double> bias;  // mean relative error per frequency
  std::vector<double> mse;   // mean squared relative error per frequency
  double rimse = 0.0;        // sqrt of the frequency-averaged mse
};

inline Metrics spectrum_metrics(const std::vector<std::vector<double>>& estimates,
                                const SpectrumGrid& f_true) {
  if (estimates.empty())
    throw std::invalid_argument("metrics: no estimates");
  const std::size_t m = f_true.values.size();
  for (double v : f_true.values)
    if (!(v > 0.0))
      throw std::invalid_argument("metrics: truth must be strictly positive");
  for (const auto& est : estimates)
    if (est.size() != m)
      throw std::invalid_argument("metrics: estimate size mismatch");

  Metrics out;
  out.bias.assign(m, 0.0);
  out.mse.assign(m, 0.0);
  const double r = static_cast<double>(estimates.size());
  for (const auto& est : estimates)
    for (std::size_t k = 0; k < m; ++k) {
      double rel = (est[k] - f_true.values[k]) / f_true.values[k];
      out.bias[k] += rel / r;
      out.mse[k] += rel * rel / r;
    }
  double total = 0.0;
  for (double v : out.mse) total += v;
  out.rimse = std::sqrt(total / static_cast<double>(m));
  return out;
}

// Exact dense iteration table: INSB trajectories per (setting, tau).
struct DenseStudyConfig {
  std::vector<int> y{32, 32};
  std::vector<double> taus{1.0, 34.0 / 32.0, 36.0 / 32.0, 38.0 / 32.0};
  std::vector<int> settings{1, 2, 3};
  int iterations = 6;
  MaternParams matern{0.5, 8.0, 2.0};
  std::uint64_t seed = 1;
  std::size_t dense_cap = 4096;
};

struct DenseStudyRow {
  int setting = 0;
  double tau = 1.0;
  std::vector<double> insb;  // iterations 0..iterations
};

inline std::vector<DenseStudyRow> run_dense_study(const DenseStudyConfig& cfg) {
  detail::validate_grid_dims(cfg.y, "dense_study");
  if (cfg.iterations < 0 || cfg.taus.empty() || cfg.settings.empty())
    throw std::invalid_argument("dense_study: bad configuration");
  CovarianceFn K = [params = cfg.matern](const std::vector<int>& lag) {
    return matern_cov(lag, params);
  };
  std::vector<DenseStudyRow> rows;
  for (int setting : cfg.settings) {
    RngStream mask_rng(cfg.seed, 0x900u + static_cast<std::uint64_t>(setting));
    std::vector<std::uint8_t> observed = make_missingness(setting, cfg.y, mask_rng);
    for (double tau : cfg.taus) {
      LatticeSpec spec = build_embedding(cfg.y, tau);
      ObservationMask mask = embed_mask(observed, spec);
      SpectrumGrid f_true = wrapped_true_spectrum(K, spec);
      floor_spectrum(f_true);
      DenseModel model = build_dense_model(K, f_true, mask, cfg.dense_cap);
      rows.push_back({setting, tau, run_study(model, cfg.iterations)});
    }
  }
  return rows;
}

// Replicated estimator comparison: zero-infill baseline vs the periodic
// estimator with and without the parametric whitening filter, each tuned
// over a bandwidth grid by relative error against the wrapped truth.
struct SimStudyConfig {
  std::vector<int> y{40, 40};
  int setting = 1;
  int replicates = 20;
  MaternParams matern{0.5, 8.0, 2.0};
  std::vector<double> deltas{0.02, 0.04, 0.07, 0.10, 0.15};
  double tau = 1.2;
  int burn_in = 50;
  double epsilon = 0.02;
  int L = 1;
  int max_iterations = 300;
  PrecondChoice precond;
  PcgConfig pcg;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct MethodSummary {
  std::string method;
  std::vector<double> rimse;  // one entry per bandwidth
  double best_rimse = 0.0;
  double best_delta = 0.0;
};

struct SimStudyResult {
  std::vector<MethodSummary> methods;  // zero-infill, periodic, periodic-ar1
};

inline SimStudyResult run_simulation_study(const SimStudyConfig& cfg) {
  detail::validate_grid_dims(cfg.y, "sim_study");
  if (cfg.replicates < 1 || cfg.deltas.empty())
    throw std::invalid_argument("sim_study: bad configuration");
  CovarianceFn K = [params = cfg.matern](const std::vector<int>& lag) {
    return matern_cov(lag, params);
  };
  LatticeSpec spec_y{cfg.y, cfg.y, 1.0};
  LatticeSpec spec_z = build_embedding(cfg.y, cfg.tau);
  SpectrumGrid truth_y = wrapped_true_spectrum(K, spec_y);
  SpectrumGrid truth_z = wrapped_true_spectrum(K, spec_z);
  floor_spectrum(truth_y);
  floor_spectrum(truth_z);
  MaternFieldSampler sampler(cfg.matern, cfg.y);

  const std::size_t reps = static_cast<std::size_t>(cfg.replicates);
  const std::size_t nd = cfg.deltas.size();
  // estimates[method][delta][replicate]
  std::vector<std::vector<std::vector<std::vector<double>>>> est(
      3, std::vector<std::vector<std::vector<double>>>(
             nd, std::vector<std::vector<double>>(reps)));

  parallel_for(reps, cfg.threads, [&](std::size_t rep) {
    RngStream field_rng(cfg.seed, 2 * rep);
    GridField field = sampler.draw(field_rng);
    RngStream mask_rng(cfg.seed, 2 * rep + 1);
    std::vector<std::uint8_t> observed = make_missingness(cfg.setting, cfg.y, mask_rng);
    ObservationMask mask_y = embed_mask(observed, spec_y);
    ObservationMask mask_z = embed_mask(observed, spec_z);
    std::vector<double> data(mask_y.n());
    for (std::size_t i = 0; i < data.size(); ++i)
      data[i] = field.values[mask_y.observed_cells[i]];

    for (std::size_t di = 0; di < nd; ++di) {
      SmoothingKernel kernel_y = build_kernel(cfg.deltas[di], spec_y);
      est[0][di][rep] = zero_infill_periodogram(data, mask_y, kernel_y).values;
      for (int fi = 0; fi < 2; ++fi) {
        EstimatorConfig ec;
        ec.tau = cfg.tau;
        ec.delta = cfg.deltas[di];
        ec.epsilon = cfg.epsilon;
        ec.burn_in = cfg.burn_in;
        ec.L = cfg.L;
        ec.max_iterations = cfg.max_iterations;
        ec.filter = fi == 0 ? FilterKind::none : FilterKind::ar1;
        ec.precond = cfg.precond;
        ec.pcg = cfg.pcg;
        ec.threads = 1;
        ec.seed = splitmix64(cfg.seed ^ (0x515400ull + rep * 64 + di * 4 +
                                         static_cast<std::uint64_t>(fi)));
        est[1 + fi][di][rep] =
            run_estimation(data, mask_z, spec_z, ec).spectrum.values;
      }
    }
  });

  static const char* names[3] = {"zero-infill", "periodic", "periodic-ar1"};
  SimStudyResult out;
  for (int mi = 0; mi < 3; ++mi) {
    MethodSummary s;
    s.method = names[mi];
    const SpectrumGrid& truth = mi == 0 ? truth_y : truth_z;
    for (std::size_t di = 0; di < nd; ++di)
      s.rimse.push_back(spectrum_metrics(est[mi][di], truth).rimse);
    std::size_t best = 0;
    for (std::size_t di = 1; di < nd; ++di)
      if (s.rimse[di] < s.rimse[best]) best = di;
    s.best_rimse = s.rimse[best];
    s.best_delta = cfg.deltas[best];
    out.methods.push_back(std::move(s));
  }
  return out;
}

}  // namespace pespec
