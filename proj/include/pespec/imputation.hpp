#pragma once

// Conditioning the periodic field on observed cells. Everything reduces to
// one observed-block solve: with R = [A B; B^T C],
//   E[W | U] = B^T A^{-1} U
//   draw      W = W* + B^T A^{-1} (U - U*),  (U*, W*) an unconditional draw,
// which leaves W | U exactly N(B^T A^{-1} U, C - B^T A^{-1} B).

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "pespec/circulant.hpp"
#include "pespec/errors.hpp"
#include "pespec/parallel.hpp"
#include "pespec/rng.hpp"
#include "pespec/solver.hpp"
#include "pespec/spectral.hpp"

namespace pespec {

enum class PrecondKind { inverse_spectrum, vecchia };

struct PrecondChoice {
  PrecondKind kind = PrecondKind::inverse_spectrum;
  int neighbors = 30;  // vecchia only
};

struct ImputationResult {
  GridField completed;                 // observed cells bit-identical to data
  std::vector<double> missing_values;  // ordered like mask.missing_cells
  PcgReport report;
};

namespace detail {

using PrecondFn = std::function<std::vector<double>(std::span<const double>)>;

inline PrecondFn make_preconditioner(const CirculantOperator& op,
                                     const PrecondChoice& pc) {
  if (pc.kind == PrecondKind::inverse_spectrum)
    return [&op](std::span<const double> v) {
      return inv_multiply_observed(op, v);
    };
  PeriodicCovariance R = periodic_cov_from_spectrum(
      SpectrumGrid{op.spec(), op.eigenvalues()});
  auto pre = std::make_shared<VecchiaPreconditioner>(
      build_vecchia_preconditioner(R, op.mask(), pc.neighbors));
  return [pre](std::span<const double> v) { return apply_vecchia(*pre, v); };
}

inline std::pair<std::vector<double>, PcgReport> solve_observed(
    const CirculantOperator& op, const PrecondChoice& pc,
    const PcgConfig& cfg, std::span<const double> rhs) {
  PrecondFn precond = make_preconditioner(op, pc);
  auto [s, report] = pcg_solve(
      [&op](std::span<const double> v) { return a_multiply(op, v); }, precond,
      rhs, cfg);
  if (!report.converged)
    throw convergence_error("imputation: solver did not converge",
                            report.iterations, report.relative_residual);
  return {std::move(s), report};
}

inline ImputationResult assemble(const CirculantOperator& op,
                                 std::span<const double> data,
                                 std::vector<double> missing,
                                 PcgReport report) {
  const ObservationMask& mask = op.mask();
  ImputationResult out;
  out.completed.spec = op.spec();
  out.completed.values.assign(op.spec().m(), 0.0);
  for (std::size_t i = 0; i < mask.n(); ++i)
    out.completed.values[mask.observed_cells[i]] = data[i];
  for (std::size_t i = 0; i < mask.w(); ++i)
    out.completed.values[mask.missing_cells[i]] = missing[i];
  out.missing_values = std::move(missing);
  out.report = report;
  return out;
}

}  // namespace detail

inline ImputationResult conditional_expectation(
    std::span<const double> data, const ObservationMask& mask,
    const SpectrumGrid& f, const PrecondChoice& pc = {},
    const PcgConfig& cfg = {}) {
  CirculantOperator op(f, mask);
  if (data.size() != mask.n())
    throw std::invalid_argument("conditional_expectation: data size mismatch");
  if (mask.w() == 0) return detail::assemble(op, data, {}, {0, 0.0, true});
  auto [s, report] = detail::solve_observed(op, pc, cfg, data);
  return detail::assemble(op, data, bt_multiply(op, s), report);
}

// Draws from the conditional law of the missing cells given the observed
// ones. With no missing cells the data is returned and the stream is left
// untouched.
inline ImputationResult conditional_simulation(
    std::span<const double> data, const ObservationMask& mask,
    const SpectrumGrid& f, RngStream& rng, const PrecondChoice& pc = {},
    const PcgConfig& cfg = {}) {
  CirculantOperator op(f, mask);
  if (data.size() != mask.n())
    throw std::invalid_argument("conditional_simulation: data size mismatch");
  if (mask.w() == 0) return detail::assemble(op, data, {}, {0, 0.0, true});

  GridField star = unconditional_sample(op, rng);
  std::vector<double> rhs(mask.n());
  for (std::size_t i = 0; i < mask.n(); ++i)
    rhs[i] = data[i] - star.values[mask.observed_cells[i]];
  auto [s, report] = detail::solve_observed(op, pc, cfg, rhs);
  std::vector<double> w = bt_multiply(op, s);
  for (std::size_t i = 0; i < mask.w(); ++i)
    w[i] += star.values[mask.missing_cells[i]];
  return detail::assemble(op, data, std::move(w), report);
}

// Pointwise conditional standard deviations of the missing cells, estimated
// from n_sims conditional simulations around the exact conditional mean.
// Simulation i uses stream stream_base + i, and partial sums are reduced in
// index order, so the result is identical for any thread count.
inline std::vector<double> conditional_sd(
    std::span<const double> data, const ObservationMask& mask,
    const SpectrumGrid& f, int n_sims, std::uint64_t seed,
    std::uint64_t stream_base = 0, const PrecondChoice& pc = {},
    const PcgConfig& cfg = {}, int threads = 1) {
  if (n_sims < 1)
    throw std::invalid_argument("conditional_sd: need at least one simulation");
  if (mask.w() == 0) return {};
  ImputationResult center = conditional_expectation(data, mask, f, pc, cfg);

  const std::size_t w = mask.w();
  std::vector<double> acc(w, 0.0);
  const int block = 64;
  std::vector<std::vector<double>> slot(std::min(block, n_sims));
  for (int start = 0; start < n_sims; start += block) {
    const int count = std::min(block, n_sims - start);
    parallel_for(count, threads, [&](std::size_t i) {
      RngStream rng(seed, stream_base + start + i);
      ImputationResult sim =
          conditional_simulation(data, mask, f, rng, pc, cfg);
      slot[i] = std::move(sim.missing_values);
    });
    for (int i = 0; i < count; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double dev = slot[i][j] - center.missing_values[j];
        acc[j] += dev * dev;
      }
  }
  for (double& v : acc) v = std::sqrt(v / n_sims);
  return acc;
}

}  // namespace pespec
