#pragma once

// Preconditioned conjugate gradients over callables, and a Vecchia-style
// sparse approximate inverse used as the preconditioner for observed-block
// covariance systems.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pespec/errors.hpp"
#include "pespec/lattice.hpp"
#include "pespec/parallel.hpp"
#include "pespec/spectral.hpp"

namespace pespec {

struct PcgConfig {
  double rel_tol = 1e-6;
  int max_iter = 1000;
};

struct PcgReport {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

// Solves A x = rhs for symmetric positive definite A. apply_a and apply_m
// map a vector to A v and M v (M approximating A^{-1}). Convergence is
// ||rhs - A x|| / ||rhs|| <= rel_tol. If the iteration budget runs out, the
// iterate with the smallest residual seen is returned and the report says
// converged = false.
template <typename ApplyA, typename ApplyM>
std::pair<std::vector<double>, PcgReport> pcg_solve(ApplyA&& apply_a,
                                                    ApplyM&& apply_m,
                                                    std::span<const double> rhs,
                                                    const PcgConfig& cfg = {}) {
  if (rhs.empty()) throw std::invalid_argument("pcg: empty right-hand side");
  if (!(cfg.rel_tol > 0.0) || cfg.max_iter < 1)
    throw std::invalid_argument("pcg: bad configuration");
  for (double v : rhs)
    if (!std::isfinite(v))
      throw numerical_error("pcg: non-finite right-hand side");

  const std::size_t n = rhs.size();
  std::vector<double> x(n, 0.0);
  double rhs_norm = std::sqrt(detail::dot(rhs, rhs));
  if (rhs_norm == 0.0) return {std::move(x), {0, 0.0, true}};

  std::vector<double> r(rhs.begin(), rhs.end());
  std::vector<double> z = apply_m(r);
  std::vector<double> p = z;
  double rz = detail::dot(r, z);

  std::vector<double> best_x = x;
  double best_res = 1.0;

  for (int it = 1; it <= cfg.max_iter; ++it) {
    std::vector<double> ap = apply_a(p);
    double pap = detail::dot(p, ap);
    if (!std::isfinite(pap) || pap <= 0.0)
      throw numerical_error("pcg: breakdown (operator not positive definite)");
    double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    double res = std::sqrt(detail::dot(r, r)) / rhs_norm;
    if (!std::isfinite(res)) throw numerical_error("pcg: non-finite residual");
    if (res < best_res) {
      best_res = res;
      best_x = x;
    }
    if (res <= cfg.rel_tol) return {std::move(x), {it, res, true}};
    z = apply_m(r);
    double rz_next = detail::dot(r, z);
    if (!std::isfinite(rz_next))
      throw numerical_error("pcg: non-finite preconditioned residual");
    double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return {std::move(best_x), {cfg.max_iter, best_res, false}};
}

// Sparse approximation of the inverse of the observed-block covariance A.
// Observed cells are taken in lexicographic order; each is regressed on at
// most `neighbors` nearest previously ordered observed cells. With
// e_i = (x_i - c_i . x_nb(i)) / sigma_i the rows below collect the factor L
// with e = L x, so A^{-1} is approximated by L^T L.
struct VecchiaPreconditioner {
  // rows[i]: (earlier ordered index j, c_ij / sigma_i)
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;
  std::vector<double> inv_sd;  // 1 / sigma_i
  int neighbors = 0;
};

inline VecchiaPreconditioner build_vecchia_preconditioner(
    const PeriodicCovariance& R, const ObservationMask& mask, int neighbors,
    int threads = 1) {
  if (neighbors < 0)
    throw std::invalid_argument("vecchia: neighbor count must be >= 0");
  if (R.spec.z != mask.spec.z)
    throw std::invalid_argument("vecchia: lattice mismatch");
  if (mask.n() == 0) throw std::invalid_argument("vecchia: no observed cells");
  const double R0 = R.values[0];
  if (!(R0 > 0.0))
    throw std::invalid_argument("vecchia: zero-lag covariance must be positive");

  const std::vector<int>& dims = R.spec.z;
  const int d = R.spec.d();
  const std::size_t n = mask.n();

  std::vector<std::int64_t> rank(R.spec.m(), -1);
  for (std::size_t i = 0; i < n; ++i) rank[mask.observed_cells[i]] = i;
  std::vector<std::vector<int>> coords(n);
  for (std::size_t i = 0; i < n; ++i)
    coords[i] = coord_at(dims, mask.observed_cells[i]);

  auto cov_at = [&](const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> h(d);
    for (int j = 0; j < d; ++j) {
      int hj = a[j] - b[j];
      if (hj < 0) hj += dims[j];
      h[j] = hj;
    }
    return R.values[linear_index(dims, h)];
  };

  int max_radius = 0;
  for (int j = 0; j < d; ++j) max_radius = std::max(max_radius, dims[j]);

  VecchiaPreconditioner pre;
  pre.neighbors = neighbors;
  pre.rows.resize(n);
  pre.inv_sd.resize(n);

  parallel_for(n, threads, [&](std::size_t i) {
    const std::vector<int>& ci = coords[i];
    const std::size_t want = std::min<std::size_t>(neighbors, i);

    // nearest previously ordered observed cells by squared Euclidean
    // distance, ties broken by order index; found by expanding Chebyshev
    // rings so the search can stop as soon as farther rings cannot compete
    std::vector<std::pair<std::int64_t, std::uint32_t>> kept;
    if (want > 0) {
      std::size_t seen = 0;
      std::vector<int> lo(d), hi(d), c(d);
      for (int radius = 0; radius <= max_radius; ++radius) {
        if (kept.size() == want) {
          std::int64_t worst = kept.front().first;
          if (static_cast<std::int64_t>(radius) *
                  radius > worst)
            break;
        }
        if (seen == i) break;
        for (int j = 0; j < d; ++j) {
          lo[j] = std::max(0, ci[j] - radius);
          hi[j] = std::min(dims[j] - 1, ci[j] + radius);
          c[j] = lo[j];
        }
        for (;;) {
          int cheb = 0;
          for (int j = 0; j < d; ++j) cheb = std::max(cheb, std::abs(c[j] - ci[j]));
          if (cheb == radius) {
            std::int64_t r = rank[linear_index(dims, c)];
            if (r >= 0 && r < static_cast<std::int64_t>(i)) {
              ++seen;
              std::int64_t d2 = 0;
              for (int j = 0; j < d; ++j) {
                std::int64_t off = c[j] - ci[j];
                d2 += off * off;
              }
              std::pair<std::int64_t, std::uint32_t> cand{
                  d2, static_cast<std::uint32_t>(r)};
              if (kept.size() < want) {
                kept.push_back(cand);
                std::push_heap(kept.begin(), kept.end());
              } else if (cand < kept.front()) {
                std::pop_heap(kept.begin(), kept.end());
                kept.back() = cand;
                std::push_heap(kept.begin(), kept.end());
              }
            }
          }
          int j = d - 1;
          while (j >= 0 && ++c[j] > hi[j]) {
            c[j] = lo[j];
            --j;
          }
          if (j < 0) break;
        }
      }
      std::sort(kept.begin(), kept.end());
    }

    const std::size_t k = kept.size();
    if (k == 0) {
      pre.inv_sd[i] = 1.0 / std::sqrt(R0);
      return;
    }

    Eigen::MatrixXd S(k, k);
    Eigen::VectorXd v(k);
    for (std::size_t a = 0; a < k; ++a) {
      const std::vector<int>& ca = coords[kept[a].second];
      v(a) = cov_at(ci, ca);
      for (std::size_t b = 0; b <= a; ++b) {
        double s = cov_at(ca, coords[kept[b].second]);
        S(a, b) = s;
        S(b, a) = s;
      }
    }

    Eigen::VectorXd coef;
    double cond_var = 0.0;
    bool jittered = false;
    for (;;) {
      Eigen::LLT<Eigen::MatrixXd> llt(S);
      if (llt.info() == Eigen::Success) {
        coef = llt.solve(v);
        cond_var = R0 - v.dot(coef);
        if (cond_var > 0.0) break;
      }
      if (jittered)
        throw numerical_error(
            "vecchia: conditioning system remained singular after jitter");
      S.diagonal().array() += 1e-10 * R0;
      jittered = true;
    }

    double inv_sd = 1.0 / std::sqrt(cond_var);
    pre.inv_sd[i] = inv_sd;
    pre.rows[i].reserve(k);
    for (std::size_t a = 0; a < k; ++a)
      pre.rows[i].emplace_back(kept[a].second, coef(a) * inv_sd);
  });
  return pre;
}

// M x = L^T (L x), symmetric positive definite by construction.
inline std::vector<double> apply_vecchia(const VecchiaPreconditioner& pre,
                                         std::span<const double> x) {
  const std::size_t n = pre.inv_sd.size();
  if (x.size() != n) throw std::invalid_argument("vecchia: size mismatch");
  std::vector<double> e(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = x[i] * pre.inv_sd[i];
    for (const auto& [j, a] : pre.rows[i]) v -= a * x[j];
    e[i] = v;
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] += e[i] * pre.inv_sd[i];
    for (const auto& [j, a] : pre.rows[i]) out[j] -= a * e[i];
  }
  return out;
}

}  // namespace pespec
