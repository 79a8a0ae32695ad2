#pragma once

// Brute-force reference implementations used only by the tests. Everything
// here is O(m^2) direct summation or dense algebra, written independently of
// the library's FFT-based code paths so the two can disagree.

#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "pespec/lattice.hpp"
#include "pespec/rng.hpp"

namespace oracle {

using std::size_t;

// sign = -1 reproduces the library's forward transform, +1 the backward.
inline std::vector<std::complex<double>> direct_dft(
    const std::vector<int>& dims, const std::vector<std::complex<double>>& v,
    int sign) {
  const size_t m = pespec::cell_count(dims);
  std::vector<std::complex<double>> out(m, {0.0, 0.0});
  for (size_t k = 0; k < m; ++k) {
    std::vector<int> kc = pespec::coord_at(dims, k);
    for (size_t x = 0; x < m; ++x) {
      std::vector<int> xc = pespec::coord_at(dims, x);
      double phase = 0.0;
      for (size_t j = 0; j < dims.size(); ++j)
        phase += static_cast<double>(kc[j]) * xc[j] / dims[j];
      phase *= 2.0 * std::numbers::pi * sign;
      out[k] += v[x] * std::complex<double>(std::cos(phase), std::sin(phase));
    }
  }
  return out;
}

inline std::vector<std::complex<double>> direct_dft_real(
    const std::vector<int>& dims, const std::vector<double>& v, int sign) {
  std::vector<std::complex<double>> vc(v.begin(), v.end());
  return direct_dft(dims, vc, sign);
}

// Periodic covariance from a spectrum by direct summation:
// R(h) = (1/m) sum_k f(k) exp(+2 pi i k.h / z).
inline std::vector<double> direct_cov_from_spectrum(
    const std::vector<int>& dims, const std::vector<double>& f) {
  std::vector<std::complex<double>> full = direct_dft_real(dims, f, +1);
  std::vector<double> out(full.size());
  for (size_t i = 0; i < full.size(); ++i)
    out[i] = full[i].real() / static_cast<double>(full.size());
  return out;
}

// Dense m x m covariance of the full periodic field: entry (a, b) is
// R((x_a - x_b) mod z).
inline Eigen::MatrixXd dense_circulant(const std::vector<int>& dims,
                                       const std::vector<double>& R) {
  const size_t m = pespec::cell_count(dims);
  Eigen::MatrixXd M(m, m);
  for (size_t a = 0; a < m; ++a) {
    std::vector<int> ca = pespec::coord_at(dims, a);
    for (size_t b = 0; b < m; ++b) {
      std::vector<int> cb = pespec::coord_at(dims, b);
      std::vector<int> h(dims.size());
      for (size_t j = 0; j < dims.size(); ++j) {
        int hj = ca[j] - cb[j];
        if (hj < 0) hj += dims[j];
        h[j] = hj;
      }
      M(a, b) = R[pespec::linear_index(dims, h)];
    }
  }
  return M;
}

struct DenseBlocks {
  Eigen::MatrixXd A;  // observed x observed
  Eigen::MatrixXd B;  // observed x missing
  Eigen::MatrixXd C;  // missing x missing
};

inline DenseBlocks dense_blocks(const pespec::ObservationMask& mask,
                                const Eigen::MatrixXd& full) {
  const auto& obs = mask.observed_cells;
  const auto& mis = mask.missing_cells;
  DenseBlocks out;
  out.A.resize(obs.size(), obs.size());
  out.B.resize(obs.size(), mis.size());
  out.C.resize(mis.size(), mis.size());
  for (size_t i = 0; i < obs.size(); ++i) {
    for (size_t j = 0; j < obs.size(); ++j) out.A(i, j) = full(obs[i], obs[j]);
    for (size_t j = 0; j < mis.size(); ++j) out.B(i, j) = full(obs[i], mis[j]);
  }
  for (size_t i = 0; i < mis.size(); ++i)
    for (size_t j = 0; j < mis.size(); ++j) out.C(i, j) = full(mis[i], mis[j]);
  return out;
}

// Circular convolution by direct summation: out(k) = sum_v w(v) f(k - v mod z).
inline std::vector<double> direct_convolve(const std::vector<int>& dims,
                                           const std::vector<double>& f,
                                           const std::vector<double>& w) {
  const size_t m = pespec::cell_count(dims);
  std::vector<double> out(m, 0.0);
  for (size_t k = 0; k < m; ++k) {
    std::vector<int> kc = pespec::coord_at(dims, k);
    for (size_t v = 0; v < m; ++v) {
      std::vector<int> vc = pespec::coord_at(dims, v);
      std::vector<int> h(dims.size());
      for (size_t j = 0; j < dims.size(); ++j) {
        int hj = kc[j] - vc[j];
        if (hj < 0) hj += dims[j];
        h[j] = hj;
      }
      out[k] += w[v] * f[pespec::linear_index(dims, h)];
    }
  }
  return out;
}

// Random symmetric positive spectrum: uniform values averaged with their
// reflection so f(k) = f(-k mod z).
inline std::vector<double> random_spectrum(const std::vector<int>& dims,
                                           pespec::RngStream& rng, double lo,
                                           double hi) {
  const size_t m = pespec::cell_count(dims);
  std::vector<double> g(m);
  for (double& v : g) v = lo + (hi - lo) * rng.uniform();
  std::vector<double> f(m);
  for (size_t k = 0; k < m; ++k)
    f[k] = 0.5 * (g[k] + g[pespec::reflect_index(dims, k)]);
  return f;
}

// Bernoulli(p_observed) mask over J_y, guaranteed nonempty.
inline pespec::ObservationMask random_mask(const pespec::LatticeSpec& spec,
                                           double p_observed,
                                           pespec::RngStream& rng) {
  std::vector<std::uint8_t> obs(spec.y_cells());
  bool any = false;
  for (auto& o : obs) {
    o = rng.uniform() < p_observed;
    any = any || o;
  }
  if (!any) obs[0] = 1;
  return pespec::embed_mask(obs, spec);
}

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double max_abs(const std::vector<double>& a) {
  double worst = 0.0;
  for (double v : a) worst = std::max(worst, std::abs(v));
  return worst;
}

}  // namespace oracle
