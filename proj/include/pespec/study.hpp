#pragma once

// Exact small-lattice analysis of the iteration map, with no Monte Carlo in
// the loop: the conditional simulation step is replaced by the exact
// covariance of the completed field, and the periodogram by its expectation.
//
// The object tracked is the two-frequency spectrum ("bispectrum") of the
// completed field, f(nu, omega) = (1/m) E[J(nu) conj(J(omega))]. For a
// stationary periodic field it is diagonal with the spectrum on the diagonal;
// everything off-diagonal is leakage introduced by the non-periodic truth or
// by imputation error. Convergence of the iteration is measured by the
// normalized integrated squared distance to the diagonal truth.

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pespec/errors.hpp"
#include "pespec/fft.hpp"
#include "pespec/lattice.hpp"
#include "pespec/spectral.hpp"

namespace pespec {

struct BispectrumMatrix {
  LatticeSpec spec;
  Eigen::MatrixXcd values;  // (nu, omega) over F_z x F_z, lattice order
};

// Dense ingredients: the true (non-periodic) covariance of the observed
// cells, the mask, and the wrapped true spectrum used as the reference.
struct DenseModel {
  LatticeSpec spec;
  ObservationMask mask;
  SpectrumGrid f_true;   // strictly positive reference spectrum on F_z
  Eigen::MatrixXd K;     // n x n true covariance of the observed cells
};

inline DenseModel build_dense_model(const CovarianceFn& K,
                                    const SpectrumGrid& f_true,
                                    const ObservationMask& mask,
                                    std::size_t dense_cap = 4096) {
  const LatticeSpec& spec = mask.spec;
  if (spec.m() > dense_cap)
    throw std::invalid_argument("dense_model: lattice exceeds the dense cap");
  if (f_true.spec.z != spec.z || f_true.values.size() != spec.m())
    throw std::invalid_argument("dense_model: reference spectrum mismatch");
  for (double v : f_true.values)
    if (!(v > 0.0))
      throw std::invalid_argument(
          "dense_model: reference spectrum must be strictly positive");
  const std::size_t n = mask.n();
  if (n == 0) throw std::invalid_argument("dense_model: no observed cells");

  DenseModel model{spec, mask, f_true, Eigen::MatrixXd(n, n)};
  std::vector<std::vector<int>> coords(n);
  for (std::size_t i = 0; i < n; ++i)
    coords[i] = coord_at(spec.z, mask.observed_cells[i]);
  std::vector<int> lag(spec.d());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      for (int a = 0; a < spec.d(); ++a) lag[a] = coords[i][a] - coords[j][a];
      double v = K(lag);
      model.K(i, j) = v;
      model.K(j, i) = v;
    }
  return model;
}

// f(nu, omega) = (1/m) sum_{x,x'} S(x, x') e^{-2 pi i nu.x} e^{+2 pi i omega.x'}:
// a backward transform along the second index followed by a forward transform
// along the first.
inline BispectrumMatrix bispectrum_of(const Eigen::MatrixXd& S,
                                      const LatticeSpec& spec) {
  const std::size_t m = spec.m();
  if (S.rows() != static_cast<Eigen::Index>(m) || S.cols() != S.rows())
    throw std::invalid_argument("bispectrum: matrix does not match lattice");
  Eigen::MatrixXcd T(m, m);
  Fft& fft = fft_for(spec.z);
  std::vector<std::complex<double>> buf(m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) buf[c] = S(r, c);
    fft.backward(buf, buf);
    for (std::size_t c = 0; c < m; ++c) T(r, c) = buf[c];
  }
  for (std::size_t c = 0; c < m; ++c) {
    std::span<std::complex<double>> col(T.col(c).data(), m);
    fft.forward(col, col);
  }
  T /= static_cast<double>(m);

  double scale = 0.0;
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t r = 0; r < m; ++r)
      scale = std::max(scale, std::abs(T(r, c)));
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t r = 0; r < c; ++r)
      if (std::abs(T(r, c) - std::conj(T(c, r))) > 1e-8 * scale)
        throw numerical_error("bispectrum: result is not Hermitian");
  return {spec, std::move(T)};
}

// Diagonal of the bispectrum as a usable spectrum: real part, symmetrized
// under reflection, floored away from zero.
inline SpectrumGrid diagonal_spectrum(const BispectrumMatrix& b) {
  const std::size_t m = b.spec.m();
  std::vector<double> d(m);
  double scale = 0.0, resid = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    d[k] = b.values(k, k).real();
    scale = std::max(scale, std::abs(d[k]));
    resid = std::max(resid, std::abs(b.values(k, k).imag()));
  }
  if (resid > 1e-8 * std::max(scale, 1e-300))
    throw numerical_error("diagonal_spectrum: diagonal is not real");
  SpectrumGrid f{b.spec, std::vector<double>(m)};
  for (std::size_t k = 0; k < m; ++k)
    f.values[k] = 0.5 * (d[k] + d[reflect_index(b.spec.z, k)]);
  floor_spectrum(f);
  return f;
}

// (1/m) sum_{nu, omega} |f_k(nu, omega) - f(nu) 1{nu = omega}|^2
//                       / (f(nu) f(omega)).
inline double insb(const BispectrumMatrix& b, const SpectrumGrid& f_true) {
  const std::size_t m = b.spec.m();
  if (f_true.values.size() != m)
    throw std::invalid_argument("insb: spectrum size mismatch");
  for (double v : f_true.values)
    if (!(v > 0.0))
      throw std::invalid_argument("insb: reference spectrum must be positive");
  double total = 0.0;
  for (std::size_t w = 0; w < m; ++w)
    for (std::size_t v = 0; v < m; ++v) {
      std::complex<double> diff = b.values(v, w);
      if (v == w) diff -= f_true.values[v];
      total += std::norm(diff) / (f_true.values[v] * f_true.values[w]);
    }
  return total / static_cast<double>(m);
}

// Expected initial state: zero-infilled data scaled by m/n, so the observed
// block of the completed-field covariance is (m/n) K and everything else 0.
inline BispectrumMatrix study_initial(const DenseModel& model) {
  const std::size_t m = model.spec.m();
  const std::size_t n = model.mask.n();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, m);
  const double scale = static_cast<double>(m) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      S(model.mask.observed_cells[i], model.mask.observed_cells[j]) =
          scale * model.K(i, j);
  return bispectrum_of(S, model.spec);
}

// Exact covariance of a completed field when the data is drawn from the true
// model K but conditional simulation uses the periodic covariance of f_k:
// with R_k = [A B; B^T C] and M = A^{-1} B,
//   S = [ K        K M                        ]
//       [ M^T K    C + M^T (K - A) M          ].
inline BispectrumMatrix study_iteration(const DenseModel& model,
                                        const SpectrumGrid& f_k) {
  const LatticeSpec& spec = model.spec;
  const std::size_t m = spec.m();
  const std::size_t n = model.mask.n();
  const std::size_t w = model.mask.w();
  if (f_k.spec.z != spec.z || f_k.values.size() != m)
    throw std::invalid_argument("study_iteration: spectrum mismatch");

  PeriodicCovariance R = periodic_cov_from_spectrum(f_k);
  auto lag_cov = [&](std::size_t a, std::size_t b) {
    std::vector<int> ca = coord_at(spec.z, a), cb = coord_at(spec.z, b);
    std::vector<int> h(spec.d());
    for (int j = 0; j < spec.d(); ++j) {
      int hj = ca[j] - cb[j];
      if (hj < 0) hj += spec.z[j];
      h[j] = hj;
    }
    return R.values[linear_index(spec.z, h)];
  };

  Eigen::MatrixXd S(m, m);
  const auto& obs = model.mask.observed_cells;
  const auto& mis = model.mask.missing_cells;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) S(obs[i], obs[j]) = model.K(i, j);

  if (w > 0) {
    Eigen::MatrixXd A(n, n), B(n, w), C(w, w);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double v = lag_cov(obs[i], obs[j]);
        A(i, j) = v;
        A(j, i) = v;
      }
      for (std::size_t j = 0; j < w; ++j) B(i, j) = lag_cov(obs[i], mis[j]);
    }
    for (std::size_t i = 0; i < w; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        double v = lag_cov(mis[i], mis[j]);
        C(i, j) = v;
        C(j, i) = v;
      }

    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success)
      throw not_positive_definite_error(
          "study_iteration: observed block is not positive definite");
    Eigen::MatrixXd M = llt.solve(B);
    Eigen::MatrixXd KM = model.K * M;
    Eigen::MatrixXd WW = C + M.transpose() * (model.K - A) * M;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        S(obs[i], mis[j]) = KM(i, j);
        S(mis[j], obs[i]) = KM(i, j);
      }
    for (std::size_t i = 0; i < w; ++i)
      for (std::size_t j = 0; j < w; ++j) S(mis[i], mis[j]) = WW(i, j);
  }
  return bispectrum_of(S, spec);
}

// INSB trajectory over iterations 0..iters.
inline std::vector<double> run_study(const DenseModel& model, int iters) {
  if (iters < 0) throw std::invalid_argument("run_study: negative iterations");
  std::vector<double> out;
  BispectrumMatrix b = study_initial(model);
  out.push_back(insb(b, model.f_true));
  SpectrumGrid f = diagonal_spectrum(b);
  for (int it = 1; it <= iters; ++it) {
    b = study_iteration(model, f);
    out.push_back(insb(b, model.f_true));
    f = diagonal_spectrum(b);
  }
  return out;
}

}  // namespace pespec
