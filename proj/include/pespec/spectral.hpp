#pragma once

// Spectral core: spectra on the Fourier grid of the embedding lattice, their
// dual periodic covariances, model spectra (Matern-by-wrapping, quasi-AR1),
// periodograms, and the Gaussian smoothing kernel used everywhere a raw
// periodogram needs regularizing.
//
// A spectrum grid f lives on frequencies omega_k = (k_1/z_1, ..., k_d/z_d),
// k in J_z, and is real, nonnegative, and reflection-symmetric. Its dual
// covariance is R(h) = (1/m) sum_k f(k) exp(+2 pi i k.h / z).

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "pespec/errors.hpp"
#include "pespec/fft.hpp"
#include "pespec/lattice.hpp"

namespace pespec {

struct SpectrumGrid {
  LatticeSpec spec;
  std::vector<double> values;  // over F_z, linear order
};

struct PeriodicCovariance {
  LatticeSpec spec;
  std::vector<double> values;  // R(h) for lags h in J_z, linear order
};

// Largest |v(k) - v(-k mod z)| over the grid.
inline double symmetry_residual(const std::vector<int>& dims,
                                std::span<const double> v) {
  double worst = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k)
    worst = std::max(worst, std::abs(v[k] - v[reflect_index(dims, k)]));
  return worst;
}

namespace detail {

inline void require_symmetric(const std::vector<int>& dims,
                              std::span<const double> v, const char* what) {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (symmetry_residual(dims, v) > 1e-8 * std::max(scale, 1e-300))
    throw std::invalid_argument(std::string(what) +
                                ": grid is not reflection-symmetric");
}

}  // namespace detail

inline PeriodicCovariance periodic_cov_from_spectrum(const SpectrumGrid& f) {
  if (f.values.size() != f.spec.m())
    throw std::invalid_argument("cov_from_spectrum: size mismatch");
  detail::require_symmetric(f.spec.z, f.values, "cov_from_spectrum");
  const double m = static_cast<double>(f.spec.m());
  std::vector<std::complex<double>> in(f.values.begin(), f.values.end());
  double resid = 0.0;
  std::vector<double> R = dft_backward_real(f.spec.z, in, &resid);
  for (double& v : R) v /= m;
  resid /= m;
  double R0 = R[0];
  if (resid > 1e-10 * std::max(std::abs(R0), 1e-300))
    throw numerical_error("cov_from_spectrum: imaginary residue too large");
  return {f.spec, std::move(R)};
}

// Inverse of the above. Eigenvalues dipping below -1e-10 * max are treated as
// a genuine positive-definiteness failure; shallower dips are roundoff and
// clamp to zero.
inline SpectrumGrid spectrum_from_cov(const PeriodicCovariance& R) {
  if (R.values.size() != R.spec.m())
    throw std::invalid_argument("spectrum_from_cov: size mismatch");
  detail::require_symmetric(R.spec.z, R.values, "spectrum_from_cov");
  std::vector<std::complex<double>> full =
      dft_forward_real(R.spec.z, R.values);
  std::vector<double> f(full.size());
  double fmax = 0.0, resid = 0.0;
  for (std::size_t k = 0; k < full.size(); ++k) {
    f[k] = full[k].real();
    fmax = std::max(fmax, f[k]);
    resid = std::max(resid, std::abs(full[k].imag()));
  }
  if (resid > 1e-10 * std::max(fmax, 1e-300))
    throw numerical_error("spectrum_from_cov: imaginary residue too large");
  for (double& v : f) {
    if (v < -1e-10 * fmax)
      throw not_positive_definite_error(
          "spectrum_from_cov: covariance has a negative eigenvalue");
    if (v < 0.0) v = 0.0;
  }
  return {R.spec, std::move(f)};
}

// Raise every spectrum value to at least 1e-8 of the mean level; returns the
// floor used. Keeps downstream divisions and factorizations away from zero.
inline double floor_spectrum(SpectrumGrid& f) {
  double mean = 0.0;
  for (double v : f.values) mean += v;
  mean /= static_cast<double>(f.values.size());
  double floor = 1e-8 * mean;
  for (double& v : f.values) v = std::max(v, floor);
  return floor;
}

struct MaternParams {
  double nu = 0.5;
  double range = 8.0;
  double variance = 2.0;
};

inline void validate(const MaternParams& p) {
  if (!(p.nu > 0.0) || !(p.range > 0.0) || !(p.variance > 0.0))
    throw std::invalid_argument("matern: parameters must be positive");
}

inline double matern_cov(double distance, const MaternParams& p) {
  validate(p);
  if (!(distance >= 0.0))
    throw std::invalid_argument("matern: distance must be nonnegative");
  if (distance == 0.0) return p.variance;
  const double s = std::sqrt(2.0 * p.nu) * distance / p.range;
  double v = p.variance * std::pow(2.0, 1.0 - p.nu) / std::tgamma(p.nu) *
             std::pow(s, p.nu) * std::cyl_bessel_k(p.nu, s);
  // K_nu underflows for large arguments; the covariance is then zero.
  return std::isfinite(v) ? v : 0.0;
}

inline double matern_cov(const std::vector<int>& lag, const MaternParams& p) {
  double s2 = 0.0;
  for (int h : lag) s2 += static_cast<double>(h) * h;
  return matern_cov(std::sqrt(s2), p);
}

using CovarianceFn = std::function<double(const std::vector<int>&)>;

// Covariance wrapped onto the torus J_z:
// R_wrap(h) = sum_{k in Z^d} K(h + k o z), truncated at |k_j| <= k_max.
// k_max < 0 selects adaptive doubling until the wrap stops changing
// (max change <= 1e-10 * R_wrap(0)).
inline PeriodicCovariance wrapped_covariance(const CovarianceFn& K,
                                             const LatticeSpec& spec,
                                             int k_max = -1) {
  const std::size_t m = spec.m();
  const int d = spec.d();
  auto wrap = [&](int km) {
    std::vector<double> R(m, 0.0);
    std::vector<int> off(d, -km);
    std::vector<int> h(d, 0);
    for (;;) {
      std::vector<int> shift(d);
      for (int j = 0; j < d; ++j) shift[j] = off[j] * spec.z[j];
      std::fill(h.begin(), h.end(), 0);
      std::size_t cell = 0;
      do {
        std::vector<int> lag(d);
        for (int j = 0; j < d; ++j) lag[j] = h[j] + shift[j];
        R[cell++] += K(lag);
      } while (next_coord(spec.z, h));
      // advance the offset odometer over [-km, km]^d
      int j = d - 1;
      while (j >= 0 && ++off[j] > km) off[j--] = -km;
      if (j < 0) break;
    }
    return R;
  };

  std::vector<double> R;
  if (k_max >= 0) {
    R = wrap(k_max);
  } else {
    R = wrap(1);
    for (int km = 2; km <= 64; km *= 2) {
      std::vector<double> next = wrap(km);
      double change = 0.0;
      for (std::size_t i = 0; i < m; ++i)
        change = std::max(change, std::abs(next[i] - R[i]));
      bool done = change <= 1e-10 * std::abs(next[0]);
      R = std::move(next);
      if (done) break;
      if (km == 64)
        throw numerical_error("wrapped_covariance: wrap did not settle");
    }
  }
  return {spec, std::move(R)};
}

// Spectrum of the wrapped covariance; requires the wrap to be (numerically)
// nonnegative definite on the torus.
inline SpectrumGrid wrapped_true_spectrum(const CovarianceFn& K,
                                          const LatticeSpec& spec,
                                          int k_max = -1) {
  return spectrum_from_cov(wrapped_covariance(K, spec, k_max));
}

// Quasi-AR1 spectrum on a 2-d lattice:
// f(omega) = 1 / (1 - (theta/2) (cos 2 pi omega_1 + cos 2 pi omega_2)).
inline SpectrumGrid ar1_spectrum(double theta, const LatticeSpec& spec) {
  if (spec.d() != 2)
    throw std::invalid_argument("ar1_spectrum: defined for 2-d lattices only");
  if (!(theta >= 0.0) || theta >= 1.0)
    throw std::invalid_argument("ar1_spectrum: theta must lie in [0, 1)");
  SpectrumGrid f{spec, std::vector<double>(spec.m())};
  const double two_pi = 2.0 * std::numbers::pi;
  std::size_t k = 0;
  for (int k1 = 0; k1 < spec.z[0]; ++k1) {
    double c1 = std::cos(two_pi * k1 / spec.z[0]);
    for (int k2 = 0; k2 < spec.z[1]; ++k2, ++k) {
      double c2 = std::cos(two_pi * k2 / spec.z[1]);
      f.values[k] = 1.0 / (1.0 - 0.5 * theta * (c1 + c2));
    }
  }
  return f;
}

// I(k) = |sum_x v(x) e^{-2 pi i k.x/z}|^2 / m. Mean-one white noise scaling:
// E I = f for a field with spectrum f.
inline SpectrumGrid periodogram(const GridField& field) {
  if (field.values.size() != field.spec.m())
    throw std::invalid_argument("periodogram: size mismatch");
  std::vector<std::complex<double>> F =
      dft_forward_real(field.spec.z, field.values);
  std::vector<double> I(F.size());
  const double m = static_cast<double>(F.size());
  for (std::size_t k = 0; k < F.size(); ++k) I[k] = std::norm(F[k]) / m;
  return {field.spec, std::move(I)};
}

// Gaussian kernel on the frequency torus. Weight at frequency lag nu is
// proportional to exp(-dist(nu)^2 / delta^2) with dist the Euclidean
// combination of per-axis circular distances min(|nu_j|, 1 - |nu_j|).
// Forward transforms of the weights and squared weights are cached because
// every smoothing pass needs them.
struct SmoothingKernel {
  LatticeSpec spec;
  double delta = 0.0;
  std::vector<double> weights;                        // normalized, sum 1
  std::vector<std::complex<double>> weights_hat;      // FORWARD(weights)
  std::vector<std::complex<double>> weights_sq_hat;   // FORWARD(weights^2)
};

inline SmoothingKernel build_kernel(double delta, const LatticeSpec& spec) {
  if (!(delta > 0.0))
    throw std::invalid_argument("kernel: bandwidth must be positive");
  const std::size_t m = spec.m();
  SmoothingKernel ker;
  ker.spec = spec;
  ker.delta = delta;
  ker.weights.resize(m);
  double total = 0.0;
  std::vector<int> c(spec.d(), 0);
  std::size_t k = 0;
  do {
    double d2 = 0.0;
    for (int j = 0; j < spec.d(); ++j) {
      double nu = static_cast<double>(c[j]) / spec.z[j];
      double circ = std::min(nu, 1.0 - nu);
      d2 += circ * circ;
    }
    double w = std::exp(-d2 / (delta * delta));
    ker.weights[k++] = w;
    total += w;
  } while (next_coord(spec.z, c));
  for (double& w : ker.weights) w /= total;

  ker.weights_hat = dft_forward_real(spec.z, ker.weights);
  std::vector<double> sq(m);
  for (std::size_t i = 0; i < m; ++i) sq[i] = ker.weights[i] * ker.weights[i];
  ker.weights_sq_hat = dft_forward_real(spec.z, sq);
  return ker;
}

namespace detail {

inline std::vector<double> convolve_cached(
    const std::vector<int>& dims, std::span<const double> v,
    const std::vector<std::complex<double>>& kernel_hat) {
  std::vector<std::complex<double>> F = dft_forward_real(dims, v);
  for (std::size_t i = 0; i < F.size(); ++i) F[i] *= kernel_hat[i];
  std::vector<double> out = dft_backward_real(dims, F);
  const double m = static_cast<double>(out.size());
  double scale = 0.0;
  for (double& x : out) {
    x /= m;
    scale = std::max(scale, std::abs(x));
  }
  // FFT roundoff can leave -1e-17-ish values where the exact result is 0.
  for (double& x : out)
    if (x < 0.0 && x > -1e-12 * scale) x = 0.0;
  return out;
}

}  // namespace detail

// Circular convolution of a frequency grid with the kernel weights.
inline std::vector<double> smooth(std::span<const double> values,
                                  const SmoothingKernel& kernel) {
  if (values.size() != kernel.weights.size())
    throw std::invalid_argument("smooth: size mismatch");
  return detail::convolve_cached(kernel.spec.z, values, kernel.weights_hat);
}

// Pointwise scale of a smoothed estimate built from grid f:
// S(omega) = sqrt( sum_nu f(nu)^2 alpha(omega - nu)^2 ).
inline std::vector<double> smoothed_sd(std::span<const double> f,
                                       const SmoothingKernel& kernel) {
  if (f.size() != kernel.weights.size())
    throw std::invalid_argument("smoothed_sd: size mismatch");
  std::vector<double> f2(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) f2[i] = f[i] * f[i];
  std::vector<double> s =
      detail::convolve_cached(kernel.spec.z, f2, kernel.weights_sq_hat);
  for (double& v : s) v = std::sqrt(std::max(v, 0.0));
  return s;
}

}  // namespace pespec
