#pragma once

// The covariance operator of a stationary periodic field, diagonalized by the
// DFT: R v = BACKWARD(f .* FORWARD(v)) / m. Observed/missing sub-blocks never
// materialize; they are scatter -> full multiply -> gather against the mask.
// With R = [A B; B^T C] in (observed, missing) order, the observed block of
// R^{-1} equals (A - B C^{-1} B^T)^{-1}, which is what the inverse-spectrum
// preconditioner applies.

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "pespec/errors.hpp"
#include "pespec/fft.hpp"
#include "pespec/lattice.hpp"
#include "pespec/rng.hpp"
#include "pespec/spectral.hpp"

namespace pespec {

class CirculantOperator {
 public:
  CirculantOperator(const SpectrumGrid& f, ObservationMask mask)
      : spec_(f.spec), mask_(std::move(mask)), eigenvalues_(f.values) {
    if (f.values.size() != spec_.m())
      throw std::invalid_argument("circulant: spectrum size mismatch");
    if (mask_.spec.z != spec_.z)
      throw std::invalid_argument("circulant: mask lattice mismatch");
    if (mask_.n() == 0)
      throw std::invalid_argument("circulant: no observed cells");
    detail::require_symmetric(spec_.z, eigenvalues_, "circulant");
    SpectrumGrid tmp{spec_, std::move(eigenvalues_)};
    floor_ = floor_spectrum(tmp);
    eigenvalues_ = std::move(tmp.values);
  }

  const LatticeSpec& spec() const { return spec_; }
  const ObservationMask& mask() const { return mask_; }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  double floor_used() const { return floor_; }

 private:
  LatticeSpec spec_;
  ObservationMask mask_;
  std::vector<double> eigenvalues_;
  double floor_ = 0.0;
};

namespace detail {

inline std::vector<double> scatter(std::size_t m,
                                   const std::vector<std::size_t>& cells,
                                   std::span<const double> x) {
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < cells.size(); ++i) out[cells[i]] = x[i];
  return out;
}

inline std::vector<double> gather(std::span<const double> values,
                                  const std::vector<std::size_t>& cells) {
  std::vector<double> out(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) out[i] = values[cells[i]];
  return out;
}

inline void require_real(double resid, double scale, const char* what) {
  if (resid > 1e-10 * std::max(1.0, scale))
    throw numerical_error(std::string(what) +
                          ": imaginary residue too large");
}

// BACKWARD(diag .* FORWARD(v)) / m for diag = f or 1/f.
inline std::vector<double> circulant_apply(const LatticeSpec& spec,
                                           const std::vector<double>& eigs,
                                           std::span<const double> v,
                                           bool inverse) {
  const double m = static_cast<double>(spec.m());
  std::vector<std::complex<double>> buf(v.begin(), v.end());
  Fft& fft = fft_for(spec.z);
  fft.forward(buf, buf);
  if (inverse)
    for (std::size_t k = 0; k < buf.size(); ++k) buf[k] /= eigs[k];
  else
    for (std::size_t k = 0; k < buf.size(); ++k) buf[k] *= eigs[k];
  fft.backward(buf, buf);
  std::vector<double> out(buf.size());
  double scale = 0.0, resid = 0.0;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    out[i] = buf[i].real() / m;
    scale = std::max(scale, std::abs(out[i]));
    resid = std::max(resid, std::abs(buf[i].imag()) / m);
  }
  require_real(resid, scale, "circulant_apply");
  return out;
}

}  // namespace detail

// R v over the whole embedding lattice.
inline GridField full_multiply(const CirculantOperator& op,
                               const GridField& v) {
  if (v.values.size() != op.spec().m())
    throw std::invalid_argument("full_multiply: size mismatch");
  return {op.spec(),
          detail::circulant_apply(op.spec(), op.eigenvalues(), v.values, false)};
}

// A x: observed block of R applied to observed-cell values.
inline std::vector<double> a_multiply(const CirculantOperator& op,
                                      std::span<const double> x) {
  const ObservationMask& mask = op.mask();
  if (x.size() != mask.n())
    throw std::invalid_argument("a_multiply: size mismatch");
  std::vector<double> full = detail::scatter(op.spec().m(),
                                             mask.observed_cells, x);
  full = detail::circulant_apply(op.spec(), op.eigenvalues(), full, false);
  return detail::gather(full, mask.observed_cells);
}

// B^T x: covariance of missing cells with observed ones applied to observed
// values. Empty when nothing is missing.
inline std::vector<double> bt_multiply(const CirculantOperator& op,
                                       std::span<const double> x) {
  const ObservationMask& mask = op.mask();
  if (x.size() != mask.n())
    throw std::invalid_argument("bt_multiply: size mismatch");
  if (mask.w() == 0) return {};
  std::vector<double> full = detail::scatter(op.spec().m(),
                                             mask.observed_cells, x);
  full = detail::circulant_apply(op.spec(), op.eigenvalues(), full, false);
  return detail::gather(full, mask.missing_cells);
}

// (A - B C^{-1} B^T)^{-1} x, the observed block of R^{-1}.
inline std::vector<double> inv_multiply_observed(const CirculantOperator& op,
                                                 std::span<const double> x) {
  const ObservationMask& mask = op.mask();
  if (x.size() != mask.n())
    throw std::invalid_argument("inv_multiply_observed: size mismatch");
  std::vector<double> full = detail::scatter(op.spec().m(),
                                             mask.observed_cells, x);
  full = detail::circulant_apply(op.spec(), op.eigenvalues(), full, true);
  return detail::gather(full, mask.observed_cells);
}

// Exact draw from the periodic field with spectrum eigenvalues eigs:
// X = BACKWARD(sqrt(eigs) .* xi) / sqrt(m) with xi Hermitian-symmetric
// complex normals. Self-conjugate frequencies get a real N(0,1); each
// conjugate pair shares (a + ib)/sqrt(2) and its conjugate. Draw order is
// linear in k, so the stream is consumed identically on every platform.
inline GridField sample_from_eigenvalues(const LatticeSpec& spec,
                                         std::span<const double> eigs,
                                         RngStream& rng) {
  const std::size_t m = spec.m();
  if (eigs.size() != m)
    throw std::invalid_argument("sample_from_eigenvalues: size mismatch");
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  std::vector<std::complex<double>> u(m);
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t r = reflect_index(spec.z, k);
    if (r == k) {
      u[k] = rng.normal();
    } else if (k < r) {
      double a = rng.normal() * inv_sqrt2;
      double b = rng.normal() * inv_sqrt2;
      u[k] = {a, b};
      u[r] = {a, -b};
    }
  }
  for (std::size_t k = 0; k < m; ++k) {
    double e = eigs[k];
    if (e < 0.0)
      throw std::invalid_argument("sample_from_eigenvalues: negative eigenvalue");
    u[k] *= std::sqrt(e);
  }
  Fft& fft = fft_for(spec.z);
  fft.backward(u, u);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  std::vector<double> x(m);
  double mag = 0.0, resid = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    x[i] = u[i].real() * scale;
    mag = std::max(mag, std::abs(x[i]));
    resid = std::max(resid, std::abs(u[i].imag()) * scale);
  }
  detail::require_real(resid, mag, "sample_from_eigenvalues");
  return {spec, std::move(x)};
}

inline GridField unconditional_sample(const CirculantOperator& op,
                                      RngStream& rng) {
  return sample_from_eigenvalues(op.spec(), op.eigenvalues(), rng);
}

}  // namespace pespec
