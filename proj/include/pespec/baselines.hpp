#pragma once

// Non-imputing reference estimators, computed on the observation lattice
// itself (no periodic embedding): the zero-infill periodogram and the split
// cosine-bell taper, optionally with an extra rolloff toward a central
// missing block.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "pespec/errors.hpp"
#include "pespec/fft.hpp"
#include "pespec/lattice.hpp"
#include "pespec/spectral.hpp"

namespace pespec {

namespace detail {

inline void require_unembedded(const ObservationMask& mask, const char* what) {
  if (mask.spec.z != mask.spec.y)
    throw std::invalid_argument(std::string(what) +
                                ": baselines use the observation lattice only");
}

// Rising half of the split cosine bell over w cells, 0-based index.
inline double cosine_ramp(int i, int w) {
  if (i >= w) return 1.0;
  return 0.5 * (1.0 - std::cos(std::numbers::pi * (i + 0.5) / w));
}

}  // namespace detail

// Periodogram of the observed data with zeros at missing cells, normalized by
// the observed count, then smoothed.
inline SpectrumGrid zero_infill_periodogram(std::span<const double> data,
                                            const ObservationMask& mask,
                                            const SmoothingKernel& kernel) {
  detail::require_unembedded(mask, "zero_infill_periodogram");
  const std::size_t n = mask.n();
  if (n == 0)
    throw std::invalid_argument("zero_infill_periodogram: no observed cells");
  if (data.size() != n)
    throw std::invalid_argument("zero_infill_periodogram: data size mismatch");
  if (kernel.weights.size() != mask.spec.m())
    throw std::invalid_argument("zero_infill_periodogram: kernel mismatch");

  std::vector<double> field(mask.spec.m(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    field[mask.observed_cells[i]] = data[i];
  std::vector<std::complex<double>> F = dft_forward_real(mask.spec.z, field);
  std::vector<double> I(F.size());
  for (std::size_t k = 0; k < F.size(); ++k)
    I[k] = std::norm(F[k]) / static_cast<double>(n);
  return {mask.spec, smooth(I, kernel)};
}

struct TaperGrid {
  LatticeSpec spec;
  std::vector<double> weights;  // over J_y, zero at missing cells
  double edge_fraction = 0.0;
};

// Split cosine-bell taper: per axis, the first and last ceil(p * y_j) cells
// ramp smoothly from near zero to one; the product over axes tapers the grid
// boundary. Missing cells get weight zero. With interior_rolloff set, an
// additional ramp of the same profile rises with Chebyshev distance from the
// bounding box of the missing cells, so a central missing block is approached
// as smoothly as the outer edge.
inline TaperGrid build_taper(const ObservationMask& mask, double p,
                             bool interior_rolloff = false) {
  detail::require_unembedded(mask, "build_taper");
  if (!(p > 0.0) || !(p < 1.0))
    throw std::invalid_argument("build_taper: edge fraction must be in (0,1)");

  const std::vector<int>& y = mask.spec.y;
  const int d = mask.spec.d();
  TaperGrid taper{mask.spec, std::vector<double>(mask.spec.m(), 0.0), p};

  std::vector<int> width(d);
  for (int j = 0; j < d; ++j)
    width[j] = static_cast<int>(std::ceil(p * y[j]));

  std::vector<int> lo(d, 0), hi(d, -1);
  int interior_width = 0;
  if (interior_rolloff) {
    if (mask.w() == 0)
      throw std::invalid_argument(
          "build_taper: interior rolloff needs missing cells");
    for (int j = 0; j < d; ++j) {
      lo[j] = y[j];
      hi[j] = -1;
    }
    for (std::size_t cell : mask.missing_cells) {
      std::vector<int> c = coord_at(mask.spec.z, cell);
      for (int j = 0; j < d; ++j) {
        lo[j] = std::min(lo[j], c[j]);
        hi[j] = std::max(hi[j], c[j]);
      }
    }
    int min_dim = *std::min_element(y.begin(), y.end());
    interior_width = static_cast<int>(std::ceil(p * min_dim));
  }

  for (std::size_t cell : mask.observed_cells) {
    std::vector<int> c = coord_at(mask.spec.z, cell);
    double t = 1.0;
    for (int j = 0; j < d; ++j) {
      double rise = detail::cosine_ramp(c[j], width[j]);
      double fall = detail::cosine_ramp(y[j] - 1 - c[j], width[j]);
      t *= std::min(rise, fall);
    }
    if (interior_rolloff) {
      int gap = 0;
      for (int j = 0; j < d; ++j) {
        int g = std::max(lo[j] - c[j], c[j] - hi[j]);
        gap = std::max(gap, g);
      }
      gap = std::max(gap, 1);  // observed cells inside the box ramp like ring 1
      t *= detail::cosine_ramp(gap - 1, interior_width);
    }
    taper.weights[cell] = t;
  }
  return taper;
}

// I(k) = |sum_x T(x) v(x) e^{-2 pi i k.x/y}|^2 / sum_x T(x)^2, smoothed.
inline SpectrumGrid tapered_periodogram(std::span<const double> data,
                                        const ObservationMask& mask,
                                        const TaperGrid& taper,
                                        const SmoothingKernel& kernel) {
  detail::require_unembedded(mask, "tapered_periodogram");
  if (taper.spec.z != mask.spec.z)
    throw std::invalid_argument("tapered_periodogram: taper mismatch");
  if (data.size() != mask.n())
    throw std::invalid_argument("tapered_periodogram: data size mismatch");
  if (kernel.weights.size() != mask.spec.m())
    throw std::invalid_argument("tapered_periodogram: kernel mismatch");

  double norm = 0.0;
  for (double t : taper.weights) norm += t * t;
  if (!(norm > 0.0))
    throw std::invalid_argument("tapered_periodogram: taper is identically zero");

  std::vector<double> field(mask.spec.m(), 0.0);
  for (std::size_t i = 0; i < mask.n(); ++i) {
    std::size_t cell = mask.observed_cells[i];
    field[cell] = taper.weights[cell] * data[i];
  }
  std::vector<std::complex<double>> F = dft_forward_real(mask.spec.z, field);
  std::vector<double> I(F.size());
  for (std::size_t k = 0; k < F.size(); ++k) I[k] = std::norm(F[k]) / norm;
  return {mask.spec, smooth(I, kernel)};
}

}  // namespace pespec
