#pragma once

// Lattice geometry shared by every module: rectangular observation lattices,
// their periodic embeddings, and the row-major linearization (last dimension
// fastest) used for all flattened grids.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pespec {

inline std::size_t cell_count(const std::vector<int>& dims) {
  std::size_t m = 1;
  for (int d : dims) m *= static_cast<std::size_t>(d);
  return m;
}

inline std::size_t linear_index(const std::vector<int>& dims,
                                const std::vector<int>& coord) {
  std::size_t idx = 0;
  for (std::size_t j = 0; j < dims.size(); ++j)
    idx = idx * static_cast<std::size_t>(dims[j]) +
          static_cast<std::size_t>(coord[j]);
  return idx;
}

inline std::vector<int> coord_at(const std::vector<int>& dims,
                                 std::size_t linear) {
  std::vector<int> c(dims.size());
  for (std::size_t j = dims.size(); j-- > 0;) {
    c[j] = static_cast<int>(linear % static_cast<std::size_t>(dims[j]));
    linear /= static_cast<std::size_t>(dims[j]);
  }
  return c;
}

// Odometer step through the lattice in linear order; false once exhausted.
inline bool next_coord(const std::vector<int>& dims, std::vector<int>& coord) {
  for (std::size_t j = dims.size(); j-- > 0;) {
    if (++coord[j] < dims[j]) return true;
    coord[j] = 0;
  }
  return false;
}

// Linear index of (-coord mod dims); fixed points are the self-conjugate
// frequencies of a real field's DFT.
inline std::size_t reflect_index(const std::vector<int>& dims,
                                 std::size_t linear) {
  std::vector<int> c = coord_at(dims, linear);
  for (std::size_t j = 0; j < c.size(); ++j)
    if (c[j] != 0) c[j] = dims[j] - c[j];
  return linear_index(dims, c);
}

// Observation lattice J_y embedded into a congruent periodic lattice J_z,
// z_j = ceil(tau * y_j). J_y occupies the low-index corner of J_z.
struct LatticeSpec {
  std::vector<int> y;
  std::vector<int> z;
  double tau = 1.0;

  int d() const { return static_cast<int>(z.size()); }
  std::size_t m() const { return cell_count(z); }
  std::size_t y_cells() const { return cell_count(y); }
};

inline LatticeSpec build_embedding(const std::vector<int>& y, double tau) {
  if (y.empty()) throw std::invalid_argument("embedding: empty dimension list");
  if (!(tau >= 1.0))
    throw std::invalid_argument("embedding: expansion factor must be >= 1");
  LatticeSpec spec;
  spec.y = y;
  spec.tau = tau;
  spec.z.resize(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (y[j] < 2)
      throw std::invalid_argument("embedding: each dimension must be >= 2");
    // The 1e-9 backoff keeps IEEE artifacts like 1.1*80 = 88.000000000000014
    // from bumping the ceiling to 89.
    spec.z[j] = static_cast<int>(std::ceil(tau * y[j] - 1e-9));
  }
  return spec;
}

// Fourier frequency of grid index k on lattice dims: omega_j = k_j / dims_j.
inline std::vector<double> frequency_at(const std::vector<int>& dims,
                                        std::size_t linear) {
  std::vector<int> c = coord_at(dims, linear);
  std::vector<double> w(c.size());
  for (std::size_t j = 0; j < c.size(); ++j)
    w[j] = static_cast<double>(c[j]) / static_cast<double>(dims[j]);
  return w;
}

// Observed/missing split of the embedding lattice. Cells outside J_y are
// always missing; index lists are ascending, which is also lexicographic
// order of coordinates.
struct ObservationMask {
  LatticeSpec spec;
  std::vector<std::uint8_t> observed;         // over J_z, length m
  std::vector<std::size_t> observed_cells;    // ascending linear indices
  std::vector<std::size_t> missing_cells;

  std::size_t n() const { return observed_cells.size(); }
  std::size_t w() const { return missing_cells.size(); }
};

inline void rebuild_index_lists(ObservationMask& mask) {
  mask.observed_cells.clear();
  mask.missing_cells.clear();
  for (std::size_t i = 0; i < mask.observed.size(); ++i)
    (mask.observed[i] ? mask.observed_cells : mask.missing_cells).push_back(i);
}

// Lift a mask given over J_y onto the embedding lattice.
inline ObservationMask embed_mask(const std::vector<std::uint8_t>& observed_y,
                                  const LatticeSpec& spec) {
  if (observed_y.size() != spec.y_cells())
    throw std::invalid_argument("mask: size does not match observation lattice");
  ObservationMask mask;
  mask.spec = spec;
  mask.observed.assign(spec.m(), 0);
  std::vector<int> c(spec.y.size(), 0);
  std::size_t iy = 0;
  do {
    mask.observed[linear_index(spec.z, c)] = observed_y[iy++];
  } while (next_coord(spec.y, c));
  rebuild_index_lists(mask);
  return mask;
}

// A real field laid out over the embedding lattice.
struct GridField {
  LatticeSpec spec;
  std::vector<double> values;
};

}  // namespace pespec
