#pragma once

// Grid-file parsing and writing, run configuration, and mean handling for
// the command-line driver.
//
// Grid file format: a header line "d z1 ... zd", then the cell values in
// row-major order (last dimension fastest), whitespace-delimited, with the
// token NA marking a missing cell. The writer emits one text line per run of
// the last dimension and formats numbers with %.17g, so written files parse
// back to the same doubles and canonical files round-trip byte-identically.

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pespec/errors.hpp"
#include "pespec/estimator.hpp"
#include "pespec/lattice.hpp"

namespace pespec {

struct GridData {
  std::vector<int> dims;
  std::vector<double> values;          // 0.0 placeholder at missing cells
  std::vector<std::uint8_t> observed;  // 1 = value present
};

namespace detail {

inline double parse_real(const std::string& tok, const std::string& name,
                         std::size_t index) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || tok.empty() || errno == ERANGE ||
      !std::isfinite(v))
    throw io_error(name + ": cell " + std::to_string(index) +
                   ": bad numeric token '" + tok + "'");
  return v;
}

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline GridData read_grid(std::istream& in, const std::string& name) {
  long long d = 0;
  if (!(in >> d) || d < 1 || d > 16)
    throw io_error(name + ": bad dimension count in header");
  std::vector<int> dims(static_cast<std::size_t>(d));
  for (auto& z : dims) {
    long long v = 0;
    if (!(in >> v) || v < 1 || v > 1'000'000'000)
      throw io_error(name + ": bad grid dimension in header");
    z = static_cast<int>(v);
  }
  const std::size_t count = cell_count(dims);

  GridData grid{std::move(dims), std::vector<double>(count, 0.0),
                std::vector<std::uint8_t>(count, 0)};
  std::string tok;
  for (std::size_t i = 0; i < count; ++i) {
    if (!(in >> tok))
      throw io_error(name + ": expected " + std::to_string(count) +
                     " cells, got " + std::to_string(i));
    if (tok == "NA") continue;
    grid.values[i] = detail::parse_real(tok, name, i);
    grid.observed[i] = 1;
  }
  if (in >> tok)
    throw io_error(name + ": trailing data after " + std::to_string(count) +
                   " cells");
  return grid;
}

inline GridData read_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path + ": cannot open for reading");
  return read_grid(in, path);
}

// Two-file form: a value grid plus a 0/1 mask grid of the same shape. Cells
// flagged missing ignore the value grid; cells flagged observed must carry a
// value.
inline GridData apply_mask_grid(GridData values, const GridData& mask) {
  if (mask.dims != values.dims)
    throw io_error("mask grid: dimensions do not match the value grid");
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    if (!mask.observed[i] ||
        (mask.values[i] != 0.0 && mask.values[i] != 1.0))
      throw io_error("mask grid: cell " + std::to_string(i) +
                     " is not 0 or 1");
    if (mask.values[i] == 0.0) {
      values.observed[i] = 0;
      values.values[i] = 0.0;
    } else if (!values.observed[i]) {
      throw io_error("mask grid: cell " + std::to_string(i) +
                     " is flagged observed but the value grid has NA");
    }
  }
  return values;
}

inline void write_grid(std::ostream& out, const std::vector<int>& dims,
                       std::span<const double> values,
                       std::span<const std::uint8_t> observed = {}) {
  if (dims.empty()) throw std::invalid_argument("write_grid: empty dims");
  for (int z : dims)
    if (z < 1) throw std::invalid_argument("write_grid: bad dimension");
  const std::size_t count = cell_count(dims);
  if (values.size() != count)
    throw std::invalid_argument("write_grid: value count mismatch");
  if (!observed.empty() && observed.size() != count)
    throw std::invalid_argument("write_grid: mask size mismatch");

  out << dims.size();
  for (int z : dims) out << ' ' << z;
  out << '\n';

  const std::size_t row = static_cast<std::size_t>(dims.back());
  for (std::size_t i = 0; i < count; ++i) {
    bool present = observed.empty() || observed[i];
    if (present && !std::isfinite(values[i]))
      throw std::invalid_argument("write_grid: non-finite value at cell " +
                                  std::to_string(i));
    out << (present ? detail::format_real(values[i]) : std::string("NA"));
    out << ((i + 1) % row == 0 ? '\n' : ' ');
  }
  if (!out) throw io_error("write_grid: stream failure");
}

inline void write_grid_file(const std::string& path,
                            const std::vector<int>& dims,
                            std::span<const double> values,
                            std::span<const std::uint8_t> observed = {}) {
  std::ofstream out(path);
  if (!out) throw io_error(path + ": cannot open for writing");
  write_grid(out, dims, values, observed);
  out.close();
  if (!out) throw io_error(path + ": write failure");
}

// Observed values in the order used throughout the library (ascending cell
// index, which is row-major over J_y and over any embedding of it).
inline std::vector<double> gather_observed(const GridData& grid) {
  std::vector<double> data;
  for (std::size_t i = 0; i < grid.values.size(); ++i)
    if (grid.observed[i]) data.push_back(grid.values[i]);
  return data;
}

// Run configuration mirroring the driver's flag names.
struct RunConfig {
  double embed_fac = 1.0;
  int burn_iters = 30;
  double kern_parm = 0.02;
  std::string par_spec_fun = "none";   // none | ar1
  std::string precond_method = "fft";  // fft | vecchia
  int neighbors = 30;
  double epsilon = 0.05;
  int L = 1;
  std::uint64_t seed = 1;
  int max_iterations = 1000;
  std::string mean = "none";  // none | constant | linear
  int threads = 0;            // 0 = all available cores
  double pcg_tol = 1e-6;
  int pcg_max_iterations = 1000;
};

enum class MeanMode { none, constant, linear };

inline MeanMode mean_mode_from(const std::string& token) {
  if (token == "none") return MeanMode::none;
  if (token == "constant") return MeanMode::constant;
  if (token == "linear") return MeanMode::linear;
  throw std::invalid_argument("mean: unknown mode '" + token + "'");
}

inline EstimatorConfig to_estimator_config(const RunConfig& rc) {
  EstimatorConfig cfg;
  cfg.tau = rc.embed_fac;
  cfg.delta = rc.kern_parm;
  cfg.epsilon = rc.epsilon;
  cfg.burn_in = rc.burn_iters;
  cfg.L = rc.L;
  cfg.max_iterations = rc.max_iterations;
  if (rc.par_spec_fun == "none")
    cfg.filter = FilterKind::none;
  else if (rc.par_spec_fun == "ar1")
    cfg.filter = FilterKind::ar1;
  else
    throw std::invalid_argument("par_spec_fun: unknown filter '" +
                                rc.par_spec_fun + "'");
  if (rc.precond_method == "fft")
    cfg.precond.kind = PrecondKind::inverse_spectrum;
  else if (rc.precond_method == "vecchia")
    cfg.precond.kind = PrecondKind::vecchia;
  else
    throw std::invalid_argument("precond_method: unknown method '" +
                                rc.precond_method + "'");
  if (rc.neighbors < 1)
    throw std::invalid_argument("neighbors: must be at least 1");
  cfg.precond.neighbors = rc.neighbors;
  cfg.pcg.rel_tol = rc.pcg_tol;
  cfg.pcg.max_iter = rc.pcg_max_iterations;
  cfg.seed = rc.seed;
  cfg.threads = rc.threads;
  mean_mode_from(rc.mean);  // validated here, applied by the driver
  return cfg;
}

// Fitted mean surface, removed before estimation and reapplied to outputs.
struct MeanModel {
  MeanMode mode = MeanMode::none;
  std::vector<double> coef;  // constant: {b0}; linear: {b0, b1, ..., bd}
  std::string warning;       // nonempty when linear fell back to constant

  double value_at(const std::vector<int>& coord) const {
    switch (mode) {
      case MeanMode::none:
        return 0.0;
      case MeanMode::constant:
        return coef[0];
      case MeanMode::linear: {
        double v = coef[0];
        for (std::size_t j = 0; j < coord.size(); ++j)
          v += coef[1 + j] * static_cast<double>(coord[j]);
        return v;
      }
    }
    return 0.0;
  }
};

inline MeanModel fit_mean(std::span<const double> data,
                          const ObservationMask& mask, MeanMode mode) {
  const std::size_t n = mask.n();
  if (data.size() != n)
    throw std::invalid_argument("fit_mean: data size mismatch");
  if (mode == MeanMode::none) return {MeanMode::none, {}, ""};
  if (n == 0) throw std::invalid_argument("fit_mean: no observed cells");

  double mu = 0.0;
  for (double v : data) mu += v;
  mu /= static_cast<double>(n);
  if (mode == MeanMode::constant) return {MeanMode::constant, {mu}, ""};

  const int d = mask.spec.d();
  Eigen::MatrixXd X(n, d + 1);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> c = coord_at(mask.spec.z, mask.observed_cells[i]);
    X(i, 0) = 1.0;
    for (int j = 0; j < d; ++j) X(i, 1 + j) = static_cast<double>(c[j]);
    y(i) = data[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < d + 1)
    return {MeanMode::constant, {mu},
            "linear mean design is rank-deficient; using a constant mean"};
  Eigen::VectorXd b = qr.solve(y);
  return {MeanMode::linear, std::vector<double>(b.data(), b.data() + d + 1),
          ""};
}

inline std::vector<double> remove_mean(std::span<const double> data,
                                       const ObservationMask& mask,
                                       const MeanModel& model) {
  if (data.size() != mask.n())
    throw std::invalid_argument("remove_mean: data size mismatch");
  std::vector<double> out(data.begin(), data.end());
  if (model.mode == MeanMode::none) return out;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] -= model.value_at(coord_at(mask.spec.z, mask.observed_cells[i]));
  return out;
}

inline void add_mean(GridField& field, const MeanModel& model) {
  if (model.mode == MeanMode::none) return;
  std::vector<int> c(field.spec.d(), 0);
  std::size_t i = 0;
  do {
    field.values[i++] += model.value_at(c);
  } while (next_coord(field.spec.z, c));
}

}  // namespace pespec
