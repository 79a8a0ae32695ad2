#pragma once

// Thin FFTW wrapper. Conventions used throughout the library:
//   forward(v)[k]  = sum_x v(x) exp(-2 pi i k.x / z)   (unnormalized)
//   backward(v)[x] = sum_k v(k) exp(+2 pi i k.x / z)
// Plans use FFTW_ESTIMATE only, so planning never depends on runtime timing
// and results are reproducible run to run.

#include <complex>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

#include "pespec/errors.hpp"
#include "pespec/lattice.hpp"

namespace pespec {

namespace detail {
// FFTW plan creation/destruction is not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

class Fft {
 public:
  explicit Fft(std::vector<int> dims)
      : dims_(std::move(dims)), m_(cell_count(dims_)) {
    buf_ = fftw_alloc_complex(m_);
    if (!buf_) throw numerical_error("fft: allocation failed");
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fwd_ = fftw_plan_dft(static_cast<int>(dims_.size()), dims_.data(), buf_,
                         buf_, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft(static_cast<int>(dims_.size()), dims_.data(), buf_,
                         buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
    if (!fwd_ || !bwd_) throw numerical_error("fft: plan creation failed");
  }

  ~Fft() {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    if (fwd_) fftw_destroy_plan(fwd_);
    if (bwd_) fftw_destroy_plan(bwd_);
    fftw_free(buf_);
  }

  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  std::size_t size() const { return m_; }
  const std::vector<int>& dims() const { return dims_; }

  void forward(std::span<const std::complex<double>> in,
               std::span<std::complex<double>> out) {
    execute(fwd_, in, out);
  }

  void backward(std::span<const std::complex<double>> in,
                std::span<std::complex<double>> out) {
    execute(bwd_, in, out);
  }

 private:
  void execute(fftw_plan plan, std::span<const std::complex<double>> in,
               std::span<std::complex<double>> out) {
    if (in.size() != m_ || out.size() != m_)
      throw std::invalid_argument("fft: buffer size mismatch");
    // std::complex<double> is guaranteed layout-compatible with double[2]
    std::memcpy(static_cast<void*>(buf_),
                static_cast<const void*>(in.data()),
                m_ * sizeof(fftw_complex));
    fftw_execute(plan);
    std::memcpy(static_cast<void*>(out.data()),
                static_cast<const void*>(buf_), m_ * sizeof(fftw_complex));
  }

  std::vector<int> dims_;
  std::size_t m_;
  fftw_complex* buf_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

// Per-thread plan cache. Instances are not shareable across threads, so each
// thread builds (once) and reuses its own.
inline Fft& fft_for(const std::vector<int>& dims) {
  thread_local std::map<std::vector<int>, std::unique_ptr<Fft>> cache;
  std::unique_ptr<Fft>& slot = cache[dims];
  if (!slot) slot = std::make_unique<Fft>(dims);
  return *slot;
}

inline std::vector<std::complex<double>> dft_forward(
    const std::vector<int>& dims, std::span<const std::complex<double>> v) {
  std::vector<std::complex<double>> out(v.size());
  fft_for(dims).forward(v, out);
  return out;
}

inline std::vector<std::complex<double>> dft_forward_real(
    const std::vector<int>& dims, std::span<const double> v) {
  std::vector<std::complex<double>> in(v.begin(), v.end());
  return dft_forward(dims, in);
}

inline std::vector<std::complex<double>> dft_backward(
    const std::vector<int>& dims, std::span<const std::complex<double>> v) {
  std::vector<std::complex<double>> out(v.size());
  fft_for(dims).backward(v, out);
  return out;
}

// Backward transform of a (supposedly) Hermitian grid: returns the real part
// and reports the largest stray imaginary component for the caller to check.
inline std::vector<double> dft_backward_real(
    const std::vector<int>& dims, std::span<const std::complex<double>> v,
    double* max_imag = nullptr) {
  std::vector<std::complex<double>> full = dft_backward(dims, v);
  std::vector<double> out(full.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    out[i] = full[i].real();
    worst = std::max(worst, std::abs(full[i].imag()));
  }
  if (max_imag) *max_imag = worst;
  return out;
}

}  // namespace pespec
