#pragma once

#include <stdexcept>
#include <string>

namespace pespec {

// Malformed input files, unreadable paths, bad grid headers.
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical breakdown: non-finite values mid-computation, FFT residues above
// tolerance, singular small systems that jitter could not rescue.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A covariance or spectrum failed a positive-definiteness check.
class not_positive_definite_error : public numerical_error {
 public:
  explicit not_positive_definite_error(const std::string& msg)
      : numerical_error(msg) {}
};

// Circulant embedding of a covariance could not be made nonnegative within
// tolerance even after enlarging the torus.
class embedding_error : public numerical_error {
 public:
  explicit embedding_error(const std::string& msg) : numerical_error(msg) {}
};

// An iterative solve ran out of iterations. Carries where it stopped.
class convergence_error : public numerical_error {
 public:
  convergence_error(const std::string& msg, int iterations,
                    double relative_residual)
      : numerical_error(msg),
        iterations(iterations),
        relative_residual(relative_residual) {}

  int iterations;
  double relative_residual;
};

}  // namespace pespec
