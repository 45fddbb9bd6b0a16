// Core numeric types, error classes and summation helpers shared by every module.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmfitz {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// +infinity is a first-class value for Fitzpatrick functions and functionals.
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Relative slack used when deciding whether a point lies in a closed domain.
inline constexpr double kDomainSlack = 1e-12;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition of an operation (bad dimensions, out-of-domain data, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// An iterative solve hit its iteration cap.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : Error(what + " (last residual " + std::to_string(last_residual) + ")"),
        last_residual_(last_residual) {}

  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

/// Pairwise (cascade) summation; result does not depend on thread scheduling.
double pairwise_sum(std::span<const double> values);

/// Sample mean and standard error of the mean.
struct MeanEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t count = 0;
};

MeanEstimate estimate_mean(std::span<const double> values);

/// splitmix64 mixing of (seed, stream) into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace mmfitz
