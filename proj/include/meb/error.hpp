#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace meb {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Two objects indexed against different grids or residual dimensions.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A moment target outside the interval the residuals can reach.
class InfeasibleTarget : public Error {
 public:
  InfeasibleTarget(std::string what, std::size_t dimension, double target,
                   double lower, double upper)
      : Error(std::move(what)),
        dimension_(dimension),
        target_(target),
        lower_(lower),
        upper_(upper) {}

  std::size_t dimension() const noexcept { return dimension_; }
  double target() const noexcept { return target_; }
  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }

 private:
  std::size_t dimension_;
  double target_;
  double lower_;
  double upper_;
};

class ConvergenceFailure : public Error {
 public:
  ConvergenceFailure(std::string what, std::vector<double> last_iterate,
                     int iterations)
      : Error(std::move(what)),
        last_iterate_(std::move(last_iterate)),
        iterations_(iterations) {}

  const std::vector<double>& last_iterate() const noexcept {
    return last_iterate_;
  }
  int iterations() const noexcept { return iterations_; }

 private:
  std::vector<double> last_iterate_;
  int iterations_;
};

class UnsupportedDimension : public Error {
 public:
  using Error::Error;
};

/// The sampler could not find a step size that accepts any proposal.
class TuningFailure : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace meb
