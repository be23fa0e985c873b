#ifndef SWOPT_ERRORS_HPP
#define SWOPT_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace swopt {

// Base of every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid trial geometry, weights, priors or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A scalar outside the domain of a model function (e.g. mu not in (0, 1)).
class DomainError : public Error {
 public:
  using Error::Error;
};

// The working covariance is not positive definite.
class ModelError : public Error {
 public:
  using Error::Error;
};

// The information matrix is singular or too ill-conditioned to invert:
// the design cannot separate delta from the period effects.
class UnidentifiableDesign : public Error {
 public:
  using Error::Error;
};

// Raised while averaging the criterion over a sample; carries the draw
// that failed.
class DrawError : public Error {
 public:
  DrawError(std::size_t draw_index, const std::string& what)
      : Error("draw " + std::to_string(draw_index) + ": " + what),
        draw_index_(draw_index) {}

  std::size_t draw_index() const noexcept { return draw_index_; }

 private:
  std::size_t draw_index_;
};

// The lattice oracle was asked for more points than it is allowed to scan.
class OracleGuardError : public Error {
 public:
  using Error::Error;
};

// Reading or writing a file failed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace swopt

#endif  // SWOPT_ERRORS_HPP
