#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gensm {

/// Inconsistent dimensions or an invalid system configuration.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A matrix that should be Hermitian positive definite failed to factorize,
/// or a computed quantity is not finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The reduced-complexity gradient needs C_m^H A^H H^H H A C_m invertible for
/// every antenna group combination; thrown for the first one that is not.
class RankDeficiencyError : public NumericalError {
 public:
  RankDeficiencyError(std::size_t agc_index, const std::string& what)
      : NumericalError(what), agc_index_(agc_index) {}

  std::size_t agc_index() const noexcept { return agc_index_; }

 private:
  std::size_t agc_index_;
};

}  // namespace gensm
