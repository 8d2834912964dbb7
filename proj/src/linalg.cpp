#include "gensm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "gensm/errors.hpp"

namespace gensm {

CMatrix hermitian_part(const CMatrix& m) { return (m + m.adjoint()) * 0.5; }

CMatrix cholesky_lower(const CMatrix& m) {
  Eigen::LLT<CMatrix> llt(hermitian_part(m));
  if (llt.info() != Eigen::Success) {
    throw NumericalError("matrix is not Hermitian positive definite");
  }
  return llt.matrixL();
}

double log_det_hpd(const CMatrix& m) {
  Eigen::LLT<CMatrix> llt(hermitian_part(m));
  if (llt.info() != Eigen::Success) {
    throw NumericalError("log-determinant of a matrix that is not positive definite");
  }
  const auto& lower = llt.matrixLLT();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    const double d = lower(i, i).real();
    if (!(d > 0.0)) throw NumericalError("non-positive Cholesky pivot");
    acc += std::log(d);
  }
  return 2.0 * acc;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double top = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - top);
  return top + std::log(acc);
}

double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(angle + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= std::numbers::pi;
  // fmod can land exactly on +pi after the shift back
  if (w >= std::numbers::pi) w -= two_pi;
  return w;
}

}  // namespace gensm
