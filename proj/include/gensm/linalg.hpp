#pragma once

#include <complex>
#include <span>

#include <Eigen/Dense>

namespace gensm {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// (M + M^H) / 2
CMatrix hermitian_part(const CMatrix& m);

/// Natural log-determinant of a Hermitian positive definite matrix, via a
/// Cholesky factorization of its Hermitian part. Throws NumericalError if the
/// factorization fails.
double log_det_hpd(const CMatrix& m);

/// Lower Cholesky factor of the Hermitian part of `m`; throws NumericalError
/// when `m` is not positive definite.
CMatrix cholesky_lower(const CMatrix& m);

/// log(sum(exp(v))) with max shift. Empty input gives -inf.
double log_sum_exp(std::span<const double> values);

/// Wraps an angle into [-pi, pi).
double wrap_angle(double angle);

}  // namespace gensm
