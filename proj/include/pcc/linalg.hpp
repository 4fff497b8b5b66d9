#ifndef PCC_LINALG_HPP
#define PCC_LINALG_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

#include "pcc/errors.hpp"

namespace pcc {

/// Cholesky factor of A + jitter * mean(diag A) * I.
struct JitteredCholesky {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;   // relative level that succeeded

  Eigen::Index size() const { return llt.matrixLLT().rows(); }

  double log_determinant() const {
    const auto& l = llt.matrixLLT();
    double s = 0.0;
    for (Eigen::Index k = 0; k < l.rows(); ++k) s += std::log(l(k, k));
    return 2.0 * s;
  }

  /// xᵀ A⁻¹ x for each column of x, summed.
  double quadratic_form(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd z = llt.matrixL().solve(x);
    return z.squaredNorm();
  }

  Eigen::MatrixXd lower() const { return llt.matrixL(); }
};

/// Factorizes a symmetric PSD matrix, first as is, then with relative jitter
/// 1e-12, 1e-11, ..., max_jitter. Throws NumericalError past max_jitter.
/// A nonzero `reference_scale` replaces mean(diag A) as the jitter unit, for
/// matrices whose own diagonal may vanish (e.g. conditional covariances).
inline JitteredCholesky jittered_cholesky(const Eigen::MatrixXd& a, double max_jitter = 1e-8,
                                          double reference_scale = 0.0) {
  JitteredCholesky out;
  if (a.rows() != a.cols()) throw std::invalid_argument("jittered_cholesky: matrix is not square");
  if (!a.allFinite()) throw NumericalError("jittered_cholesky: non-finite entries", 0.0);
  const double scale = reference_scale > 0.0 ? reference_scale : (a.rows() > 0 ? a.diagonal().mean() : 1.0);
  out.llt.compute(a);
  if (out.llt.info() == Eigen::Success) return out;
  double eps = 1e-12;
  double tried = 0.0;
  while (eps <= max_jitter * (1.0 + 1e-9)) {
    Eigen::MatrixXd b = a;
    b.diagonal().array() += eps * scale;
    out.llt.compute(b);
    tried = eps;
    if (out.llt.info() == Eigen::Success) {
      out.jitter = eps;
      return out;
    }
    eps *= 10.0;
  }
  throw NumericalError("Cholesky failed with relative jitter up to " + std::to_string(tried), tried);
}

/// Sum over the columns of x of the mean-zero Gaussian log density with the factored covariance.
inline double gaussian_log_density(const JitteredCholesky& chol, const Eigen::MatrixXd& x) {
  const double n = static_cast<double>(x.rows());
  const double cols = static_cast<double>(x.cols());
  return -0.5 * (cols * (n * std::log(2.0 * std::numbers::pi) + chol.log_determinant()) + chol.quadratic_form(x));
}

}  // namespace pcc

#endif  // PCC_LINALG_HPP
