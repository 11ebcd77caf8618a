#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

#include "mixent/error.hpp"

namespace mixent {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Observations, one per row.
using DataMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2*pi)

/// Symmetric positive-definite matrix with its Cholesky factor and log-determinant cached.
///
/// If the plain factorization fails, a ridge of eps * mean(diag) is added to the
/// diagonal, starting at eps = 1e-8 and growing tenfold for up to three retries.
/// The ridge actually applied is kept in ridge().
class CovarianceMatrix {
 public:
  static constexpr double kSymmetryTol = 1e-12;
  static constexpr double kRidgeStart = 1e-8;
  static constexpr int kRidgeRetries = 3;

  CovarianceMatrix() = default;

  explicit CovarianceMatrix(const Matrix& values) {
    if (values.rows() != values.cols() || values.rows() == 0) {
      throw UsageError("covariance must be a non-empty square matrix, got " +
                       std::to_string(values.rows()) + "x" + std::to_string(values.cols()));
    }
    if (!values.allFinite()) throw NumericalError("covariance has non-finite entries");
    const double scale = values.cwiseAbs().maxCoeff();
    const double asym = (values - values.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTol * std::max(scale, 1.0)) {
      throw UsageError("covariance is not symmetric (max asymmetry " + std::to_string(asym) + ")");
    }
    values_ = 0.5 * (values + values.transpose());
    factorize();
  }

  static CovarianceMatrix identity(int p) { return CovarianceMatrix(Matrix::Identity(p, p)); }

  int dim() const { return static_cast<int>(values_.rows()); }
  /// The matrix actually factorized (includes any ridge).
  const Matrix& values() const { return values_; }
  /// Lower-triangular L with values() = L L^T.
  const Matrix& chol() const { return chol_; }
  double log_det() const { return log_det_; }
  double ridge() const { return ridge_; }

  /// Solves L z = x column-by-column in place.
  template <class Derived>
  void whiten_in_place(Eigen::MatrixBase<Derived>& x) const {
    chol_.triangularView<Eigen::Lower>().solveInPlace(x);
  }

  /// Sigma^{-1} b via two triangular solves.
  Matrix solve(const Matrix& b) const {
    Matrix z = chol_.triangularView<Eigen::Lower>().solve(b);
    return chol_.transpose().triangularView<Eigen::Upper>().solve(z);
  }

  Matrix inverse() const { return solve(Matrix::Identity(dim(), dim())); }

 private:
  void factorize() {
    const int p = dim();
    const double mean_diag = values_.diagonal().mean();
    Matrix trial = values_;
    double eps = kRidgeStart;
    for (int attempt = 0; attempt <= kRidgeRetries; ++attempt) {
      if (attempt > 0) {
        if (!(mean_diag > 0.0)) break;
        ridge_ = eps * mean_diag;
        trial = values_;
        trial.diagonal().array() += ridge_;
        eps *= 10.0;
      }
      Eigen::LLT<Matrix> llt(trial);
      if (llt.info() == Eigen::Success) {
        chol_ = llt.matrixL();
        values_ = trial;
        log_det_ = 2.0 * chol_.diagonal().array().log().sum();
        if (std::isfinite(log_det_)) return;
      }
    }
    throw NumericalError("covariance is not positive definite (p=" + std::to_string(p) +
                         ", mean diagonal " + std::to_string(mean_diag) + ") even after ridge");
  }

  Matrix values_;
  Matrix chol_;
  double log_det_ = 0.0;
  double ridge_ = 0.0;
};

/// One multivariate normal N(mean, cov).
class GaussianComponent {
 public:
  GaussianComponent() = default;
  GaussianComponent(Vector mean, CovarianceMatrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (mean_.size() != cov_.dim()) {
      throw UsageError("mean has dimension " + std::to_string(mean_.size()) + " but covariance has " +
                       std::to_string(cov_.dim()));
    }
    if (!mean_.allFinite()) throw NumericalError("mean has non-finite entries");
  }
  GaussianComponent(Vector mean, const Matrix& cov) : GaussianComponent(std::move(mean), CovarianceMatrix(cov)) {}

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const CovarianceMatrix& cov() const { return cov_; }

  /// log phi(x) for every row of data.
  Vector log_pdf_rows(const DataMatrix& data) const {
    if (data.cols() != dim()) {
      throw UsageError("data has " + std::to_string(data.cols()) + " columns, component dimension is " +
                       std::to_string(dim()));
    }
    return log_pdf_cols(Eigen::Map<const Matrix>(data.data(), data.cols(), data.rows()));
  }

  /// log phi(x) for every column of a p x n matrix (a row-major n x p block viewed in place).
  Vector log_pdf_cols(const Eigen::Ref<const Matrix>& xt) const {
    Matrix z = xt.colwise() - mean_;
    cov_.whiten_in_place(z);
    const double norm = -0.5 * (dim() * kLog2Pi + cov_.log_det());
    return (norm - 0.5 * z.colwise().squaredNorm().array()).matrix().transpose();
  }

 private:
  Vector mean_;
  CovarianceMatrix cov_;
};

/// Log-density of N(mean, cov) at x. Uses triangular solves only.
inline double log_pdf(const Vector& x, const GaussianComponent& comp) {
  if (x.size() != comp.dim()) {
    throw UsageError("point has dimension " + std::to_string(x.size()) + ", component has " +
                     std::to_string(comp.dim()));
  }
  Vector z = x - comp.mean();
  comp.cov().whiten_in_place(z);
  return -0.5 * (comp.dim() * kLog2Pi + comp.cov().log_det() + z.squaredNorm());
}

/// 0.5 * log((2 pi e)^p |Sigma|), in nats.
inline double gaussian_entropy(const GaussianComponent& comp) {
  return 0.5 * (comp.dim() * (kLog2Pi + 1.0) + comp.cov().log_det());
}

/// KL(a || b) between two normals of equal dimension.
inline double gaussian_kl(const GaussianComponent& a, const GaussianComponent& b) {
  if (a.dim() != b.dim()) {
    throw UsageError("KL between components of dimension " + std::to_string(a.dim()) + " and " +
                     std::to_string(b.dim()));
  }
  const int p = a.dim();
  // tr(Sb^-1 Sa) = ||Lb^-1 La||_F^2
  Matrix m = b.cov().chol().triangularView<Eigen::Lower>().solve(a.cov().chol());
  Vector d = b.mean() - a.mean();
  b.cov().whiten_in_place(d);
  const double kl = 0.5 * (m.squaredNorm() + d.squaredNorm() - p + b.cov().log_det() - a.cov().log_det());
  return std::max(kl, 0.0);
}

/// Eigenvalues in descending order with matching eigenvector columns.
struct EigenDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  Matrix reconstruct() const { return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose(); }
};

inline EigenDecomposition eigen_sym(const Matrix& m) {
  if (m.rows() != m.cols()) throw UsageError("eigen_sym needs a square matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigen-solver did not converge");
  const int p = static_cast<int>(m.rows());
  EigenDecomposition out{Vector(p), Matrix(p, p)};
  // Eigen returns ascending order.
  for (int j = 0; j < p; ++j) {
    out.eigenvalues(j) = std::max(solver.eigenvalues()(p - 1 - j), 0.0);
    out.eigenvectors.col(j) = solver.eigenvectors().col(p - 1 - j);
  }
  return out;
}

inline EigenDecomposition eigen_sym(const CovarianceMatrix& m) { return eigen_sym(m.values()); }

}  // namespace mixent
