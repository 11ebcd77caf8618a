#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mixent/gaussian.hpp"
#include "mixent/special.hpp"
#include "test_helpers.hpp"

using namespace mixent;
using mixent::testing::random_component;
using mixent::testing::random_spd;

namespace {

Matrix m2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

// Direct bivariate density with an explicit 2x2 inverse.
double bivariate_log_pdf_oracle(const Vector& x, const Vector& mu, const Matrix& s) {
  const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
  Matrix inv(2, 2);
  inv << s(1, 1) / det, -s(0, 1) / det, -s(1, 0) / det, s(0, 0) / det;
  const Vector d = x - mu;
  return -std::log(2.0 * M_PI) - 0.5 * std::log(det) - 0.5 * d.dot(inv * d);
}

}  // namespace

TEST(LogPdf, StandardNormalAtZero) {
  GaussianComponent g(Vector::Zero(1), Matrix::Identity(1, 1));
  EXPECT_NEAR(log_pdf(Vector::Zero(1), g), -0.9189385332046727, 1e-12);
}

TEST(LogPdf, AtMeanIsNormalizer) {
  std::mt19937_64 rng(7);
  for (int p : {1, 2, 3, 6}) {
    auto g = random_component(p, rng);
    EXPECT_NEAR(log_pdf(g.mean(), g), -0.5 * p * kLog2Pi - 0.5 * g.cov().log_det(), 1e-12);
  }
}

TEST(LogPdf, BivariateIdentityMatchesExplicitInverse) {
  GaussianComponent g(Vector::Zero(2), Matrix::Identity(2, 2));
  Vector x(2);
  x << 1, 1;
  const double oracle = bivariate_log_pdf_oracle(x, Vector::Zero(2), Matrix::Identity(2, 2));
  EXPECT_NEAR(oracle, -2.8378771, 1e-7);
  EXPECT_NEAR(log_pdf(x, g), oracle, 1e-12);
}

TEST(LogPdf, RandomBivariateMatchesExplicitInverse) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    auto g = random_component(2, rng);
    Vector x = mixent::testing::random_vector(2, rng, 2.0);
    EXPECT_NEAR(log_pdf(x, g), bivariate_log_pdf_oracle(x, g.mean(), g.cov().values()), 1e-10);
    DataMatrix row = x.transpose();
    EXPECT_NEAR(g.log_pdf_rows(row)(0), log_pdf(x, g), 1e-12);
  }
}

TEST(LogPdf, DimensionMismatchThrows) {
  GaussianComponent g(Vector::Zero(2), Matrix::Identity(2, 2));
  EXPECT_THROW(log_pdf(Vector::Zero(3), g), UsageError);
}

TEST(LogPdf, DensityIntegratesToOneIn1D) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    auto g = random_component(1, rng);
    const double mu = g.mean()(0);
    const double sd = std::sqrt(g.cov().values()(0, 0));
    const double mass = integrate_gk(
        [&](double x) {
          Vector v(1);
          v << x;
          return std::exp(log_pdf(v, g));
        },
        mu - 40 * sd, mu + 40 * sd, 1e-12);
    EXPECT_NEAR(mass, 1.0, 1e-6);
  }
}

TEST(GaussianEntropy, ClosedFormValues) {
  EXPECT_NEAR(gaussian_entropy(GaussianComponent(Vector::Zero(1), Matrix::Identity(1, 1))), 1.4189385, 1e-7);
  EXPECT_NEAR(gaussian_entropy(GaussianComponent(Vector::Zero(3), Matrix::Identity(3, 3))), 4.2568156, 1e-7);
  const GaussianComponent g(Vector::Zero(2), m2(1.0, 0.8, 0.8, 2.0));
  EXPECT_NEAR(g.cov().log_det(), std::log(1.36), 1e-13);
  EXPECT_NEAR(gaussian_entropy(g), 0.5 * std::log(std::pow(2 * M_PI * M_E, 2) * 1.36), 1e-12);
  EXPECT_NEAR(gaussian_entropy(g), 2.9916193, 5e-7);
}

TEST(GaussianEntropy, MatchesMonteCarloLogDensity) {
  std::mt19937_64 rng(5);
  for (int p : {1, 2, 4}) {
    auto g = random_component(p, rng);
    const DataMatrix x = mixent::testing::gaussian_sample(g.mean(), g.cov().values(), 100000, rng);
    const Vector lp = g.log_pdf_rows(x);
    const double mean = lp.mean();
    const double se = std::sqrt((lp.array() - mean).square().sum() / (lp.size() - 1) / lp.size());
    EXPECT_NEAR(-mean, gaussian_entropy(g), 3 * se) << "p=" << p;
  }
}

TEST(GaussianKl, ClosedFormValues) {
  GaussianComponent a(Vector::Zero(1), Matrix::Identity(1, 1));
  GaussianComponent b(Vector::Ones(1), Matrix::Identity(1, 1));
  GaussianComponent c(Vector::Zero(1), Matrix::Constant(1, 1, 2.0));
  EXPECT_DOUBLE_EQ(gaussian_kl(a, a), 0.0);
  EXPECT_NEAR(gaussian_kl(a, b), 0.5, 1e-14);
  EXPECT_NEAR(gaussian_kl(c, a), 0.5 * (2.0 - 1.0 - std::log(2.0)), 1e-14);
  EXPECT_NEAR(gaussian_kl(c, a), 0.1534264, 1e-7);
}

TEST(GaussianKl, NonNegativeAndZeroOnlyForEqualParameters) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 200; ++t) {
    const int p = 1 + t % 4;
    auto a = random_component(p, rng);
    auto b = random_component(p, rng);
    EXPECT_GE(gaussian_kl(a, b), 0.0);
    EXPECT_GT(gaussian_kl(a, b), 1e-10);
    EXPECT_LT(gaussian_kl(a, a), 1e-10);
  }
}

TEST(GaussianKl, DimensionMismatchThrows) {
  EXPECT_THROW(gaussian_kl(GaussianComponent(Vector::Zero(1), Matrix::Identity(1, 1)),
                           GaussianComponent(Vector::Zero(2), Matrix::Identity(2, 2))),
               UsageError);
}

TEST(EigenSym, KnownMatrices) {
  auto e = eigen_sym(Matrix::Identity(2, 2));
  EXPECT_NEAR(e.eigenvalues(0), 1.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues(1), 1.0, 1e-14);

  e = eigen_sym(m2(4, 0, 0, 1));
  EXPECT_NEAR(e.eigenvalues(0), 4.0, 1e-14);
  EXPECT_NEAR(e.eigenvalues(1), 1.0, 1e-14);
  EXPECT_NEAR(std::abs(e.eigenvectors(0, 0)), 1.0, 1e-14);
  EXPECT_NEAR(std::abs(e.eigenvectors(1, 1)), 1.0, 1e-14);

  // roots of l^2 - 3 l + 1.36
  e = eigen_sym(m2(1.0, 0.8, 0.8, 2.0));
  EXPECT_NEAR(e.eigenvalues(0), (3.0 + std::sqrt(9.0 - 4 * 1.36)) / 2, 1e-12);
  EXPECT_NEAR(e.eigenvalues(1), (3.0 - std::sqrt(9.0 - 4 * 1.36)) / 2, 1e-12);
  EXPECT_NEAR(e.eigenvalues(0), 2.4433, 1e-4);
  EXPECT_NEAR(e.eigenvalues(1), 0.5567, 1e-4);
}

TEST(EigenSym, ReconstructsRandomSpd) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 100; ++t) {
    const int p = 1 + t % 8;
    const Matrix s = random_spd(p, rng);
    const auto e = eigen_sym(s);
    EXPECT_LT((e.reconstruct() - s).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((e.eigenvectors.transpose() * e.eigenvectors - Matrix::Identity(p, p)).cwiseAbs().maxCoeff(), 1e-10);
    for (int j = 1; j < p; ++j) EXPECT_GE(e.eigenvalues(j - 1), e.eigenvalues(j));
  }
}

TEST(CovarianceMatrix, CachedLogDetMatchesCholeskyDiagonal) {
  std::mt19937_64 rng(17);
  const CovarianceMatrix c(random_spd(5, rng));
  EXPECT_EQ(c.log_det(), 2.0 * c.chol().diagonal().array().log().sum());
  EXPECT_NEAR(c.log_det(), std::log(c.values().determinant()), 1e-10);
  EXPECT_EQ(c.ridge(), 0.0);
}

TEST(CovarianceMatrix, RejectsAsymmetric) {
  EXPECT_THROW(CovarianceMatrix(m2(1, 0.5, 0.4, 1)), UsageError);
}

TEST(CovarianceMatrix, SingularGetsRidge) {
  const CovarianceMatrix c(m2(1, 1, 1, 1));
  EXPECT_GT(c.ridge(), 0.0);
  EXPECT_LE(c.ridge(), 1e-5);
  EXPECT_TRUE(std::isfinite(c.log_det()));
}

TEST(CovarianceMatrix, ZeroMatrixFails) {
  EXPECT_THROW(CovarianceMatrix(Matrix::Zero(2, 2)), NumericalError);
  EXPECT_THROW(CovarianceMatrix(m2(-1, 0, 0, -1)), NumericalError);
}
