#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mixent/error.hpp"
#include "mixent/gaussian.hpp"
#include "mixent/mixture.hpp"
#include "mixent/random.hpp"

namespace mixent {

enum class EntropyMethod { GMM, MC, MLEGaussian, UT, VAR, SOTE };

inline std::string_view method_name(EntropyMethod m) {
  switch (m) {
    case EntropyMethod::GMM: return "gmm";
    case EntropyMethod::MC: return "mc";
    case EntropyMethod::MLEGaussian: return "mle";
    case EntropyMethod::UT: return "ut";
    case EntropyMethod::VAR: return "var";
    case EntropyMethod::SOTE: return "sote";
  }
  return "unknown";
}

inline EntropyMethod parse_method(std::string_view name) {
  for (auto m : {EntropyMethod::GMM, EntropyMethod::MC, EntropyMethod::MLEGaussian, EntropyMethod::UT,
                 EntropyMethod::VAR, EntropyMethod::SOTE}) {
    if (method_name(m) == name) return m;
  }
  throw UsageError("unknown entropy method '" + std::string(name) + "'");
}

struct ModelSummary {
  int k = 0;
  CovarianceFamily family = CovarianceFamily::FullVarying;
  int n_obs = 0;

  static ModelSummary of(const MixtureModel& m) { return {m.k(), m.family(), m.n_obs()}; }
};

/// An entropy value in nats and where it came from.
struct EntropyEstimate {
  double value = 0.0;
  EntropyMethod method = EntropyMethod::GMM;
  std::optional<ModelSummary> model;
  std::optional<double> se;  // Monte Carlo only
  bool bounded = false;      // fitted on log-transformed coordinates
  double ridge = 0.0;        // diagonal ridge needed anywhere in the fit
};

/// Per-coordinate lower bounds. Bounded coordinates are mapped to log(y - l)
/// before fitting.
class BoundedTransform {
 public:
  BoundedTransform() = default;
  explicit BoundedTransform(std::vector<std::optional<double>> lower) : lower_(std::move(lower)) {}

  static BoundedTransform identity(int p) { return BoundedTransform(std::vector<std::optional<double>>(p)); }
  static BoundedTransform all_bounded(int p, double lower = 0.0) {
    return BoundedTransform(std::vector<std::optional<double>>(p, lower));
  }
  static BoundedTransform columns(int p, const std::vector<int>& cols, double lower = 0.0) {
    std::vector<std::optional<double>> lb(p);
    for (int c : cols) {
      if (c < 0 || c >= p) throw UsageError("bounded column " + std::to_string(c) + " out of range");
      lb[static_cast<std::size_t>(c)] = lower;
    }
    return BoundedTransform(std::move(lb));
  }

  int dim() const { return static_cast<int>(lower_.size()); }
  bool any() const {
    for (const auto& l : lower_)
      if (l) return true;
    return false;
  }
  const std::optional<double>& lower(int j) const { return lower_.at(static_cast<std::size_t>(j)); }

  /// Restriction to a subset of coordinates, in the given order.
  BoundedTransform select(const std::vector<int>& cols) const {
    std::vector<std::optional<double>> lb;
    for (int c : cols) lb.push_back(lower(c));
    return BoundedTransform(std::move(lb));
  }

  /// Transformed data and the per-row log-Jacobian sum_j log(y_ij - l_j).
  std::pair<DataMatrix, Vector> apply(const DataMatrix& data) const {
    if (data.cols() != dim()) {
      throw UsageError("transform has " + std::to_string(dim()) + " coordinates, data has " +
                       std::to_string(data.cols()));
    }
    DataMatrix out = data;
    Vector jac = Vector::Zero(data.rows());
    for (int j = 0; j < dim(); ++j) {
      if (!lower_[static_cast<std::size_t>(j)]) continue;
      const double l = *lower_[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < data.rows(); ++i) {
        const double shifted = data(i, j) - l;
        if (!(shifted > 0.0)) {
          throw DataError("column " + std::to_string(j) + " has value " + std::to_string(data(i, j)) + " at row " +
                          std::to_string(i) + " not above its lower bound " + std::to_string(l));
        }
        out(i, j) = std::log(shifted);
        jac(i) += out(i, j);
      }
    }
    return {std::move(out), std::move(jac)};
  }

 private:
  std::vector<std::optional<double>> lower_;
};

namespace detail {

inline Vector checked_log_density(const DataMatrix& data, const MixtureModel& model) {
  if (data.cols() != model.dim()) {
    throw UsageError("data has " + std::to_string(data.cols()) + " columns, model dimension is " +
                     std::to_string(model.dim()));
  }
  if (data.rows() == 0) throw UsageError("entropy of an empty sample");
  Vector lf = model.log_density_rows(data);
  for (Eigen::Index i = 0; i < lf.size(); ++i) {
    if (!std::isfinite(lf(i))) {
      throw NumericalError("mixture log-density is not finite at row " + std::to_string(i));
    }
  }
  return lf;
}

}  // namespace detail

/// Mixture-based estimate: -(1/n) sum_i log f(y_i) with f the fitted mixture.
/// The sample itself is the only integration set.
inline EntropyEstimate entropy_gmm(const DataMatrix& data, const MixtureModel& model) {
  const Vector lf = detail::checked_log_density(data, model);
  EntropyEstimate e;
  e.value = -lf.mean();
  e.method = EntropyMethod::GMM;
  e.model = ModelSummary::of(model);
  e.ridge = model.diagnostics().max_ridge;
  return e;
}

/// The same estimate assembled per component: H = -sum_k pi_k A_k with
/// A_k = sum_i w_k(y_i) log f(y_i) and w_k(y_i) = tau_k(y_i) / (n pi_k).
///
/// pi_k here is the responsibility mass (1/n) sum_i tau_k(y_i), which equals the
/// model weight at an EM fixed point. With it every w_k sums to one and the
/// identity with entropy_gmm holds for any model, fitted or not.
struct WeightedForm {
  EntropyEstimate estimate;
  Vector a_hat;           // A_k
  Vector mass_weights;    // (1/n) sum_i tau_k(y_i)
  Vector weight_sums;     // sum_i w_k(y_i)
};

inline WeightedForm entropy_weighted_form(const DataMatrix& data, const MixtureModel& model) {
  const Vector lf = detail::checked_log_density(data, model);
  const double n = static_cast<double>(data.rows());
  Matrix tau = model.log_joint_rows(data);
  tau.colwise() -= lf;
  tau = tau.array().exp().matrix();

  WeightedForm out;
  const int kk = model.k();
  out.a_hat.resize(kk);
  out.mass_weights.resize(kk);
  out.weight_sums.resize(kk);
  double h = 0.0;
  for (int k = 0; k < kk; ++k) {
    const double pi_k = tau.col(k).sum() / n;
    out.mass_weights(k) = pi_k;
    if (!(pi_k > 0.0)) {
      out.a_hat(k) = 0.0;
      out.weight_sums(k) = 0.0;
      continue;
    }
    const Vector w = tau.col(k) / (n * pi_k);
    out.weight_sums(k) = w.sum();
    out.a_hat(k) = w.dot(lf);
    h -= pi_k * out.a_hat(k);
  }
  out.estimate.value = h;
  out.estimate.method = EntropyMethod::GMM;
  out.estimate.model = ModelSummary::of(model);
  out.estimate.ridge = model.diagnostics().max_ridge;
  return out;
}

/// Monte Carlo entropy of a mixture from s iid draws, with standard error.
inline EntropyEstimate entropy_mc(const MixtureModel& model, Eigen::Index s, std::uint64_t seed) {
  if (s < 100) throw UsageError("Monte Carlo entropy needs at least 100 samples");
  Rng rng = make_rng(seed);
  const DataMatrix draws = sample_mixture(model, s, rng);
  const Vector lf = model.log_density_rows(draws);
  const double mean = lf.mean();
  const double var = (lf.array() - mean).square().sum() / static_cast<double>(s - 1);
  EntropyEstimate e;
  e.value = -mean;
  e.method = EntropyMethod::MC;
  e.model = ModelSummary::of(model);
  e.se = std::sqrt(var / static_cast<double>(s));
  return e;
}

/// Gaussian plug-in: MLE (1/n) covariance into the closed-form Gaussian entropy.
inline EntropyEstimate entropy_mle_gaussian(const DataMatrix& data) {
  const Eigen::Index n = data.rows();
  const Eigen::Index p = data.cols();
  if (p < 1) throw UsageError("data has no columns");
  if (n <= p) {
    throw UsageError("MLE covariance needs n > p (n=" + std::to_string(n) + ", p=" + std::to_string(p) + ")");
  }
  detail::check_finite_rows(data);
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const DataMatrix centered = data.rowwise() - mean;
  Matrix cov = centered.transpose() * centered / static_cast<double>(n);
  cov = 0.5 * (cov + cov.transpose());
  const GaussianComponent g(mean.transpose(), CovarianceMatrix(cov));
  EntropyEstimate e;
  e.value = gaussian_entropy(g);
  e.method = EntropyMethod::MLEGaussian;
  e.model = ModelSummary{1, CovarianceFamily::FullVarying, static_cast<int>(n)};
  e.ridge = g.cov().ridge();
  return e;
}

/// Unscented-transform approximation: 2p sigma points mu_k +- sqrt(p lambda_j) u_j
/// per component, averaged log mixture density.
inline EntropyEstimate entropy_ut(const MixtureModel& model) {
  const int p = model.dim();
  double h = 0.0;
  for (int k = 0; k < model.k(); ++k) {
    const auto& c = model.component(k);
    const EigenDecomposition ed = eigen_sym(c.cov());
    DataMatrix pts(2 * p, p);
    for (int j = 0; j < p; ++j) {
      const Vector step = std::sqrt(p * ed.eigenvalues(j)) * ed.eigenvectors.col(j);
      pts.row(j) = (c.mean() + step).transpose();
      pts.row(p + j) = (c.mean() - step).transpose();
    }
    h -= model.weights()(k) * model.log_density_rows(pts).sum() / (2.0 * p);
  }
  EntropyEstimate e;
  e.value = h;
  e.method = EntropyMethod::UT;
  e.model = ModelSummary::of(model);
  return e;
}

/// Variational approximation
///   H = -sum_k pi_k log sum_l pi_l exp(-KL(N_k || N_l)) + sum_k pi_k H(N_k),
/// which is exact for K = 1.
inline EntropyEstimate entropy_var(const MixtureModel& model) {
  const int kk = model.k();
  const Vector& pi = model.weights();
  double h = 0.0;
  for (int k = 0; k < kk; ++k) {
    Vector terms(kk);
    for (int l = 0; l < kk; ++l) {
      terms(l) = std::log(pi(l)) - gaussian_kl(model.component(k), model.component(l));
    }
    const double mx = terms.maxCoeff();
    const double lse = mx + std::log((terms.array() - mx).exp().sum());
    h += pi(k) * (gaussian_entropy(model.component(k)) - lse);
  }
  EntropyEstimate e;
  e.value = h;
  e.method = EntropyMethod::VAR;
  e.model = ModelSummary::of(model);
  return e;
}

/// Hessian of log f at x for a Gaussian mixture f:
///   sum_k tau_k (g_k g_k^T - Sigma_k^-1) - (sum_k tau_k g_k)(sum_k tau_k g_k)^T,
/// with g_k = Sigma_k^-1 (mu_k - x) and tau_k the responsibilities at x.
inline Matrix log_density_hessian(const MixtureModel& model, const Vector& x) {
  const int p = model.dim();
  const int kk = model.k();
  if (x.size() != p) throw UsageError("point dimension does not match model");
  Vector lj(kk);
  for (int k = 0; k < kk; ++k) lj(k) = std::log(model.weights()(k)) + log_pdf(x, model.component(k));
  const double mx = lj.maxCoeff();
  const Vector tau = (lj.array() - mx).exp().matrix() / (lj.array() - mx).exp().sum();

  Matrix second = Matrix::Zero(p, p);
  Vector grad = Vector::Zero(p);
  for (int k = 0; k < kk; ++k) {
    const auto& c = model.component(k);
    const Vector g = c.cov().solve(c.mean() - x);
    grad += tau(k) * g;
    second += tau(k) * (g * g.transpose() - c.cov().inverse());
  }
  return second - grad * grad.transpose();
}

/// Second-order Taylor approximation around each component mean:
///   H0 = -sum_k pi_k log f(mu_k),  H = H0 - sum_k (pi_k / 2) <F(mu_k), Sigma_k>
/// with F the Hessian of log f.
inline EntropyEstimate entropy_sote(const MixtureModel& model) {
  double h0 = 0.0;
  double correction = 0.0;
  for (int k = 0; k < model.k(); ++k) {
    const auto& c = model.component(k);
    const double pi_k = model.weights()(k);
    h0 -= pi_k * model.log_density(c.mean());
    correction += 0.5 * pi_k * log_density_hessian(model, c.mean()).cwiseProduct(c.cov().values()).sum();
  }
  EntropyEstimate e;
  e.value = h0 - correction;
  e.method = EntropyMethod::SOTE;
  e.model = ModelSummary::of(model);
  return e;
}

/// Entropy of data with lower-bounded coordinates: fit on t = log(y - l) and add
/// back the mean log-Jacobian, H(Y) = H(T) + E[sum_j log(Y_j - l_j)].
inline EntropyEstimate entropy_bounded_gmm(const DataMatrix& data, const BoundedTransform& transform,
                                           const FitConfig& config) {
  auto [t, jac] = transform.apply(data);
  const MixtureModel model = select_model(t, config);
  EntropyEstimate e = entropy_gmm(t, model);
  e.value += jac.mean();
  e.bounded = transform.any();
  return e;
}

}  // namespace mixent
