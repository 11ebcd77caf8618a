#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mixent/error.hpp"
#include "mixent/gaussian.hpp"
#include "mixent/random.hpp"

namespace mixent {

/// Structural constraint on the component covariances.
enum class CovarianceFamily {
  SphericalEqual,    // lambda I, shared
  SphericalVarying,  // lambda_k I
  DiagonalVarying,   // diag_k
  FullEqual,         // one shared full Sigma
  FullVarying,       // Sigma_k
};

inline constexpr std::array<CovarianceFamily, 5> kAllFamilies{
    CovarianceFamily::SphericalEqual, CovarianceFamily::SphericalVarying, CovarianceFamily::DiagonalVarying,
    CovarianceFamily::FullEqual, CovarianceFamily::FullVarying};

inline std::string_view family_name(CovarianceFamily f) {
  switch (f) {
    case CovarianceFamily::SphericalEqual: return "spherical-equal";
    case CovarianceFamily::SphericalVarying: return "spherical-varying";
    case CovarianceFamily::DiagonalVarying: return "diagonal-varying";
    case CovarianceFamily::FullEqual: return "full-equal";
    case CovarianceFamily::FullVarying: return "full-varying";
  }
  return "unknown";
}

inline CovarianceFamily parse_family(std::string_view name) {
  for (auto f : kAllFamilies) {
    if (family_name(f) == name) return f;
  }
  throw UsageError("unknown covariance family '" + std::string(name) + "'");
}

/// Free covariance parameters of a K-component, p-dimensional mixture.
inline int covariance_param_count(CovarianceFamily f, int k, int p) {
  switch (f) {
    case CovarianceFamily::SphericalEqual: return 1;
    case CovarianceFamily::SphericalVarying: return k;
    case CovarianceFamily::DiagonalVarying: return k * p;
    case CovarianceFamily::FullEqual: return p * (p + 1) / 2;
    case CovarianceFamily::FullVarying: return k * p * (p + 1) / 2;
  }
  return 0;
}

/// nu_m: covariance parameters + K p means + (K - 1) weights.
inline int free_param_count(CovarianceFamily f, int k, int p) {
  return covariance_param_count(f, k, p) + k * p + (k - 1);
}

/// In one dimension several families describe the same model; map each onto
/// the first family (in enum order) with identical parameter space.
inline CovarianceFamily canonical_family(CovarianceFamily f, int p) {
  if (p != 1) return f;
  switch (f) {
    case CovarianceFamily::DiagonalVarying:
    case CovarianceFamily::FullVarying: return CovarianceFamily::SphericalVarying;
    case CovarianceFamily::FullEqual: return CovarianceFamily::SphericalEqual;
    default: return f;
  }
}

inline double bic_value(double loglik, int n_params, int n_obs) {
  return 2.0 * loglik - n_params * std::log(static_cast<double>(n_obs));
}

/// Status of one (K, family) cell of a model-selection grid.
struct BicCell {
  int k = 0;
  CovarianceFamily family = CovarianceFamily::FullVarying;
  int n_params = 0;
  std::optional<double> loglik;
  std::optional<double> bic;
  bool ridged = false;
  std::string error;
};

struct FitDiagnostics {
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_trace;
  double max_ridge = 0.0;
  int failed_restarts = 0;
  std::vector<BicCell> bic_table;  // filled by select_model
};

/// Finite Gaussian mixture sum_k pi_k N(mu_k, Sigma_k).
class MixtureModel {
 public:
  static constexpr double kWeightSumTol = 1e-12;

  MixtureModel() = default;

  MixtureModel(Vector weights, std::vector<GaussianComponent> components, CovarianceFamily family)
      : weights_(std::move(weights)), components_(std::move(components)), family_(family) {
    if (components_.empty()) throw UsageError("mixture needs at least one component");
    if (weights_.size() != static_cast<Eigen::Index>(components_.size())) {
      throw UsageError("mixture has " + std::to_string(components_.size()) + " components but " +
                       std::to_string(weights_.size()) + " weights");
    }
    for (Eigen::Index k = 0; k < weights_.size(); ++k) {
      if (!(weights_(k) > 0.0) || !std::isfinite(weights_(k))) {
        throw UsageError("mixture weight " + std::to_string(k) + " must be positive, got " +
                         std::to_string(weights_(k)));
      }
    }
    if (std::abs(weights_.sum() - 1.0) > kWeightSumTol) {
      throw UsageError("mixture weights sum to " + std::to_string(weights_.sum()) + ", not 1");
    }
    const int p = components_.front().dim();
    for (const auto& c : components_) {
      if (c.dim() != p) throw UsageError("mixture components have different dimensions");
    }
    for (const auto& c : components_) diagnostics_.max_ridge = std::max(diagnostics_.max_ridge, c.cov().ridge());
  }

  int k() const { return static_cast<int>(components_.size()); }
  int dim() const { return components_.front().dim(); }
  const Vector& weights() const { return weights_; }
  const std::vector<GaussianComponent>& components() const { return components_; }
  const GaussianComponent& component(int k) const { return components_.at(static_cast<std::size_t>(k)); }
  CovarianceFamily family() const { return family_; }

  int n_params() const { return free_param_count(family_, k(), dim()); }
  double loglik() const { return loglik_; }
  int n_obs() const { return n_obs_; }
  double bic() const { return bic_; }

  void set_fit(double loglik, int n_obs) {
    loglik_ = loglik;
    n_obs_ = n_obs;
    bic_ = bic_value(loglik, n_params(), n_obs);
  }

  const FitDiagnostics& diagnostics() const { return diagnostics_; }
  FitDiagnostics& diagnostics() { return diagnostics_; }

  /// n x K matrix of log pi_k + log phi_k(y_i).
  Matrix log_joint_rows(const DataMatrix& data) const {
    if (data.cols() != dim()) {
      throw UsageError("data has " + std::to_string(data.cols()) + " columns, model dimension is " +
                       std::to_string(dim()));
    }
    const Eigen::Map<const Matrix> xt(data.data(), data.cols(), data.rows());
    Matrix out(data.rows(), k());
    for (int j = 0; j < k(); ++j) {
      out.col(j) = components_[static_cast<std::size_t>(j)].log_pdf_cols(xt).array() + std::log(weights_(j));
    }
    return out;
  }

  /// log f(y_i) for every row, via log-sum-exp over components.
  Vector log_density_rows(const DataMatrix& data) const { return row_log_sum_exp(log_joint_rows(data)); }

  double log_density(const Vector& x) const {
    DataMatrix row = x.transpose();
    return log_density_rows(row)(0);
  }

  static Vector row_log_sum_exp(const Matrix& m) {
    const Vector mx = m.rowwise().maxCoeff();
    Vector out = mx.array() + (m.colwise() - mx).array().exp().rowwise().sum().log();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!std::isfinite(mx(i))) out(i) = mx(i);
    }
    return out;
  }

 private:
  Vector weights_;
  std::vector<GaussianComponent> components_;
  CovarianceFamily family_ = CovarianceFamily::FullVarying;
  double loglik_ = std::numeric_limits<double>::quiet_NaN();
  int n_obs_ = 0;
  double bic_ = std::numeric_limits<double>::quiet_NaN();
  FitDiagnostics diagnostics_;
};

/// n x K matrix of tau_k(y_i); each row sums to one.
struct Responsibilities {
  Matrix tau;

  Eigen::Index n() const { return tau.rows(); }
  Eigen::Index k() const { return tau.cols(); }
};

struct EStepResult {
  Responsibilities resp;
  double loglik = 0.0;
};

struct FitConfig {
  int k_min = 1;
  int k_max = 9;
  std::vector<CovarianceFamily> families{kAllFamilies.begin(), kAllFamilies.end()};
  double tol = 1e-8;
  int max_iter = 500;
  int n_init = 5;
  std::uint64_t seed = 20240101;

  void validate() const {
    if (k_min < 1 || k_max < k_min) {
      throw UsageError("k range " + std::to_string(k_min) + ".." + std::to_string(k_max) + " is empty or invalid");
    }
    if (families.empty()) throw UsageError("no covariance families selected");
    if (!(tol > 0.0)) throw UsageError("tol must be positive");
    if (max_iter < 1) throw UsageError("max_iter must be at least 1");
    if (n_init < 1) throw UsageError("n_init must be at least 1");
  }
};

namespace detail {

inline void check_finite_rows(const DataMatrix& data) {
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    if (!data.row(i).allFinite()) throw DataError("non-finite value in data row " + std::to_string(i));
  }
}

inline EStepResult e_step_unchecked(const DataMatrix& data, const MixtureModel& model) {
  const Matrix lj = model.log_joint_rows(data);
  const Vector mx = lj.rowwise().maxCoeff();
  EStepResult out;
  out.resp.tau = (lj.colwise() - mx).array().exp().matrix();
  const Vector s = out.resp.tau.rowwise().sum();
  out.resp.tau.array().colwise() /= s.array();
  const Vector lf = mx.array() + s.array().log();
  for (Eigen::Index i = 0; i < lf.size(); ++i) {
    if (!std::isfinite(lf(i))) throw NumericalError("mixture density underflows at row " + std::to_string(i));
  }
  out.loglik = lf.sum();
  return out;
}

}  // namespace detail

/// Posterior responsibilities and total log-likelihood of data under model.
inline EStepResult e_step(const DataMatrix& data, const MixtureModel& model) {
  if (data.cols() != model.dim()) {
    throw UsageError("data has " + std::to_string(data.cols()) + " columns, model dimension is " +
                     std::to_string(model.dim()));
  }
  detail::check_finite_rows(data);
  return detail::e_step_unchecked(data, model);
}

/// Maximization step: weights, weighted means and weighted (1/N_k) scatter
/// projected onto the covariance family. Throws EmptyComponent when a column of
/// resp carries less than 10 * eps * n mass.
inline MixtureModel m_step(const DataMatrix& data, const Responsibilities& resp, CovarianceFamily family) {
  const Eigen::Index n = data.rows();
  const Eigen::Index p = data.cols();
  const Eigen::Index kk = resp.k();
  if (resp.n() != n) throw UsageError("responsibilities have " + std::to_string(resp.n()) + " rows, data has " +
                                      std::to_string(n));
  if (kk < 1) throw UsageError("responsibilities have no columns");

  const Vector mass = resp.tau.colwise().sum().transpose();
  const double floor = 10.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(n);
  for (Eigen::Index k = 0; k < kk; ++k) {
    if (!(mass(k) >= floor)) throw EmptyComponent(static_cast<int>(k), mass(k));
  }

  Vector weights = mass / static_cast<double>(n);
  weights /= weights.sum();
  const Eigen::Map<const Matrix> xt(data.data(), p, n);
  // p x K
  Matrix means = xt * resp.tau;
  means.array().rowwise() /= mass.transpose().array();

  const bool diag_only = family != CovarianceFamily::FullEqual && family != CovarianceFamily::FullVarying;
  std::vector<Matrix> scatter(static_cast<std::size_t>(kk));
  for (Eigen::Index k = 0; k < kk; ++k) {
    Matrix centered = xt.colwise() - means.col(k);
    if (diag_only) {
      const Vector d = (centered.array().square().rowwise() * resp.tau.col(k).transpose().array()).rowwise().sum();
      scatter[static_cast<std::size_t>(k)] = (d / mass(k)).asDiagonal();
    } else {
      centered.array().rowwise() *= resp.tau.col(k).transpose().array().sqrt();
      Matrix s = centered * centered.transpose() / mass(k);
      scatter[static_cast<std::size_t>(k)] = 0.5 * (s + s.transpose());
    }
  }

  std::vector<Matrix> covs(static_cast<std::size_t>(kk));
  switch (family) {
    case CovarianceFamily::FullVarying:
    case CovarianceFamily::DiagonalVarying:
      covs = scatter;
      break;
    case CovarianceFamily::SphericalVarying:
      for (Eigen::Index k = 0; k < kk; ++k) {
        const double lambda = scatter[static_cast<std::size_t>(k)].trace() / static_cast<double>(p);
        covs[static_cast<std::size_t>(k)] = lambda * Matrix::Identity(p, p);
      }
      break;
    case CovarianceFamily::FullEqual:
    case CovarianceFamily::SphericalEqual: {
      Matrix pooled = Matrix::Zero(p, p);
      for (Eigen::Index k = 0; k < kk; ++k) pooled += weights(k) * scatter[static_cast<std::size_t>(k)];
      if (family == CovarianceFamily::SphericalEqual) {
        pooled = (pooled.trace() / static_cast<double>(p)) * Matrix::Identity(p, p);
      }
      for (auto& c : covs) c = pooled;
      break;
    }
  }

  std::vector<GaussianComponent> comps;
  comps.reserve(static_cast<std::size_t>(kk));
  for (Eigen::Index k = 0; k < kk; ++k) {
    comps.emplace_back(means.col(k), CovarianceMatrix(covs[static_cast<std::size_t>(k)]));
  }
  return MixtureModel(std::move(weights), std::move(comps), family);
}

namespace detail {

/// k-means++ seeding followed by a fixed number of Lloyd iterations; returns a
/// hard assignment of every row.
inline std::vector<int> kmeans_assign(const DataMatrix& data, int k, Rng& rng, int lloyd_iters = 10) {
  const Eigen::Index n = data.rows();
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  if (k == 1) return labels;

  Matrix centers(k, data.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = data.row(first(rng));
  Vector d2 = (data.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    if (!(total > 0.0)) throw EmptyComponent(c, 0.0);
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    Eigen::Index pick = n - 1;
    for (Eigen::Index i = 0; i < n; ++i) {
      target -= d2(i);
      if (target < 0.0) {
        pick = i;
        break;
      }
    }
    centers.row(c) = data.row(pick);
    d2 = d2.cwiseMin((data.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  Matrix dist(n, k);
  for (int it = 0; it <= lloyd_iters; ++it) {
    for (int c = 0; c < k; ++c) dist.col(c) = (data.rowwise() - centers.row(c)).rowwise().squaredNorm();
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      dist.row(i).minCoeff(&best);
      if (labels[static_cast<std::size_t>(i)] != static_cast<int>(best)) changed = true;
      labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    if (it == lloyd_iters || (!changed && it > 0)) break;
    Matrix sums = Matrix::Zero(k, data.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += data.row(i);
      ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
    }
  }
  return labels;
}

inline bool better_fit(const MixtureModel& a, const MixtureModel& b) {
  const bool ra = a.diagnostics().max_ridge > 0.0;
  const bool rb = b.diagnostics().max_ridge > 0.0;
  if (ra != rb) return !ra;
  return a.loglik() > b.loglik();
}

/// One EM run from a k-means++ start. Throws on any degeneracy.
inline MixtureModel run_em_once(const DataMatrix& data, int k, CovarianceFamily family, const FitConfig& config,
                                std::uint64_t seed) {
  const Eigen::Index n = data.rows();
  Rng rng = make_rng(seed);
  const std::vector<int> labels = kmeans_assign(data, k, rng);
  Responsibilities hard{Matrix::Zero(n, k)};
  for (Eigen::Index i = 0; i < n; ++i) hard.tau(i, labels[static_cast<std::size_t>(i)]) = 1.0;

  MixtureModel model = m_step(data, hard, family);
  const double collapse = 1.0 / (10.0 * static_cast<double>(n));
  std::vector<double> trace;
  double max_ridge = model.diagnostics().max_ridge;
  bool converged = false;
  EStepResult es;
  for (int it = 0;; ++it) {
    es = e_step_unchecked(data, model);
    if (!trace.empty()) {
      // EM never decreases the likelihood unless a ridge perturbed the M-step.
      assert(max_ridge > 0.0 || es.loglik >= trace.back() - 1e-9 * std::max(1.0, std::abs(trace.back())));
      if (std::abs(es.loglik - trace.back()) <= config.tol * std::abs(es.loglik)) converged = true;
    }
    trace.push_back(es.loglik);
    if (converged || it + 1 >= config.max_iter) break;
    model = m_step(data, es.resp, family);
    max_ridge = std::max(max_ridge, model.diagnostics().max_ridge);
    for (Eigen::Index j = 0; j < model.weights().size(); ++j) {
      if (model.weights()(j) < collapse) throw EmptyComponent(static_cast<int>(j), model.weights()(j) * n);
    }
  }
  model.set_fit(es.loglik, static_cast<int>(n));
  auto& diag = model.diagnostics();
  diag.iterations = static_cast<int>(trace.size());
  diag.converged = converged;
  diag.loglik_trace = std::move(trace);
  diag.max_ridge = std::max(max_ridge, diag.max_ridge);
  return model;
}

}  // namespace detail

/// Fits a K-component mixture of the given family by EM, keeping the best of
/// config.n_init restarts. Restart r is seeded from (config.seed, K, r), so
/// families with identical parameter spaces yield identical fits.
inline MixtureModel fit_em(const DataMatrix& data, int k, CovarianceFamily family, const FitConfig& config) {
  config.validate();
  if (k < 1) throw UsageError("K must be at least 1");
  if (data.cols() < 1) throw UsageError("data has no columns");
  if (data.rows() <= k) {
    throw UsageError("need more observations (" + std::to_string(data.rows()) + ") than components (" +
                     std::to_string(k) + ")");
  }
  detail::check_finite_rows(data);

  std::optional<MixtureModel> best;
  int failed = 0;
  std::string last_error;
  for (int r = 0; r < config.n_init; ++r) {
    try {
      MixtureModel m = detail::run_em_once(data, k, family, config,
                                           split_seed(config.seed, {static_cast<std::uint64_t>(k),
                                                                    static_cast<std::uint64_t>(r)}));
      if (!best || detail::better_fit(m, *best)) best = std::move(m);
    } catch (const NumericalError& e) {
      ++failed;
      last_error = e.what();
    }
  }
  if (!best) {
    throw AllInitsFailed("all " + std::to_string(config.n_init) + " restarts failed for K=" + std::to_string(k) +
                         " (" + std::string(family_name(family)) + "): " + last_error);
  }
  best->diagnostics().failed_restarts = failed;
  return *std::move(best);
}

namespace detail {

/// True when a should be preferred over b in model selection.
inline bool better_cell(const BicCell& a, const BicCell& b) {
  if (a.ridged != b.ridged) return !a.ridged;
  if (*a.bic != *b.bic) return *a.bic > *b.bic;
  if (a.n_params != b.n_params) return a.n_params < b.n_params;
  if (a.k != b.k) return a.k < b.k;
  return static_cast<int>(a.family) < static_cast<int>(b.family);
}

}  // namespace detail

/// Fits every (K, family) cell of the grid and returns the max-BIC model.
/// Ties go to fewer parameters, then smaller K, then family enum order. Fits
/// that only succeeded with a ridge lose to any unridged fit. The whole grid
/// is recorded in diagnostics().bic_table.
inline MixtureModel select_model(const DataMatrix& data, const FitConfig& config) {
  config.validate();
  if (data.rows() < 2) throw UsageError("need at least two observations");
  const int p = static_cast<int>(data.cols());
  const int k_hi = std::min<int>(config.k_max, static_cast<int>(data.rows()) - 1);
  if (k_hi < config.k_min) throw UsageError("no feasible K: n=" + std::to_string(data.rows()));
  detail::check_finite_rows(data);

  std::vector<std::pair<int, CovarianceFamily>> cells;
  std::vector<std::pair<int, CovarianceFamily>> unique;
  std::map<std::pair<int, int>, std::size_t> unique_index;
  for (int k = config.k_min; k <= k_hi; ++k) {
    for (auto f : config.families) {
      cells.emplace_back(k, f);
      auto key = std::make_pair(k, static_cast<int>(canonical_family(f, p)));
      if (!unique_index.count(key)) {
        unique_index[key] = unique.size();
        unique.emplace_back(k, canonical_family(f, p));
      }
    }
  }

  std::vector<std::optional<MixtureModel>> fits(unique.size());
  std::vector<std::string> errors(unique.size());
  parallel_for(unique.size(), [&](std::size_t i) {
    try {
      fits[i] = fit_em(data, unique[i].first, unique[i].second, config);
    } catch (const NumericalError& e) {
      errors[i] = e.what();
    }
  });

  std::vector<BicCell> table;
  std::optional<std::size_t> best_cell;
  std::optional<std::size_t> best_fit;
  for (const auto& [k, f] : cells) {
    const std::size_t u = unique_index.at({k, static_cast<int>(canonical_family(f, p))});
    BicCell cell;
    cell.k = k;
    cell.family = f;
    cell.n_params = free_param_count(f, k, p);
    if (fits[u]) {
      cell.loglik = fits[u]->loglik();
      cell.bic = bic_value(fits[u]->loglik(), cell.n_params, static_cast<int>(data.rows()));
      cell.ridged = fits[u]->diagnostics().max_ridge > 0.0;
      if (!best_cell || detail::better_cell(cell, table[*best_cell])) {
        best_cell = table.size();
        best_fit = u;
      }
    } else {
      cell.error = errors[u];
    }
    table.push_back(std::move(cell));
  }
  if (!best_cell) {
    throw AllInitsFailed("every cell of the model grid failed; first error: " + errors.front());
  }
  const BicCell& chosen = table[*best_cell];
  const MixtureModel& src = *fits[*best_fit];
  MixtureModel out(src.weights(), src.components(), chosen.family);
  out.set_fit(src.loglik(), src.n_obs());
  out.diagnostics() = src.diagnostics();
  out.diagnostics().bic_table = std::move(table);
  return out;
}

/// Draws s points: a component index from the weights, then a Gaussian draw.
inline DataMatrix sample_mixture(const MixtureModel& model, Eigen::Index s, Rng& rng) {
  std::discrete_distribution<int> pick(model.weights().data(), model.weights().data() + model.weights().size());
  std::normal_distribution<double> z01;
  const int p = model.dim();
  DataMatrix out(s, p);
  Vector z(p);
  for (Eigen::Index i = 0; i < s; ++i) {
    const auto& c = model.component(pick(rng));
    for (int j = 0; j < p; ++j) z(j) = z01(rng);
    out.row(i) = (c.mean() + c.cov().chol().triangularView<Eigen::Lower>() * z).transpose();
  }
  return out;
}

}  // namespace mixent
