#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mixent/entropy.hpp"
#include "mixent/error.hpp"
#include "mixent/gaussian.hpp"
#include "mixent/mixture.hpp"
#include "mixent/random.hpp"
#include "mixent/special.hpp"

namespace mixent {

// Benchmark distributions with known entropy.

struct GaussianDist {
  Vector mean;
  Matrix cov;
};

/// Equal-weight mixture of N(-mu, sigma^2) and N(mu, sigma^2).
struct MixedGaussianDist {
  double mu = 0.0;
  double sigma = 1.0;
};

/// dim independent chi-squared(df) coordinates.
struct ChiSquaredDist {
  double df = 5.0;
  int dim = 10;
};

/// exp(X) with X ~ N(mean, cov).
struct LogNormalDist {
  Vector mean;
  Matrix cov;
};

using BenchmarkDistribution = std::variant<GaussianDist, MixedGaussianDist, ChiSquaredDist, LogNormalDist>;

inline std::string dist_name(const BenchmarkDistribution& d) {
  struct {
    std::string operator()(const GaussianDist&) const { return "gaussian"; }
    std::string operator()(const MixedGaussianDist&) const { return "mixed-gaussian"; }
    std::string operator()(const ChiSquaredDist&) const { return "chi-squared"; }
    std::string operator()(const LogNormalDist&) const { return "log-normal"; }
  } v;
  return std::visit(v, d);
}

inline int dist_dim(const BenchmarkDistribution& d) {
  struct {
    int operator()(const GaussianDist& g) const { return static_cast<int>(g.mean.size()); }
    int operator()(const MixedGaussianDist&) const { return 1; }
    int operator()(const ChiSquaredDist& c) const { return c.dim; }
    int operator()(const LogNormalDist& l) const { return static_cast<int>(l.mean.size()); }
  } v;
  return std::visit(v, d);
}

/// True when the distribution lives on the positive orthant.
inline bool dist_positive(const BenchmarkDistribution& d) {
  return std::holds_alternative<ChiSquaredDist>(d) || std::holds_alternative<LogNormalDist>(d);
}

inline void validate(const BenchmarkDistribution& d) {
  struct {
    void operator()(const GaussianDist& g) const { GaussianComponent(g.mean, g.cov); }
    void operator()(const MixedGaussianDist& m) const {
      if (!(m.sigma > 0.0) || !std::isfinite(m.mu)) throw UsageError("mixed-gaussian needs sigma > 0");
    }
    void operator()(const ChiSquaredDist& c) const {
      if (!(c.df > 0.0) || c.dim < 1) throw UsageError("chi-squared needs df > 0 and dim >= 1");
    }
    void operator()(const LogNormalDist& l) const { GaussianComponent(l.mean, l.cov); }
  } v;
  std::visit(v, d);
}

namespace detail {

inline DataMatrix gaussian_draws(const GaussianComponent& g, Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> z01;
  const int p = g.dim();
  DataMatrix out(n, p);
  Vector z(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) z(j) = z01(rng);
    out.row(i) = (g.mean() + g.cov().chol().triangularView<Eigen::Lower>() * z).transpose();
  }
  return out;
}

inline double mixed_gaussian_log_density(double x, double mu, double sigma) {
  const double a = -0.5 * std::pow((x - mu) / sigma, 2);
  const double b = -0.5 * std::pow((x + mu) / sigma, 2);
  const double mx = std::max(a, b);
  return mx + std::log(0.5 * (std::exp(a - mx) + std::exp(b - mx))) - std::log(sigma) - 0.5 * kLog2Pi;
}

}  // namespace detail

/// n draws, deterministic in seed.
inline DataMatrix sample(const BenchmarkDistribution& dist, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw UsageError("sample size must be at least 1");
  validate(dist);
  Rng rng = make_rng(seed);
  struct {
    Eigen::Index n;
    Rng& rng;
    DataMatrix operator()(const GaussianDist& g) const {
      return detail::gaussian_draws(GaussianComponent(g.mean, g.cov), n, rng);
    }
    DataMatrix operator()(const MixedGaussianDist& m) const {
      std::normal_distribution<double> z01;
      std::bernoulli_distribution coin(0.5);
      DataMatrix out(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double centre = coin(rng) ? m.mu : -m.mu;
        out(i, 0) = centre + m.sigma * z01(rng);
      }
      return out;
    }
    DataMatrix operator()(const ChiSquaredDist& c) const {
      std::chi_squared_distribution<double> chi(c.df);
      DataMatrix out(n, c.dim);
      for (Eigen::Index i = 0; i < n; ++i)
        for (int j = 0; j < c.dim; ++j) out(i, j) = chi(rng);
      return out;
    }
    DataMatrix operator()(const LogNormalDist& l) const {
      return detail::gaussian_draws(GaussianComponent(l.mean, l.cov), n, rng).array().exp().matrix();
    }
  } v{n, rng};
  return std::visit(v, dist);
}

/// -integral of f log f for the mixed-Gaussian density, by adaptive
/// Gauss-Kronrod quadrature over [-mu - 10 sigma, mu + 10 sigma].
inline double mixed_gaussian_entropy(double mu, double sigma) {
  const double lo = -std::abs(mu) - 10.0 * sigma;
  return integrate_gk(
      [&](double x) {
        const double lf = detail::mixed_gaussian_log_density(x, mu, sigma);
        return -std::exp(lf) * lf;
      },
      lo, -lo, 1e-10);
}

/// Entropy of one chi-squared(df) coordinate.
inline double chi_squared_entropy(double df) {
  const double h = 0.5 * df;
  return std::log(2.0) + std::lgamma(h) + h + (1.0 - h) * digamma(h);
}

inline double true_entropy(const BenchmarkDistribution& dist) {
  validate(dist);
  struct {
    double operator()(const GaussianDist& g) const { return gaussian_entropy(GaussianComponent(g.mean, g.cov)); }
    double operator()(const MixedGaussianDist& m) const { return mixed_gaussian_entropy(m.mu, m.sigma); }
    double operator()(const ChiSquaredDist& c) const { return c.dim * chi_squared_entropy(c.df); }
    double operator()(const LogNormalDist& l) const {
      const CovarianceMatrix cov(l.cov);
      const double p = static_cast<double>(l.mean.size());
      return 0.5 * p * (1.0 + kLog2Pi) + 0.5 * cov.log_det() + l.mean.sum();
    }
  } v;
  return std::visit(v, dist);
}

// Replication engine.

enum class SimMethod { GMM, BoundedGMM, MLE, UT, VAR, SOTE };

inline std::string_view sim_method_name(SimMethod m) {
  switch (m) {
    case SimMethod::GMM: return "gmm";
    case SimMethod::BoundedGMM: return "bgmm";
    case SimMethod::MLE: return "mle";
    case SimMethod::UT: return "ut";
    case SimMethod::VAR: return "var";
    case SimMethod::SOTE: return "sote";
  }
  return "unknown";
}

inline SimMethod parse_sim_method(std::string_view name) {
  for (auto m : {SimMethod::GMM, SimMethod::BoundedGMM, SimMethod::MLE, SimMethod::UT, SimMethod::VAR,
                 SimMethod::SOTE}) {
    if (sim_method_name(m) == name) return m;
  }
  throw UsageError("unknown simulation method '" + std::string(name) + "'");
}

struct SimulationConfig {
  std::vector<int> sizes{100, 1000, 10000};
  int replicates = 100;
  std::vector<SimMethod> methods{SimMethod::GMM};
  std::uint64_t seed = 20240101;
  FitConfig fit;
};

struct ReplicateEstimate {
  SimMethod method = SimMethod::GMM;
  int n = 0;
  int replicate = 0;
  std::optional<double> estimate;
  std::string error;
};

struct SummaryRow {
  SimMethod method = SimMethod::GMM;
  int n = 0;
  double mean = 0.0;
  double p025 = 0.0;
  double p975 = 0.0;
  double mse = 0.0;
  int n_ok = 0;
  int n_failed = 0;
};

struct SimulationResult {
  std::string distribution;
  std::vector<int> sizes;
  std::vector<SimMethod> methods;
  int replicates = 0;
  double true_value = 0.0;
  std::vector<ReplicateEstimate> estimates;  // size-major, then replicate, then method
  std::vector<SummaryRow> summary;           // size-major, then method

  const SummaryRow& row(SimMethod m, int n) const {
    for (const auto& r : summary)
      if (r.method == m && r.n == n) return r;
    throw UsageError("no summary row for method " + std::string(sim_method_name(m)) + " at n=" + std::to_string(n));
  }
};

/// Type-7 (linear interpolation) sample quantile of sorted values.
inline double quantile_type7(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Seeds of replicate r at size index s: data, plain fit, bounded fit.
inline std::uint64_t replicate_seed(std::uint64_t seed, std::size_t size_index, int replicate, int stream) {
  return split_seed(seed, {static_cast<std::uint64_t>(size_index), static_cast<std::uint64_t>(replicate),
                           static_cast<std::uint64_t>(stream)});
}

namespace detail {

inline std::vector<ReplicateEstimate> run_replicate(const BenchmarkDistribution& dist, const SimulationConfig& cfg,
                                                    std::size_t size_index, int rep) {
  const int n = cfg.sizes[size_index];
  std::vector<ReplicateEstimate> out;
  for (auto m : cfg.methods) out.push_back({m, n, rep, std::nullopt, {}});

  DataMatrix data;
  try {
    data = sample(dist, n, replicate_seed(cfg.seed, size_index, rep, 0));
  } catch (const Error& e) {
    for (auto& r : out) r.error = e.what();
    return out;
  }

  std::optional<MixtureModel> plain;
  std::string plain_error;
  auto plain_model = [&]() -> const MixtureModel& {
    if (!plain && plain_error.empty()) {
      try {
        FitConfig fc = cfg.fit;
        fc.seed = replicate_seed(cfg.seed, size_index, rep, 1);
        plain = select_model(data, fc);
      } catch (const Error& e) {
        plain_error = e.what();
      }
    }
    if (!plain) throw NumericalError(plain_error);
    return *plain;
  };

  for (auto& r : out) {
    try {
      switch (r.method) {
        case SimMethod::GMM: r.estimate = entropy_gmm(data, plain_model()).value; break;
        case SimMethod::UT: r.estimate = entropy_ut(plain_model()).value; break;
        case SimMethod::VAR: r.estimate = entropy_var(plain_model()).value; break;
        case SimMethod::SOTE: r.estimate = entropy_sote(plain_model()).value; break;
        case SimMethod::MLE: r.estimate = entropy_mle_gaussian(data).value; break;
        case SimMethod::BoundedGMM: {
          FitConfig fc = cfg.fit;
          fc.seed = replicate_seed(cfg.seed, size_index, rep, 2);
          const int p = static_cast<int>(data.cols());
          const BoundedTransform t =
              dist_positive(dist) ? BoundedTransform::all_bounded(p) : BoundedTransform::identity(p);
          r.estimate = entropy_bounded_gmm(data, t, fc).value;
          break;
        }
      }
      if (r.estimate && !std::isfinite(*r.estimate)) {
        r.estimate.reset();
        r.error = "non-finite estimate";
      }
    } catch (const Error& e) {
      r.error = e.what();
    }
  }
  return out;
}

}  // namespace detail

/// Samples, fits and estimates for every (size, replicate) and summarizes each
/// (method, size) by mean, 2.5/97.5% type-7 percentiles and MSE against the
/// true entropy. Failed estimates are excluded and counted.
inline SimulationResult run_simulation(const BenchmarkDistribution& dist, const SimulationConfig& cfg) {
  validate(dist);
  if (cfg.replicates < 2) throw UsageError("need at least two replicates");
  if (cfg.sizes.empty()) throw UsageError("no sample sizes given");
  if (cfg.methods.empty()) throw UsageError("no estimation methods given");
  for (int n : cfg.sizes)
    if (n < 2) throw UsageError("sample sizes must be at least 2");
  cfg.fit.validate();

  SimulationResult res;
  res.distribution = dist_name(dist);
  res.sizes = cfg.sizes;
  res.methods = cfg.methods;
  res.replicates = cfg.replicates;
  res.true_value = true_entropy(dist);

  const std::size_t jobs = cfg.sizes.size() * static_cast<std::size_t>(cfg.replicates);
  std::vector<std::vector<ReplicateEstimate>> per_job(jobs);
  parallel_for(jobs, [&](std::size_t j) {
    const std::size_t s = j / static_cast<std::size_t>(cfg.replicates);
    const int r = static_cast<int>(j % static_cast<std::size_t>(cfg.replicates));
    per_job[j] = detail::run_replicate(dist, cfg, s, r);
  });
  for (auto& v : per_job)
    for (auto& e : v) res.estimates.push_back(std::move(e));

  for (int n : cfg.sizes) {
    for (auto m : cfg.methods) {
      SummaryRow row;
      row.method = m;
      row.n = n;
      std::vector<double> vals;
      for (const auto& e : res.estimates) {
        if (e.method != m || e.n != n) continue;
        if (e.estimate) vals.push_back(*e.estimate);
        else ++row.n_failed;
      }
      row.n_ok = static_cast<int>(vals.size());
      if (!vals.empty()) {
        double sum = 0.0, sq = 0.0;
        for (double v : vals) {
          sum += v;
          sq += (v - res.true_value) * (v - res.true_value);
        }
        row.mean = sum / static_cast<double>(vals.size());
        row.mse = sq / static_cast<double>(vals.size());
        std::sort(vals.begin(), vals.end());
        row.p025 = quantile_type7(vals, 0.025);
        row.p975 = quantile_type7(vals, 0.975);
      } else {
        row.mean = row.mse = row.p025 = row.p975 = std::numeric_limits<double>::quiet_NaN();
      }
      res.summary.push_back(row);
    }
  }
  return res;
}

}  // namespace mixent
