#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mixent/benchmark.hpp"
#include "mixent/entropy.hpp"
#include "mixent/error.hpp"
#include "mixent/image.hpp"
#include "mixent/info.hpp"
#include "mixent/io/csv.hpp"
#include "mixent/mixture.hpp"

#ifndef MIXENT_VERSION
#define MIXENT_VERSION "0.0.0"
#endif

namespace mixent::cli {

using json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage: return kExitUsage;
    case ErrorKind::Data: return kExitData;
    case ErrorKind::Numerical: return kExitNumerical;
  }
  return kExitNumerical;
}

// Option parsing helpers.

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    const auto a = cur.find_first_not_of(" \t");
    const auto b = cur.find_last_not_of(" \t");
    out.push_back(a == std::string::npos ? std::string() : cur.substr(a, b - a + 1));
  }
  return out;
}

inline double parse_number(const std::string& s, const std::string& what) {
  double v = 0.0;
  if (!io::detail::parse_double(s, v)) throw UsageError(what + ": '" + s + "' is not a number");
  return v;
}

inline int parse_int(const std::string& s, const std::string& what) {
  const double v = parse_number(s, what);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw UsageError(what + ": '" + s + "' is not an integer");
  return static_cast<int>(v);
}

inline std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  for (const auto& t : split(s, ',')) out.push_back(parse_int(t, what));
  if (out.empty()) throw UsageError(what + " is empty");
  return out;
}

/// "a-b", "a..b" or a single "k".
inline std::pair<int, int> parse_k_range(const std::string& s) {
  auto dots = s.find("..");
  auto dash = s.find('-');
  if (dots != std::string::npos) return {parse_int(s.substr(0, dots), "--k-range"), parse_int(s.substr(dots + 2), "--k-range")};
  if (dash != std::string::npos) return {parse_int(s.substr(0, dash), "--k-range"), parse_int(s.substr(dash + 1), "--k-range")};
  const int k = parse_int(s, "--k-range");
  return {k, k};
}

inline std::vector<CovarianceFamily> parse_families(const std::string& s) {
  if (s == "all") return {kAllFamilies.begin(), kAllFamilies.end()};
  std::vector<CovarianceFamily> out;
  for (const auto& t : split(s, ',')) out.push_back(parse_family(t));
  return out;
}

/// 1-based column list or "all", converted to 0-based indices.
inline std::vector<int> parse_columns(const std::string& s, int p, const std::string& what) {
  std::vector<int> out;
  if (s == "all") {
    for (int j = 0; j < p; ++j) out.push_back(j);
    return out;
  }
  for (int c : parse_int_list(s, what)) {
    if (c < 1 || c > p) {
      throw UsageError(what + ": column " + std::to_string(c) + " out of range 1.." + std::to_string(p));
    }
    out.push_back(c - 1);
  }
  return out;
}

struct FitOptions {
  std::uint64_t seed = 20240101;
  std::string k_range = "1-9";
  std::string families = "all";
  int n_init = 5;
  double tol = 1e-8;
  int max_iter = 500;

  void add_to(CLI::App* app) {
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_option("--k-range", k_range, "Component counts, e.g. 1-9")->capture_default_str();
    app->add_option("--families", families, "Covariance families (comma list or all)")->capture_default_str();
    app->add_option("--n-init", n_init, "EM restarts per model")->capture_default_str();
    app->add_option("--tol", tol, "Relative log-likelihood tolerance")->capture_default_str();
    app->add_option("--max-iter", max_iter, "EM iteration cap")->capture_default_str();
  }

  FitConfig config() const {
    FitConfig c;
    std::tie(c.k_min, c.k_max) = parse_k_range(k_range);
    c.families = parse_families(families);
    c.n_init = n_init;
    c.tol = tol;
    c.max_iter = max_iter;
    c.seed = seed;
    c.validate();
    return c;
  }
};

inline json config_json(const FitConfig& c) {
  json fams = json::array();
  for (auto f : c.families) fams.push_back(family_name(f));
  return {{"k_min", c.k_min}, {"k_max", c.k_max}, {"families", fams}, {"tol", c.tol},
          {"max_iter", c.max_iter}, {"n_init", c.n_init}};
}

inline json provenance(std::uint64_t seed, json config) {
  return {{"tool_version", MIXENT_VERSION}, {"seed", seed}, {"config", std::move(config)}};
}

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline json model_json(const MixtureModel& m) {
  json weights = json::array(), means = json::array(), covs = json::array();
  for (int k = 0; k < m.k(); ++k) {
    weights.push_back(m.weights()(k));
    json mu = json::array();
    for (Eigen::Index j = 0; j < m.dim(); ++j) mu.push_back(m.component(k).mean()(j));
    means.push_back(mu);
    covs.push_back(matrix_json(m.component(k).cov().values()));
  }
  return {{"k", m.k()},
          {"dim", m.dim()},
          {"family", family_name(m.family())},
          {"weights", weights},
          {"means", means},
          {"covariances", covs},
          {"loglik", m.loglik()},
          {"n_params", m.n_params()},
          {"n_obs", m.n_obs()},
          {"bic", m.bic()},
          {"max_ridge", m.diagnostics().max_ridge}};
}

inline json bic_table_json(const MixtureModel& m) {
  json t = json::array();
  for (const auto& c : m.diagnostics().bic_table) {
    json row{{"k", c.k}, {"family", family_name(c.family)}, {"n_params", c.n_params}};
    row["loglik"] = c.loglik ? json(*c.loglik) : json(nullptr);
    row["bic"] = c.bic ? json(*c.bic) : json(nullptr);
    row["ridged"] = c.ridged;
    if (!c.error.empty()) row["error"] = c.error;
    t.push_back(row);
  }
  return t;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv) {
    CLI::App app{"Entropy and mutual information estimation with Gaussian mixtures", "mixent"};
    app.set_version_flag("--version", std::string(MIXENT_VERSION));
    app.require_subcommand(1);
    setup_fit(app);
    setup_entropy(app);
    setup_mi(app);
    setup_tree(app);
    setup_simulate(app);
    setup_image(app);
    try {
      app.parse(argc, argv);
    } catch (const CLI::Success& e) {
      return app.exit(e, out_, err_);
    } catch (const CLI::ParseError& e) {
      app.exit(e, out_, err_);
      return kExitUsage;
    }
    try {
      action_();
      return kExitOk;
    } catch (const Error& e) {
      err_ << "error: " << e.what() << "\n";
      return exit_code(e.kind());
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitNumerical;
    }
  }

 private:
  void emit(const std::string& text, const std::string& path) {
    if (path.empty()) out_ << text;
    else io::write_text(path, text);
  }

  static DataMatrix load(const std::string& path) { return io::read_csv(path).data; }

  static void require_rows(const DataMatrix& d) {
    if (d.rows() <= d.cols()) {
      throw DataError("need more rows than columns, got " + std::to_string(d.rows()) + " rows and " +
                      std::to_string(d.cols()) + " columns");
    }
  }

  /// Reports the first value at or below zero in a bounded column, 1-based.
  static void check_bounded(const DataMatrix& d, const BoundedTransform& t) {
    for (int j = 0; j < t.dim(); ++j) {
      if (!t.lower(j)) continue;
      for (Eigen::Index i = 0; i < d.rows(); ++i) {
        if (!(d(i, j) > *t.lower(j))) {
          throw DataError("bounded column " + std::to_string(j + 1) + " has value " + io::format_double(d(i, j)) +
                          " at data row " + std::to_string(i + 1) + ", not above its lower bound " +
                          io::format_double(*t.lower(j)));
        }
      }
    }
  }

  std::string unit() const { return bits_ ? "bits" : "nats"; }
  double scale(double nats) const { return bits_ ? nats / std::log(2.0) : nats; }

  void setup_fit(CLI::App& app) {
    auto* c = app.add_subcommand("fit", "Select a Gaussian mixture by BIC and write it as JSON");
    c->add_option("data", input_, "CSV file")->required();
    fit_.add_to(c);
    c->add_option("-o,--output", output_, "Output file (default stdout)");
    c->callback([this] {
      action_ = [this] {
        const FitConfig cfg = fit_.config();
        const DataMatrix d = load(input_);
        require_rows(d);
        const MixtureModel m = select_model(d, cfg);
        json j = provenance(cfg.seed, config_json(cfg));
        j["input"] = input_;
        j["model"] = model_json(m);
        j["bic_table"] = bic_table_json(m);
        emit(dump(j), output_);
      };
    });
  }

  void setup_entropy(CLI::App& app) {
    auto* c = app.add_subcommand("entropy", "Estimate differential entropy");
    c->add_option("data", input_, "CSV file")->required();
    c->add_option("--method", method_, "gmm, mc, mle, ut, var or sote")->capture_default_str();
    c->add_option("--bounded", bounded_, "1-based columns bounded below by 0 (comma list or all)");
    c->add_option("--mc-samples", mc_samples_, "Monte Carlo sample size")->capture_default_str();
    c->add_flag("--bits", bits_, "Report in bits instead of nats");
    c->add_option("--format", format_, "text or json")->capture_default_str()->check(CLI::IsMember({"text", "json"}));
    c->add_option("-o,--output", output_, "Output file (default stdout)");
    fit_.add_to(c);
    c->callback([this] { action_ = [this] { cmd_entropy(); }; });
  }

  void cmd_entropy() {
    const EntropyMethod method = parse_method(method_);
    const FitConfig cfg = fit_.config();
    const DataMatrix d = load(input_);
    require_rows(d);
    const int p = static_cast<int>(d.cols());
    const BoundedTransform t =
        bounded_.empty() ? BoundedTransform::identity(p) : BoundedTransform::columns(p, parse_columns(bounded_, p, "--bounded"));
    if (t.any() && method != EntropyMethod::GMM) throw UsageError("--bounded is only supported with --method gmm");
    check_bounded(d, t);

    EntropyEstimate e;
    if (method == EntropyMethod::MLEGaussian) {
      e = entropy_mle_gaussian(d);
    } else if (method == EntropyMethod::GMM && t.any()) {
      e = entropy_bounded_gmm(d, t, cfg);
    } else {
      const MixtureModel m = select_model(d, cfg);
      switch (method) {
        case EntropyMethod::GMM: e = entropy_gmm(d, m); break;
        case EntropyMethod::MC: e = entropy_mc(m, mc_samples_, split_seed(cfg.seed, {0x6d63})); break;
        case EntropyMethod::UT: e = entropy_ut(m); break;
        case EntropyMethod::VAR: e = entropy_var(m); break;
        case EntropyMethod::SOTE: e = entropy_sote(m); break;
        case EntropyMethod::MLEGaussian: break;
      }
    }

    json cj = config_json(cfg);
    cj["method"] = method_;
    cj["bounded"] = bounded_.empty() ? json(nullptr) : json(bounded_);
    if (method == EntropyMethod::MC) cj["mc_samples"] = mc_samples_;
    json j = provenance(cfg.seed, cj);
    j["input"] = input_;
    j["n_obs"] = d.rows();
    j["dim"] = d.cols();
    j["method"] = method_name(e.method);
    j["unit"] = unit();
    j["value"] = scale(e.value);
    if (e.se) j["se"] = scale(*e.se);
    j["bounded"] = e.bounded;
    if (e.model) {
      j["model"] = {{"k", e.model->k}, {"family", family_name(e.model->family)}, {"n_obs", e.model->n_obs}};
    }
    if (format_ == "json") {
      emit(dump(j), output_);
      return;
    }
    std::ostringstream os;
    os << std::setprecision(10);
    os << "entropy " << scale(e.value) << " " << unit() << "\n";
    if (e.se) os << "se " << scale(*e.se) << " " << unit() << "\n";
    os << "method " << method_name(e.method) << (e.bounded ? " (bounded)" : "") << "\n";
    if (e.model) os << "model K=" << e.model->k << " family=" << family_name(e.model->family) << " n=" << e.model->n_obs << "\n";
    os << "n " << d.rows() << " dim " << d.cols() << "\n";
    os << "seed " << cfg.seed << "\n";
    emit(os.str(), output_);
  }

  void setup_mi(CLI::App& app) {
    auto* c = app.add_subcommand("mi", "Mutual information of a column pair or of all pairs");
    c->add_option("data", input_, "CSV file")->required();
    c->add_option("--cols", cols_, "Two 1-based column indices")->expected(2);
    c->add_option("--mode", mode_, "gmm, bounded or gaussian")->capture_default_str();
    c->add_option("--bounded", bounded_, "1-based columns bounded below by 0 (bounded mode; default all)");
    c->add_flag("--bits", bits_, "Report in bits instead of nats");
    c->add_option("--format", format_, "text or json")->capture_default_str()->check(CLI::IsMember({"text", "json"}));
    c->add_option("-o,--output", output_, "Output file (default stdout)");
    fit_.add_to(c);
    c->callback([this] { action_ = [this] { cmd_mi(); }; });
  }

  BoundedTransform mi_transform(const DataMatrix& d, MIMode mode) const {
    const int p = static_cast<int>(d.cols());
    if (mode != MIMode::Bounded) {
      if (!bounded_.empty()) throw UsageError("--bounded needs --mode bounded");
      return BoundedTransform::identity(p);
    }
    const BoundedTransform t = bounded_.empty() ? BoundedTransform::all_bounded(p)
                                                : BoundedTransform::columns(p, parse_columns(bounded_, p, "--bounded"));
    check_bounded(d, t);
    return t;
  }

  MIMatrix compute_matrix(const DataMatrix& d, MIMode mode, const FitConfig& cfg) {
    return mi_matrix(d, mode, cfg, mi_transform(d, mode));
  }

  std::string matrix_csv(const MIMatrix& m, const std::vector<std::string>& labels) const {
    io::Table t;
    t.header = labels;
    t.data = m.values();
    for (Eigen::Index i = 0; i < t.data.rows(); ++i)
      for (Eigen::Index j = 0; j < t.data.cols(); ++j) t.data(i, j) = scale(t.data(i, j));
    return io::to_csv(t);
  }

  static std::vector<std::string> labels_for(const io::Table& t) {
    if (!t.header.empty()) return t.header;
    std::vector<std::string> l;
    for (Eigen::Index j = 0; j < t.data.cols(); ++j) l.push_back("X" + std::to_string(j + 1));
    return l;
  }

  void cmd_mi() {
    const MIMode mode = parse_mi_mode(mode_);
    const FitConfig cfg = fit_.config();
    const io::Table table = io::read_csv(input_);
    DataMatrix d = table.data;
    std::vector<std::string> labels = labels_for(table);
    if (d.cols() < 2) throw DataError("mutual information needs at least two columns");
    json cj = config_json(cfg);
    cj["mode"] = mode_;
    cj["bounded"] = bounded_.empty() ? json(nullptr) : json(bounded_);

    if (cols_.empty()) {
      const MIMatrix m = compute_matrix(d, mode, cfg);
      if (format_ == "json") {
        json j = provenance(cfg.seed, cj);
        j["labels"] = labels;
        j["unit"] = unit();
        j["mi"] = matrix_json(m.values() / (bits_ ? std::log(2.0) : 1.0));
        j["missing"] = missing_json(m, labels);
        emit(dump(j), output_);
      } else {
        emit(matrix_csv(m, labels), output_);
      }
      return;
    }
    const std::vector<int> sel = parse_columns(std::to_string(cols_[0]) + "," + std::to_string(cols_[1]),
                                               static_cast<int>(d.cols()), "--cols");
    if (sel[0] == sel[1]) throw UsageError("--cols needs two different columns");
    DataMatrix pair(d.rows(), 2);
    pair.col(0) = d.col(sel[0]);
    pair.col(1) = d.col(sel[1]);
    double value = 0.0;
    if (mode == MIMode::Gaussian) {
      value = gaussian_mi(pair.col(0), pair.col(1));
    } else {
      const BoundedTransform t = mi_transform(d, mode).select(sel);
      value = mutual_information(pair, cfg, t, MISeeds::for_pair(cfg.seed, sel[0], sel[1])).value;
    }
    json j = provenance(cfg.seed, cj);
    j["columns"] = {labels[static_cast<std::size_t>(sel[0])], labels[static_cast<std::size_t>(sel[1])]};
    j["unit"] = unit();
    j["mi"] = scale(value);
    if (format_ == "json") {
      emit(dump(j), output_);
    } else {
      std::ostringstream os;
      os << std::setprecision(10) << "mi " << scale(value) << " " << unit() << "\n"
         << "columns " << labels[static_cast<std::size_t>(sel[0])] << " " << labels[static_cast<std::size_t>(sel[1])]
         << "\nmode " << mode_ << "\nseed " << cfg.seed << "\n";
      emit(os.str(), output_);
    }
  }

  static json missing_json(const MIMatrix& m, const std::vector<std::string>& labels) {
    json miss = json::array();
    for (int i = 0; i < m.dim(); ++i)
      for (int j = i + 1; j < m.dim(); ++j)
        if (m.missing(i, j))
          miss.push_back({{"pair", {labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(j)]}},
                          {"error", m.error(i, j)}});
    return miss;
  }

  void setup_tree(CLI::App& app) {
    auto* c = app.add_subcommand("tree", "Chow-Liu tree from pairwise mutual information");
    c->add_option("data", input_, "CSV file")->required();
    c->add_option("--mode", mode_, "gmm, bounded or gaussian")->capture_default_str();
    c->add_option("--bounded", bounded_, "1-based columns bounded below by 0 (bounded mode; default all)");
    c->add_option("-o,--output", output_,
                  "Output prefix: writes PREFIX.json, PREFIX.dot and PREFIX_mi.csv (default: JSON on stdout)");
    fit_.add_to(c);
    c->callback([this] { action_ = [this] { cmd_tree(); }; });
  }

  void cmd_tree() {
    const MIMode mode = parse_mi_mode(mode_);
    const FitConfig cfg = fit_.config();
    const io::Table table = io::read_csv(input_);
    const std::vector<std::string> labels = labels_for(table);
    if (table.data.cols() < 2) throw DataError("a tree needs at least two columns");
    const MIMatrix m = compute_matrix(table.data, mode, cfg);
    const Tree t = max_spanning_tree(m, labels);

    json cj = config_json(cfg);
    cj["mode"] = mode_;
    cj["bounded"] = bounded_.empty() ? json(nullptr) : json(bounded_);
    json j = provenance(cfg.seed, cj);
    j["labels"] = labels;
    json edges = json::array();
    for (const auto& e : t.edges) {
      edges.push_back({{"i", e.i + 1},
                       {"j", e.j + 1},
                       {"source", labels[static_cast<std::size_t>(e.i)]},
                       {"target", labels[static_cast<std::size_t>(e.j)]},
                       {"mi", e.mi},
                       {"weight", e.weight}});
    }
    j["edges"] = edges;
    j["total_weight"] = t.total_weight();
    j["mi"] = matrix_json(m.values());
    if (output_.empty()) {
      emit(dump(j), "");
      return;
    }
    io::write_text(output_ + ".json", dump(j));
    io::write_text(output_ + ".dot", to_dot(t));
    io::write_text(output_ + "_mi.csv", matrix_csv(m, labels));
  }

  void setup_simulate(CLI::App& app) {
    auto* c = app.add_subcommand("simulate", "Replicated entropy estimation on a benchmark distribution");
    c->add_option("--dist", dist_, "gaussian, mixed-gaussian, chi-squared or log-normal")->required();
    c->add_option("--params", params_, "key=value list, e.g. mu=3,sigma=1");
    c->add_option("--sizes", sizes_, "Comma list of sample sizes")->capture_default_str();
    c->add_option("--replicates", replicates_, "Replicates per size")->capture_default_str();
    c->add_option("--methods", methods_, "Comma list of gmm, bgmm, mle, ut, var, sote")->capture_default_str();
    c->add_option("-o,--output", output_, "Output prefix: writes PREFIX.csv and PREFIX.json (default: CSV on stdout)");
    fit_.add_to(c);
    c->callback([this] { action_ = [this] { cmd_simulate(); }; });
  }

  static std::vector<double> parse_vector(const std::string& s, const std::string& key) {
    std::vector<double> v;
    for (const auto& t : split(s, ':')) v.push_back(parse_number(t, "--params " + key));
    return v;
  }

  /// Parameters: gaussian/log-normal take mean=a:b and cov=row-major entries
  /// separated by ':'; mixed-gaussian takes mu, sigma; chi-squared takes df, dim.
  BenchmarkDistribution make_distribution(json& echo) const {
    std::map<std::string, std::string> kv;
    if (!params_.empty()) {
      for (const auto& item : split(params_, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--params entry '" + item + "' is not key=value");
        kv[item.substr(0, eq)] = item.substr(eq + 1);
      }
    }
    auto take = [&](const std::string& key) -> std::optional<std::string> {
      auto it = kv.find(key);
      if (it == kv.end()) return std::nullopt;
      std::string v = it->second;
      kv.erase(it);
      return v;
    };
    auto finish = [&] {
      if (!kv.empty()) throw UsageError("unknown parameter '" + kv.begin()->first + "' for distribution " + dist_);
    };
    if (dist_ == "mixed-gaussian") {
      MixedGaussianDist m;
      if (auto v = take("mu")) m.mu = parse_number(*v, "--params mu");
      if (auto v = take("sigma")) m.sigma = parse_number(*v, "--params sigma");
      finish();
      echo = {{"mu", m.mu}, {"sigma", m.sigma}};
      return m;
    }
    if (dist_ == "chi-squared") {
      ChiSquaredDist c;
      if (auto v = take("df")) c.df = parse_number(*v, "--params df");
      if (auto v = take("dim")) c.dim = parse_int(*v, "--params dim");
      finish();
      echo = {{"df", c.df}, {"dim", c.dim}};
      return c;
    }
    if (dist_ == "gaussian" || dist_ == "log-normal") {
      Vector mean = Vector::Zero(2);
      Matrix cov(2, 2);
      if (dist_ == "gaussian") cov << 1.0, 0.8, 0.8, 2.0;
      else cov << 1.0, 0.5, 0.5, 1.0;
      if (auto v = take("mean")) {
        const auto m = parse_vector(*v, "mean");
        mean = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
        if (!kv.count("cov")) cov = Matrix::Identity(mean.size(), mean.size());
      }
      if (auto v = take("cov")) {
        const auto c = parse_vector(*v, "cov");
        const auto p = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(c.size()))));
        if (p * p != static_cast<Eigen::Index>(c.size())) throw UsageError("--params cov needs p*p entries");
        cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(c.data(), p, p);
        if (mean.size() != p) mean = Vector::Zero(p);
      }
      finish();
      echo = {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())}, {"cov", matrix_json(cov)}};
      if (dist_ == "gaussian") return GaussianDist{mean, cov};
      return LogNormalDist{mean, cov};
    }
    throw UsageError("unknown distribution '" + dist_ + "'");
  }

  void cmd_simulate() {
    json params;
    const BenchmarkDistribution dist = make_distribution(params);
    SimulationConfig sc;
    sc.sizes = parse_int_list(sizes_, "--sizes");
    sc.replicates = replicates_;
    sc.methods.clear();
    for (const auto& m : split(methods_, ',')) sc.methods.push_back(parse_sim_method(m));
    sc.fit = fit_.config();
    sc.seed = fit_.seed;
    const SimulationResult r = run_simulation(dist, sc);

    std::ostringstream csv;
    csv << "dist,method,n,replicate,estimate,true_value\n";
    for (const auto& e : r.estimates) {
      csv << r.distribution << ',' << sim_method_name(e.method) << ',' << e.n << ',' << e.replicate << ','
          << (e.estimate ? io::format_double(*e.estimate) : std::string()) << ',' << io::format_double(r.true_value)
          << '\n';
    }

    json cj = config_json(sc.fit);
    cj["dist"] = dist_;
    cj["params"] = params;
    cj["sizes"] = sc.sizes;
    cj["replicates"] = sc.replicates;
    json methods = json::array();
    for (auto m : sc.methods) methods.push_back(sim_method_name(m));
    cj["methods"] = methods;
    json j = provenance(sc.seed, cj);
    j["distribution"] = r.distribution;
    j["true_value"] = r.true_value;
    json rows = json::array();
    for (const auto& s : r.summary) {
      rows.push_back({{"method", sim_method_name(s.method)},
                      {"n", s.n},
                      {"mean", s.mean},
                      {"p025", s.p025},
                      {"p975", s.p975},
                      {"mse", s.mse},
                      {"n_ok", s.n_ok},
                      {"n_failed", s.n_failed}});
    }
    j["summary"] = rows;
    if (output_.empty()) {
      emit(csv.str(), "");
      return;
    }
    io::write_text(output_ + ".csv", csv.str());
    io::write_text(output_ + ".json", dump(j));
  }

  void setup_image(CLI::App& app) {
    auto* c = app.add_subcommand("image", "Grey-level quantization by a 1-D Gaussian mixture");
    c->add_option("image", input_, "PGM file (P2 or P5)")->required();
    auto* k = c->add_option("--k", image_k_, "Number of components for segmentation");
    auto* curve = c->add_option("--curve", curve_k_, "Largest K of the entropy curve");
    k->excludes(curve);
    c->add_option("-o,--output", output_,
                  "Output prefix: --k writes PREFIX.pgm and PREFIX.json; --curve writes PREFIX.csv and PREFIX.json");
    fit_.add_to(c);
    c->callback([this, k, curve] {
      if (k->count() == 0 && curve->count() == 0) throw CLI::ValidationError("one of --k or --curve is required");
      if (k->count() && image_k_ < 1) throw CLI::ValidationError("--k", "must be at least 1");
      if (curve->count() && curve_k_ < 2) throw CLI::ValidationError("--curve", "must be at least 2");
      action_ = [this, use_k = k->count() > 0] { cmd_image(use_k); };
    });
  }

  void cmd_image(bool use_k) {
    const FitConfig cfg = fit_.config();
    const GrayImage img = read_pgm_file(input_);
    json cj = config_json(cfg);
    cj["k"] = use_k ? json(image_k_) : json(nullptr);
    cj["curve"] = use_k ? json(nullptr) : json(curve_k_);
    json j = provenance(cfg.seed, cj);
    j["input"] = input_;
    j["width"] = img.width;
    j["height"] = img.height;
    j["empirical_entropy"] = empirical_entropy(img);
    if (use_k) {
      const SegmentationResult r = quantize(img, image_k_, cfg);
      j["k"] = r.k;
      j["palette"] = r.component_means;
      j["gmm_entropy"] = r.gmm_entropy;
      j["ssim"] = r.ssim_vs_original;
      j["original_kb"] = r.compression.original_kb;
      j["payload_kb"] = r.compression.payload_kb;
      j["size_kb"] = r.compression.size_kb;
      j["compression_rate"] = r.compression.compression_rate;
      if (!output_.empty()) {
        write_pgm_file(r.segmented, output_ + ".pgm");
        io::write_text(output_ + ".json", dump(j));
      } else {
        emit(dump(j), "");
      }
      return;
    }
    const EntropyCurve c = entropy_curve(img, curve_k_, cfg);
    std::ostringstream csv;
    csv << "k,gmm_entropy\n";
    json pts = json::array();
    for (const auto& p : c.points) {
      csv << p.k << ',' << (p.entropy ? io::format_double(*p.entropy) : std::string()) << '\n';
      json pj{{"k", p.k}, {"gmm_entropy", p.entropy ? json(*p.entropy) : json(nullptr)}};
      if (!p.error.empty()) pj["error"] = p.error;
      pts.push_back(pj);
    }
    j["curve"] = pts;
    j["first_local_min"] = c.first_local_min ? json(*c.first_local_min) : json(nullptr);
    j["global_min"] = c.global_min ? json(*c.global_min) : json(nullptr);
    if (!output_.empty()) {
      io::write_text(output_ + ".csv", csv.str());
      io::write_text(output_ + ".json", dump(j));
    } else {
      emit(dump(j), "");
    }
  }

  std::ostream& out_;
  std::ostream& err_;
  std::function<void()> action_;

  FitOptions fit_;
  std::string input_;
  std::string output_;
  std::string method_ = "gmm";
  std::string bounded_;
  std::string format_ = "text";
  std::string mode_ = "gmm";
  std::vector<int> cols_;
  long mc_samples_ = 100000;
  bool bits_ = false;

  std::string dist_;
  std::string params_;
  std::string sizes_ = "100,1000,10000";
  int replicates_ = 100;
  std::string methods_ = "gmm";

  int image_k_ = 0;
  int curve_k_ = 0;
};

/// Runs the command line; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return Runner(out, err).run(argc, argv);
}

}  // namespace mixent::cli
