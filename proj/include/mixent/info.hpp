#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mixent/entropy.hpp"
#include "mixent/error.hpp"
#include "mixent/gaussian.hpp"
#include "mixent/mixture.hpp"
#include "mixent/random.hpp"

namespace mixent {

// Seed streams: marginal entropy of column c uses split(seed, {0, c}); the
// joint entropy of columns (i, j), i < j, uses split(seed, {1, i, j}).
inline std::uint64_t marginal_seed(std::uint64_t seed, int col) {
  return split_seed(seed, {0, static_cast<std::uint64_t>(col)});
}
inline std::uint64_t joint_seed(std::uint64_t seed, int i, int j) {
  if (i > j) std::swap(i, j);
  return split_seed(seed, {1, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)});
}

/// GMM entropy of data, through the log map on any bounded coordinates.
inline EntropyEstimate entropy_select(const DataMatrix& data, const BoundedTransform& transform,
                                      const FitConfig& config) {
  if (transform.any()) return entropy_bounded_gmm(data, transform, config);
  return entropy_gmm(data, select_model(data, config));
}

struct MIEstimate {
  double value = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
  double h12 = 0.0;
};

struct MISeeds {
  std::uint64_t marginal1 = 0;
  std::uint64_t marginal2 = 0;
  std::uint64_t joint = 0;

  /// The seeds mi_matrix uses for columns (i, j).
  static MISeeds for_pair(std::uint64_t seed, int i, int j) {
    return {marginal_seed(seed, i), marginal_seed(seed, j), joint_seed(seed, i, j)};
  }
};

namespace detail {

inline void check_mi_sample(const DataMatrix& data) {
  if (data.rows() < 50) {
    throw UsageError("mutual information needs at least 50 observations, got " + std::to_string(data.rows()));
  }
}

/// Joint entropy of two columns with the columns put in a canonical order, so
/// the result does not depend on which column is passed first.
inline double joint_entropy(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b,
                            const std::optional<double>& la, const std::optional<double>& lb,
                            const FitConfig& config) {
  bool swap = false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) {
      swap = b(i) < a(i);
      break;
    }
  }
  if (!swap && la != lb && a == b) swap = lb < la;
  DataMatrix joint(a.size(), 2);
  joint.col(0) = swap ? b : a;
  joint.col(1) = swap ? a : b;
  const BoundedTransform t(swap ? std::vector<std::optional<double>>{lb, la}
                                : std::vector<std::optional<double>>{la, lb});
  return entropy_select(joint, t, config).value;
}

inline double column_entropy(const Eigen::Ref<const Vector>& col, const std::optional<double>& lower,
                             const FitConfig& config) {
  DataMatrix m(col.size(), 1);
  m.col(0) = col;
  return entropy_select(m, BoundedTransform({lower}), config).value;
}

/// Throws a DataError naming column index when a bounded column has a value
/// at or below its bound.
inline void check_bounded_column(const Eigen::Ref<const Vector>& col, const std::optional<double>& lower, int index) {
  if (!lower) return;
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    if (!(col(i) > *lower)) {
      throw DataError("column " + std::to_string(index) + " has value " + std::to_string(col(i)) + " at row " +
                      std::to_string(i) + " not above its lower bound " + std::to_string(*lower));
    }
  }
}

inline FitConfig with_seed(FitConfig c, std::uint64_t seed) {
  c.seed = seed;
  return c;
}

}  // namespace detail

/// MI(Y1, Y2) = H(Y1) + H(Y2) - H(Y1, Y2) from three BIC-selected GMM fits.
inline MIEstimate mutual_information(const DataMatrix& data, const FitConfig& config, const BoundedTransform& transform,
                                     const MISeeds& seeds) {
  if (data.cols() != 2) {
    throw UsageError("mutual information needs exactly two columns, got " + std::to_string(data.cols()));
  }
  if (transform.dim() != 2) throw UsageError("transform must cover both columns");
  detail::check_mi_sample(data);
  detail::check_finite_rows(data);
  for (int c = 0; c < 2; ++c) detail::check_bounded_column(data.col(c), transform.lower(c), c);
  MIEstimate out;
  out.h1 = detail::column_entropy(data.col(0), transform.lower(0), detail::with_seed(config, seeds.marginal1));
  out.h2 = detail::column_entropy(data.col(1), transform.lower(1), detail::with_seed(config, seeds.marginal2));
  out.h12 = detail::joint_entropy(data.col(0), data.col(1), transform.lower(0), transform.lower(1),
                                  detail::with_seed(config, seeds.joint));
  out.value = out.h1 + out.h2 - out.h12;
  return out;
}

inline MIEstimate mutual_information(const DataMatrix& data, const FitConfig& config,
                                     const BoundedTransform& transform) {
  return mutual_information(data, config, transform, MISeeds::for_pair(config.seed, 0, 1));
}

inline MIEstimate mutual_information(const DataMatrix& data, const FitConfig& config) {
  return mutual_information(data, config, BoundedTransform::identity(2));
}

/// -0.5 log(1 - r^2) for the sample correlation r of two columns.
inline double gaussian_mi(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  const Vector ca = a.array() - a.mean();
  const Vector cb = b.array() - b.mean();
  const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  if (!(denom > 0.0)) throw NumericalError("correlation undefined for a constant column");
  const double r = std::clamp(ca.dot(cb) / denom, -1.0, 1.0);
  const double mi = -0.5 * std::log1p(-r * r);
  if (!std::isfinite(mi)) throw NumericalError("columns are perfectly correlated");
  return mi;
}

enum class MIMode { GMM, Bounded, Gaussian };

inline std::string_view mi_mode_name(MIMode m) {
  switch (m) {
    case MIMode::GMM: return "gmm";
    case MIMode::Bounded: return "bounded";
    case MIMode::Gaussian: return "gaussian";
  }
  return "unknown";
}

inline MIMode parse_mi_mode(std::string_view name) {
  for (auto m : {MIMode::GMM, MIMode::Bounded, MIMode::Gaussian})
    if (mi_mode_name(m) == name) return m;
  throw UsageError("unknown MI mode '" + std::string(name) + "' (expected gmm, bounded or gaussian)");
}

/// Symmetric pairwise MI table with a zero diagonal. Cells whose estimate
/// failed are missing and carry the reason.
class MIMatrix {
 public:
  MIMatrix() = default;
  MIMatrix(int d, MIMode mode) : mode_(mode), values_(Matrix::Zero(d, d)), errors_(static_cast<std::size_t>(d * d)) {}

  int dim() const { return static_cast<int>(values_.rows()); }
  MIMode mode() const { return mode_; }
  const Matrix& values() const { return values_; }
  double operator()(int i, int j) const { return values_(i, j); }
  bool missing(int i, int j) const { return !error(i, j).empty(); }
  const std::string& error(int i, int j) const { return errors_.at(index(i, j)); }
  bool complete() const {
    return std::all_of(errors_.begin(), errors_.end(), [](const std::string& e) { return e.empty(); });
  }

  void set(int i, int j, double v) {
    values_(i, j) = values_(j, i) = v;
    errors_[index(i, j)].clear();
    errors_[index(j, i)].clear();
  }
  void set_missing(int i, int j, const std::string& why) {
    values_(i, j) = values_(j, i) = std::numeric_limits<double>::quiet_NaN();
    errors_[index(i, j)] = errors_[index(j, i)] = why.empty() ? "unknown failure" : why;
  }

 private:
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i * dim() + j); }

  MIMode mode_ = MIMode::GMM;
  Matrix values_;
  std::vector<std::string> errors_;
};

/// All pairwise MIs. GMM and bounded modes fit each marginal once and each pair
/// once; bounded mode log-maps the coordinates flagged in transform (all of
/// them when transform is empty). Gaussian mode uses sample correlations.
inline MIMatrix mi_matrix(const DataMatrix& data, MIMode mode, const FitConfig& config,
                          std::optional<BoundedTransform> transform = std::nullopt) {
  const int d = static_cast<int>(data.cols());
  if (d < 2) throw UsageError("MI matrix needs at least two columns, got " + std::to_string(d));
  detail::check_finite_rows(data);
  MIMatrix out(d, mode);

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) pairs.emplace_back(i, j);

  if (mode == MIMode::Gaussian) {
    for (auto [i, j] : pairs) {
      try {
        out.set(i, j, gaussian_mi(data.col(i), data.col(j)));
      } catch (const Error& e) {
        out.set_missing(i, j, e.what());
      }
    }
    return out;
  }

  detail::check_mi_sample(data);
  config.validate();
  BoundedTransform t = BoundedTransform::identity(d);
  if (mode == MIMode::Bounded) t = transform ? *transform : BoundedTransform::all_bounded(d);
  if (t.dim() != d) throw UsageError("transform has " + std::to_string(t.dim()) + " coordinates, data has " +
                                     std::to_string(d));

  std::vector<std::optional<double>> h(static_cast<std::size_t>(d));
  std::vector<std::string> h_err(static_cast<std::size_t>(d));
  parallel_for(static_cast<std::size_t>(d), [&](std::size_t c) {
    const int col = static_cast<int>(c);
    try {
      detail::check_bounded_column(data.col(col), t.lower(col), col);
      h[c] = detail::column_entropy(data.col(col), t.lower(col),
                                    detail::with_seed(config, marginal_seed(config.seed, col)));
    } catch (const Error& e) {
      h_err[c] = e.what();
    }
  });

  std::vector<std::optional<double>> hj(pairs.size());
  std::vector<std::string> hj_err(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    if (!h[static_cast<std::size_t>(i)] || !h[static_cast<std::size_t>(j)]) return;
    try {
      hj[p] = detail::joint_entropy(data.col(i), data.col(j), t.lower(i), t.lower(j),
                                    detail::with_seed(config, joint_seed(config.seed, i, j)));
    } catch (const Error& e) {
      hj_err[p] = e.what();
    }
  });

  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
    if (!h[ui]) out.set_missing(i, j, "marginal " + std::to_string(i) + ": " + h_err[ui]);
    else if (!h[uj]) out.set_missing(i, j, "marginal " + std::to_string(j) + ": " + h_err[uj]);
    else if (!hj[p]) out.set_missing(i, j, "joint: " + hj_err[p]);
    else out.set(i, j, *h[ui] + *h[uj] - *hj[p]);
  }
  return out;
}

struct TreeEdge {
  int i = 0;
  int j = 0;
  double weight = 0.0;  // MI clamped at zero
  double mi = 0.0;      // raw MI estimate
};

struct Tree {
  std::vector<std::string> labels;
  std::vector<TreeEdge> edges;

  double total_weight() const {
    double s = 0.0;
    for (const auto& e : edges) s += e.weight;
    return s;
  }
};

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(static_cast<std::size_t>(n)), rank_(static_cast<std::size_t>(n), 0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int x) {
    while (parent_[static_cast<std::size_t>(x)] != x) {
      auto& px = parent_[static_cast<std::size_t>(x)];
      px = parent_[static_cast<std::size_t>(px)];
      x = px;
    }
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    auto ra = rank_[static_cast<std::size_t>(a)], rb = rank_[static_cast<std::size_t>(b)];
    if (ra < rb) std::swap(a, b);
    parent_[static_cast<std::size_t>(b)] = a;
    if (ra == rb) ++rank_[static_cast<std::size_t>(a)];
    return true;
  }

 private:
  std::vector<int> parent_;
  std::vector<int> rank_;
};

/// True when edges form a spanning tree on d vertices.
inline bool is_spanning_tree(int d, const std::vector<TreeEdge>& edges) {
  if (static_cast<int>(edges.size()) != d - 1) return false;
  UnionFind uf(d);
  for (const auto& e : edges) {
    if (e.i < 0 || e.j < 0 || e.i >= d || e.j >= d || !uf.unite(e.i, e.j)) return false;
  }
  return true;
}

/// Maximum spanning tree by Kruskal with union-find. Negative MIs count as
/// zero; equal weights are taken in lexicographic (i, j) order.
inline Tree max_spanning_tree(const MIMatrix& m, std::vector<std::string> labels = {}) {
  const int d = m.dim();
  if (d < 2) throw UsageError("spanning tree needs at least two variables");
  if (labels.empty()) {
    for (int i = 0; i < d; ++i) labels.push_back("X" + std::to_string(i + 1));
  }
  if (static_cast<int>(labels.size()) != d) throw UsageError("label count does not match matrix dimension");
  std::vector<TreeEdge> cand;
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      if (m.missing(i, j)) {
        throw DataError("MI cell (" + labels[static_cast<std::size_t>(i)] + ", " + labels[static_cast<std::size_t>(j)] +
                        ") is missing: " + m.error(i, j));
      }
      const double v = m(i, j);
      if (!std::isfinite(v)) throw DataError("MI cell (" + std::to_string(i) + ", " + std::to_string(j) + ") is not finite");
      cand.push_back({i, j, std::max(v, 0.0), v});
    }
  }
  std::stable_sort(cand.begin(), cand.end(), [](const TreeEdge& a, const TreeEdge& b) { return a.weight > b.weight; });
  Tree t;
  t.labels = std::move(labels);
  UnionFind uf(d);
  for (const auto& e : cand) {
    if (uf.unite(e.i, e.j)) t.edges.push_back(e);
    if (static_cast<int>(t.edges.size()) == d - 1) break;
  }
  return t;
}

namespace detail {
inline std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}
}  // namespace detail

/// Undirected DOT graph with MI edge labels.
inline std::string to_dot(const Tree& t, int precision = 4) {
  std::ostringstream os;
  os << "graph chow_liu {\n";
  for (const auto& l : t.labels) os << "  " << detail::dot_quote(l) << ";\n";
  os.setf(std::ios::fixed);
  os.precision(precision);
  for (const auto& e : t.edges) {
    os << "  " << detail::dot_quote(t.labels[static_cast<std::size_t>(e.i)]) << " -- "
       << detail::dot_quote(t.labels[static_cast<std::size_t>(e.j)]) << " [label=\"" << e.mi << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace mixent
