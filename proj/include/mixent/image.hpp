#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mixent/entropy.hpp"
#include "mixent/error.hpp"
#include "mixent/mixture.hpp"
#include "mixent/random.hpp"

namespace mixent {

/// PGM input that is well formed but not a variant we read (P6, maxval > 255).
class UnsupportedFormat : public DataError {
 public:
  using DataError::DataError;
};

/// PGM input that cannot be parsed (bad header, truncated payload).
class MalformedImage : public DataError {
 public:
  using DataError::DataError;
};

/// 8-bit grey-level image, pixels row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::vector<std::uint8_t> px, int max = 255)
      : width(w), height(h), maxval(max), pixels(std::move(px)) {
    if (w < 1 || h < 1) throw UsageError("image dimensions must be positive");
    if (pixels.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {
      throw UsageError("pixel count " + std::to_string(pixels.size()) + " does not match " + std::to_string(w) + "x" +
                       std::to_string(h));
    }
    if (max < 1 || max > 255) throw UsageError("maxval must be in 1..255");
  }

  std::size_t size() const { return pixels.size(); }
  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
  }
  bool operator==(const GrayImage&) const = default;
};

namespace detail {

class PgmReader {
 public:
  explicit PgmReader(std::string_view bytes) : s_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n' && s_[pos_] != '\r') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long header_int(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      v = v * 10 + (s_[pos_] - '0');
      if (v > 1'000'000'000L) throw MalformedImage(std::string("PGM ") + what + " is too large");
      ++pos_;
    }
    if (pos_ == start) {
      throw MalformedImage(pos_ >= s_.size() ? std::string("PGM header ends before ") + what
                                             : std::string("PGM ") + what + " is not a number");
    }
    return v;
  }

  std::size_t& pos() { return pos_; }
  std::string_view bytes() const { return s_; }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses binary (P5) or ASCII (P2) PGM with maxval at most 255.
inline GrayImage read_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw MalformedImage("not a PGM file (missing 'P' magic)");
  const char kind = bytes[1];
  if (kind != '2' && kind != '5') {
    throw UnsupportedFormat(std::string("unsupported image format P") + kind + " (only P2 and P5 greymaps)");
  }
  detail::PgmReader r(bytes);
  r.pos() = 2;
  if (r.pos() < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[r.pos()])) && bytes[r.pos()] != '#') {
    throw MalformedImage("PGM magic must be followed by whitespace");
  }
  const long w = r.header_int("width");
  const long h = r.header_int("height");
  const long maxval = r.header_int("maxval");
  if (w < 1 || h < 1) throw MalformedImage("PGM dimensions must be positive");
  if (maxval < 1) throw MalformedImage("PGM maxval must be positive");
  if (maxval > 255) throw UnsupportedFormat("PGM maxval " + std::to_string(maxval) + " exceeds 255");
  const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  std::vector<std::uint8_t> px(count);

  if (kind == '5') {
    if (r.pos() >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos()]))) {
      throw MalformedImage("PGM header must end with a single whitespace byte");
    }
    ++r.pos();
    if (bytes.size() - r.pos() < count) {
      throw MalformedImage("PGM payload truncated: expected " + std::to_string(count) + " bytes, found " +
                           std::to_string(bytes.size() - r.pos()));
    }
    for (std::size_t i = 0; i < count; ++i) {
      px[i] = static_cast<std::uint8_t>(bytes[r.pos() + i]);
      if (px[i] > maxval) throw MalformedImage("pixel " + std::to_string(i) + " exceeds maxval");
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      r.skip_space_and_comments();
      if (r.pos() >= bytes.size()) {
        throw MalformedImage("PGM payload truncated: expected " + std::to_string(count) + " values, found " +
                             std::to_string(i));
      }
      const long v = r.header_int("pixel value");
      if (v > maxval) throw MalformedImage("pixel " + std::to_string(i) + " exceeds maxval");
      px[i] = static_cast<std::uint8_t>(v);
    }
  }
  return GrayImage(static_cast<int>(w), static_cast<int>(h), std::move(px), static_cast<int>(maxval));
}

/// Binary P5 encoding.
inline std::string write_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
                    std::to_string(img.maxval) + "\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

inline GrayImage read_pgm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return read_pgm(ss.str());
}

inline void write_pgm_file(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image file '" + path + "'");
  const std::string bytes = write_pgm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Shannon entropy (nats) of the 256-bin grey-level histogram.
inline double empirical_entropy(const GrayImage& img) {
  std::vector<double> count(256, 0.0);
  for (auto v : img.pixels) count[v] += 1.0;
  const double n = static_cast<double>(img.size());
  double h = 0.0;
  for (double c : count)
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  return h;
}

/// Mean local SSIM over all 8x8 windows at stride 1 (the window shrinks to the
/// image when a side is shorter than 8). Window statistics use 1/N moments.
inline double ssim(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height) {
    throw UsageError("SSIM needs equal dimensions, got " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                     " and " + std::to_string(b.width) + "x" + std::to_string(b.height));
  }
  constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  const int w = a.width, h = a.height;
  const int ww = std::min(8, w), wh = std::min(8, h);
  // Summed-area tables; all sums are integers below 2^53, so they are exact.
  const std::size_t stride = static_cast<std::size_t>(w) + 1;
  std::vector<double> sa(stride * (h + 1), 0.0), sb = sa, saa = sa, sbb = sa, sab = sa;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double va = a.at(x, y), vb = b.at(x, y);
      const std::size_t i = (y + 1) * stride + (x + 1), up = y * stride + (x + 1), left = (y + 1) * stride + x,
                        diag = y * stride + x;
      sa[i] = va + sa[up] + sa[left] - sa[diag];
      sb[i] = vb + sb[up] + sb[left] - sb[diag];
      saa[i] = va * va + saa[up] + saa[left] - saa[diag];
      sbb[i] = vb * vb + sbb[up] + sbb[left] - sbb[diag];
      sab[i] = va * vb + sab[up] + sab[left] - sab[diag];
    }
  }
  auto box = [&](const std::vector<double>& s, int x, int y) {
    const std::size_t x1 = x + ww, y1 = y + wh;
    return s[y1 * stride + x1] - s[y * stride + x1] - s[y1 * stride + x] + s[y * stride + x];
  };
  const double n = static_cast<double>(ww) * wh;
  double total = 0.0;
  long windows = 0;
  for (int y = 0; y + wh <= h; ++y) {
    for (int x = 0; x + ww <= w; ++x) {
      const double ma = box(sa, x, y) / n, mb = box(sb, x, y) / n;
      const double va = box(saa, x, y) / n - ma * ma;
      const double vb = box(sbb, x, y) / n - mb * mb;
      const double cov = box(sab, x, y) / n - ma * mb;
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

/// Bits needed per pixel for a k-entry palette index: ceil(log2 k).
inline int index_bits(int k) {
  if (k < 1) throw UsageError("palette size must be at least 1");
  int bits = 0;
  while ((1L << bits) < k) ++bits;
  return bits;
}

/// Sizes in kilobits (1 kb = 1024 bits). The segmented image costs
/// ceil(log2 K) bits per pixel plus an 8-bit palette entry per component.
struct CompressionStats {
  double original_kb = 0.0;
  double payload_kb = 0.0;  // pixel indices only
  double size_kb = 0.0;     // pixel indices plus palette
  double compression_rate = 0.0;
};

inline CompressionStats compression_stats(int width, int height, int k) {
  if (width < 1 || height < 1) throw UsageError("image dimensions must be positive");
  const double pixels = static_cast<double>(width) * height;
  CompressionStats s;
  s.original_kb = pixels * 8.0 / 1024.0;
  s.payload_kb = pixels * index_bits(k) / 1024.0;
  s.size_kb = s.payload_kb + 8.0 * k / 1024.0;
  s.compression_rate = s.original_kb / s.size_kb;
  return s;
}

struct SegmentationResult {
  int k = 0;
  std::vector<int> labels;
  std::vector<int> component_means;  // rounded, one palette entry per component
  GrayImage segmented;
  double gmm_entropy = 0.0;
  double empirical_entropy = 0.0;  // of the original image
  double ssim_vs_original = 0.0;
  CompressionStats compression;
  std::optional<MixtureModel> model;
};

inline CompressionStats compression_stats(const GrayImage& original, const SegmentationResult& seg) {
  return compression_stats(original.width, original.height, seg.k);
}

/// Intensities as an n x 1 column, dithered by U(-0.5, 0.5) from seed.
inline DataMatrix jittered_intensities(const GrayImage& img, std::uint64_t seed) {
  Rng rng = make_rng(split_seed(seed, {0x6a}));
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  DataMatrix d(static_cast<Eigen::Index>(img.size()), 1);
  for (std::size_t i = 0; i < img.size(); ++i) d(static_cast<Eigen::Index>(i), 0) = img.pixels[i] + u(rng);
  return d;
}

/// Fits a K-component unequal-variance 1-D GMM to the dithered grey levels and
/// maps each pixel to the rounded mean of its most responsible component.
inline SegmentationResult quantize(const GrayImage& img, int k, const FitConfig& config) {
  if (k < 1) throw UsageError("number of components must be at least 1");
  if (img.size() == 0) throw UsageError("empty image");
  std::vector<bool> seen(256, false);
  int distinct = 0;
  for (auto v : img.pixels)
    if (!seen[v]) {
      seen[v] = true;
      ++distinct;
    }
  if (distinct < k) {
    throw NumericalError("image has " + std::to_string(distinct) + " distinct grey levels, fewer than K=" +
                         std::to_string(k));
  }

  const DataMatrix data = jittered_intensities(img, config.seed);
  const MixtureModel model = fit_em(data, k, CovarianceFamily::FullVarying, config);

  SegmentationResult r;
  r.k = k;
  r.model = model;
  r.gmm_entropy = entropy_gmm(data, model).value;
  r.empirical_entropy = empirical_entropy(img);
  for (const auto& c : model.components())
    r.component_means.push_back(static_cast<int>(std::clamp(std::round(c.mean()(0)), 0.0, 255.0)));

  // Label each grey level once, from the undithered intensity.
  DataMatrix levels(256, 1);
  for (int v = 0; v < 256; ++v) levels(v, 0) = v;
  const Matrix lj = model.log_joint_rows(levels);
  std::vector<int> level_label(256);
  for (int v = 0; v < 256; ++v) {
    Eigen::Index arg = 0;
    lj.row(v).maxCoeff(&arg);
    level_label[static_cast<std::size_t>(v)] = static_cast<int>(arg);
  }
  r.labels.resize(img.size());
  std::vector<std::uint8_t> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    r.labels[i] = level_label[img.pixels[i]];
    out[i] = static_cast<std::uint8_t>(r.component_means[static_cast<std::size_t>(r.labels[i])]);
  }
  r.segmented = GrayImage(img.width, img.height, std::move(out), 255);
  r.ssim_vs_original = ssim(img, r.segmented);
  r.compression = compression_stats(img.width, img.height, k);
  return r;
}

struct CurvePoint {
  int k = 0;
  std::optional<double> entropy;
  std::string error;
};

struct EntropyCurve {
  std::vector<CurvePoint> points;
  std::optional<int> first_local_min;  // K value
  std::optional<int> global_min;       // K value
};

/// K values (1-based positions) of the first strict interior local minimum and
/// the global minimum of a sequence with possible gaps. A local minimum needs
/// both neighbours present. Ties for the global minimum go to the smaller K.
inline std::pair<std::optional<int>, std::optional<int>> find_minima(const std::vector<std::optional<double>>& v) {
  std::optional<int> first_local, global;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i]) continue;
    if (!global || *v[i] < *v[static_cast<std::size_t>(*global - 1)]) global = static_cast<int>(i) + 1;
    if (!first_local && i > 0 && i + 1 < v.size() && v[i - 1] && v[i + 1] && *v[i] < *v[i - 1] &&
        *v[i] < *v[i + 1]) {
      first_local = static_cast<int>(i) + 1;
    }
  }
  return {first_local, global};
}

/// GMM entropy of the grey levels for K = 1..k_max. Failed K are gaps.
inline EntropyCurve entropy_curve(const GrayImage& img, int k_max, const FitConfig& config) {
  if (k_max < 2) throw UsageError("entropy curve needs k_max >= 2");
  EntropyCurve c;
  c.points.resize(static_cast<std::size_t>(k_max));
  parallel_for(static_cast<std::size_t>(k_max), [&](std::size_t i) {
    CurvePoint& p = c.points[i];
    p.k = static_cast<int>(i) + 1;
    try {
      p.entropy = quantize(img, p.k, config).gmm_entropy;
    } catch (const Error& e) {
      p.error = e.what();
    }
  });
  std::vector<std::optional<double>> v;
  for (const auto& p : c.points) v.push_back(p.entropy);
  std::tie(c.first_local_min, c.global_min) = find_minima(v);
  return c;
}

}  // namespace mixent
