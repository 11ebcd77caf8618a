#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "mixent/image.hpp"

using namespace mixent;

namespace {

FitConfig image_config() {
  FitConfig c;
  c.n_init = 2;
  c.tol = 1e-7;
  return c;
}

GrayImage two_valued(int w, int h) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) px[static_cast<std::size_t>(y * w + x)] = ((x / 4 + y / 4) % 2 == 0) ? 50 : 200;
  return GrayImage(w, h, px);
}

GrayImage random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, 255);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h));
  for (auto& p : px) p = static_cast<std::uint8_t>(u(rng));
  return GrayImage(w, h, px);
}

// Three grey-level clusters with noise, as a smooth-ish test scene.
GrayImage three_level_scene(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 6.0);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double base = x < w / 3 ? 40.0 : (x < 2 * w / 3 ? 120.0 : 210.0);
      px[static_cast<std::size_t>(y * w + x)] = static_cast<std::uint8_t>(std::clamp(std::round(base + z(rng)), 0.0, 255.0));
    }
  }
  return GrayImage(w, h, px);
}

// Direct single-window SSIM for an 8x8 pair.
double ssim_direct_8x8(const GrayImage& a, const GrayImage& b) {
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    ma += a.pixels[i];
    mb += b.pixels[i];
  }
  ma /= 64;
  mb /= 64;
  double va = 0, vb = 0, cov = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    va += (a.pixels[i] - ma) * (a.pixels[i] - ma);
    vb += (b.pixels[i] - mb) * (b.pixels[i] - mb);
    cov += (a.pixels[i] - ma) * (b.pixels[i] - mb);
  }
  va /= 64;
  vb /= 64;
  cov /= 64;
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [it1, new1] = ab.emplace(a[i], b[i]);
    auto [it2, new2] = ba.emplace(b[i], a[i]);
    if (it1->second != b[i] || it2->second != a[i]) return false;
  }
  return true;
}

}  // namespace

TEST(Pgm, ReadsAsciiExample) {
  const GrayImage img = read_pgm("P2\n2 2\n255\n0 255 128 64\n");
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.height, 2);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 255, 128, 64}));
}

TEST(Pgm, SkipsComments) {
  const GrayImage img = read_pgm("P2 # comment\n# another\n3 1 # dims\n10\n1 2\n3\n");
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{1, 2, 3}));
  EXPECT_EQ(img.maxval, 10);
}

TEST(Pgm, BinaryRoundTrip) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const GrayImage img = random_image(7 + static_cast<int>(seed), 5, seed);
    const std::string bytes = write_pgm(img);
    EXPECT_EQ(bytes.substr(0, 2), "P5");
    EXPECT_EQ(read_pgm(bytes), img);
    EXPECT_EQ(write_pgm(read_pgm(bytes)), bytes);
  }
}

TEST(Pgm, StructuredErrors) {
  EXPECT_THROW(read_pgm("P6\n1 1\n255\nabc"), UnsupportedFormat);
  EXPECT_THROW(read_pgm("P5\n1 1\n65535\n\x01\x02"), UnsupportedFormat);
  EXPECT_THROW(read_pgm("P5\n2 2\n255\n\x01\x02"), MalformedImage);
  EXPECT_THROW(read_pgm("P2\n2 2\n255\n1 2 3"), MalformedImage);
  EXPECT_THROW(read_pgm("P2\nx 2\n255\n"), MalformedImage);
  EXPECT_THROW(read_pgm("JPEG"), MalformedImage);
  EXPECT_THROW(read_pgm("P2\n1 1\n10\n11"), MalformedImage);
  try {
    read_pgm("P6\n1 1\n255\nabc");
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
  }
}

TEST(Ssim, IdenticalImagesScoreOne) {
  const GrayImage img = random_image(20, 15, 1);
  EXPECT_DOUBLE_EQ(ssim(img, img), 1.0);
}

TEST(Ssim, SymmetricAndBounded) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const GrayImage a = random_image(16, 12, s), b = random_image(16, 12, s + 100);
    const double ab = ssim(a, b), ba = ssim(b, a);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_GE(ab, -1.0);
    EXPECT_LE(ab, 1.0);
  }
}

TEST(Ssim, InvertedHighContrastImageScoresLow) {
  std::vector<std::uint8_t> px(64), inv(64);
  for (std::size_t i = 0; i < 64; ++i) {
    px[i] = ((i % 8 + i / 8) % 2 == 0) ? 0 : 255;
    inv[i] = static_cast<std::uint8_t>(255 - px[i]);
  }
  const GrayImage a(8, 8, px), b(8, 8, inv);
  const double s = ssim(a, b);
  EXPECT_LT(s, 0.3);
  EXPECT_NEAR(s, ssim_direct_8x8(a, b), 1e-12);
}

TEST(Ssim, MatchesDirectWindowComputation) {
  const GrayImage a = random_image(8, 8, 3), b = random_image(8, 8, 4);
  EXPECT_NEAR(ssim(a, b), ssim_direct_8x8(a, b), 1e-12);
}

TEST(Ssim, RejectsDimensionMismatch) {
  EXPECT_THROW(ssim(random_image(8, 8, 1), random_image(8, 9, 1)), UsageError);
}

TEST(Compression, PaletteBitAccounting) {
  const CompressionStats k16 = compression_stats(512, 512, 16);
  EXPECT_DOUBLE_EQ(k16.original_kb, 2048.0);
  EXPECT_DOUBLE_EQ(k16.payload_kb, 1024.0);
  EXPECT_DOUBLE_EQ(k16.size_kb, 1024.0 + 128.0 / 1024.0);
  EXPECT_EQ(std::round(k16.compression_rate * 100.0) / 100.0, 2.00);

  const CompressionStats k6 = compression_stats(512, 512, 6);
  EXPECT_DOUBLE_EQ(k6.payload_kb, 768.0);
  EXPECT_NEAR(k6.compression_rate, 2.67, 0.005);

  const CompressionStats k1 = compression_stats(512, 512, 1);
  EXPECT_DOUBLE_EQ(k1.payload_kb, 0.0);
  EXPECT_DOUBLE_EQ(k1.compression_rate, 512.0 * 512.0 * 8.0 / 8.0);
  EXPECT_EQ(index_bits(1), 0);
  EXPECT_EQ(index_bits(2), 1);
  EXPECT_EQ(index_bits(17), 5);
}

TEST(EmpiricalEntropy, UniformAndConstant) {
  std::vector<std::uint8_t> all(256);
  for (int i = 0; i < 256; ++i) all[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
  EXPECT_NEAR(empirical_entropy(GrayImage(16, 16, all)), std::log(256.0), 1e-12);
  EXPECT_DOUBLE_EQ(empirical_entropy(GrayImage(4, 4, std::vector<std::uint8_t>(16, 9))), 0.0);
}

TEST(Quantize, ConstantImageSingleComponent) {
  const GrayImage img(16, 16, std::vector<std::uint8_t>(256, 77));
  const SegmentationResult r = quantize(img, 1, image_config());
  EXPECT_EQ(r.segmented, img);
  EXPECT_DOUBLE_EQ(r.ssim_vs_original, 1.0);
  EXPECT_EQ(std::set<int>(r.labels.begin(), r.labels.end()).size(), 1u);
  EXPECT_THROW(quantize(img, 2, image_config()), NumericalError);
  EXPECT_THROW(quantize(img, 0, image_config()), UsageError);
}

TEST(Quantize, TwoValuedImageIsRecoveredExactly) {
  const GrayImage img = two_valued(32, 32);
  const SegmentationResult r = quantize(img, 2, image_config());
  std::vector<int> means = r.component_means;
  std::sort(means.begin(), means.end());
  EXPECT_NEAR(means[0], 50, 1);
  EXPECT_NEAR(means[1], 200, 1);
  EXPECT_EQ(std::set<std::uint8_t>(r.segmented.pixels.begin(), r.segmented.pixels.end()).size(), 2u);
  EXPECT_EQ(r.segmented, img);
  EXPECT_DOUBLE_EQ(r.ssim_vs_original, 1.0);
  EXPECT_NEAR(r.empirical_entropy, std::log(2.0), 1e-12);
  for (int l : r.labels) {
    EXPECT_GE(l, 0);
    EXPECT_LT(l, 2);
  }
}

TEST(Quantize, LabelsAreIdempotentUpToPermutation) {
  const GrayImage img = three_level_scene(48, 24, 5);
  const SegmentationResult first = quantize(img, 3, image_config());
  const SegmentationResult again = quantize(first.segmented, 3, image_config());
  EXPECT_TRUE(same_partition(first.labels, again.labels));
}

TEST(Quantize, DeterministicInSeed) {
  const GrayImage img = three_level_scene(30, 20, 6);
  const SegmentationResult a = quantize(img, 3, image_config());
  const SegmentationResult b = quantize(img, 3, image_config());
  EXPECT_EQ(a.gmm_entropy, b.gmm_entropy);
  EXPECT_EQ(a.labels, b.labels);
}

TEST(EntropyCurve, MinimaOfSyntheticSequence) {
  const auto [local, global] = find_minima({5.3, 5.2, 5.25, 5.1});
  EXPECT_EQ(local, 2);
  EXPECT_EQ(global, 4);
  const auto [l2, g2] = find_minima({1.0, std::nullopt, 0.5, 0.7});
  EXPECT_FALSE(l2.has_value());
  EXPECT_EQ(g2, 3);
}

TEST(EntropyCurve, ConstantImageDefinedOnlyAtOne) {
  const GrayImage img(8, 8, std::vector<std::uint8_t>(64, 100));
  const EntropyCurve c = entropy_curve(img, 4, image_config());
  ASSERT_EQ(c.points.size(), 4u);
  EXPECT_TRUE(c.points[0].entropy.has_value());
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_FALSE(c.points[i].entropy.has_value());
    EXPECT_FALSE(c.points[i].error.empty());
  }
  EXPECT_EQ(c.global_min, 1);
  EXPECT_THROW(entropy_curve(img, 1, image_config()), UsageError);
}

TEST(EntropyCurve, SceneCurveStaysNearEmpiricalEntropy) {
  const GrayImage img = three_level_scene(48, 48, 7);
  const EntropyCurve c = entropy_curve(img, 5, image_config());
  const double emp = empirical_entropy(img);
  for (const auto& p : c.points) {
    ASSERT_TRUE(p.entropy.has_value()) << p.error;
    EXPECT_GT(*p.entropy, emp - 0.5);
  }
  ASSERT_TRUE(c.global_min.has_value());
  EXPECT_GE(*c.global_min, 3);
}
