#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gelsim/error.hpp"
#include "gelsim/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gelsim;

TEST(ImageMetrics, IdenticalImages) {
  std::mt19937_64 rng(1);
  const auto img = test::random_image(40, 50, rng);
  const auto m = image_metrics(img, img);
  EXPECT_EQ(m.l1, 0.0);
  EXPECT_EQ(m.mse, 0.0);
  EXPECT_NEAR(m.ssim, 1.0, 1e-12);
  EXPECT_TRUE(std::isinf(m.psnr));
  EXPECT_GT(m.psnr, 0);
}

TEST(ImageMetrics, BlackAgainstWhite) {
  const ImageRgb black(32, 32, Rgb{0, 0, 0}), white(32, 32, Rgb{255, 255, 255});
  const auto m = image_metrics(black, white);
  EXPECT_DOUBLE_EQ(m.l1, 255.0);
  EXPECT_DOUBLE_EQ(m.mse, 65025.0);
  EXPECT_NEAR(m.psnr, 0.0, 1e-12);
  // Constant images: SSIM reduces to the luminance term with zero variance.
  const double c1 = std::pow(0.01 * 255, 2);
  EXPECT_NEAR(m.ssim, c1 / (255.0 * 255.0 + c1), 1e-12);
}

TEST(ImageMetrics, ConstantOffsetClosedForm) {
  const ImageRgb a(20, 30, Rgb{100, 100, 100}), b(20, 30, Rgb{110, 110, 110});
  const auto m = image_metrics(a, b);
  EXPECT_DOUBLE_EQ(m.l1, 10.0);
  EXPECT_DOUBLE_EQ(m.mse, 100.0);
  EXPECT_NEAR(m.psnr, 10 * std::log10(255.0 * 255.0 / 100.0), 1e-12);
}

TEST(ImageMetrics, CheckerboardAgainstInverse) {
  ImageRgb a(24, 24), b(24, 24);
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < 24; ++c) {
      const float v = ((r + c) % 2) ? 255.f : 0.f;
      a(r, c) = {v, v, v};
      b(r, c) = {255.f - v, 255.f - v, 255.f - v};
    }
  const auto m = image_metrics(a, b);
  const auto o = test::brute_force_metrics(a, b);
  EXPECT_DOUBLE_EQ(m.l1, 255.0);
  EXPECT_LT(m.ssim, 0.0);
  EXPECT_TRUE(test::close_rel(m.ssim, o.ssim, 1e-9));
}

TEST(ImageMetrics, MatchesBruteForceOnRandomPairs) {
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 10; ++k) {
    const auto a = test::random_image(32, 32, rng);
    auto b = a;
    std::normal_distribution<float> noise(0.f, 10.f + 5.f * k);
    for (auto& px : b.values())
      for (int ch = 0; ch < 3; ++ch) px[ch] = std::clamp(std::round(px[ch] + noise(rng)), 0.f, 255.f);
    const auto m = image_metrics(a, b);
    const auto o = test::brute_force_metrics(a, b);
    EXPECT_TRUE(test::close_rel(m.l1, o.l1, 1e-9));
    EXPECT_TRUE(test::close_rel(m.mse, o.mse, 1e-9));
    EXPECT_TRUE(test::close_rel(m.psnr, o.psnr, 1e-9));
    EXPECT_TRUE(test::close_rel(m.ssim, o.ssim, 1e-9)) << m.ssim << " vs " << o.ssim;
  }
}

TEST(ImageMetrics, SymmetricAndBounded) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 5; ++k) {
    const auto a = test::random_image(20, 25, rng), b = test::random_image(20, 25, rng);
    const auto ab = image_metrics(a, b), ba = image_metrics(b, a);
    EXPECT_DOUBLE_EQ(ab.l1, ba.l1);
    EXPECT_DOUBLE_EQ(ab.mse, ba.mse);
    EXPECT_NEAR(ab.ssim, ba.ssim, 1e-12);
    EXPECT_GE(ab.ssim, -1.0);
    EXPECT_LE(ab.ssim, 1.0);
  }
}

TEST(ImageMetrics, CropRestrictsTheRegion) {
  std::mt19937_64 rng(6);
  const auto a = test::random_image(60, 80, rng);
  auto b = a;
  for (int r = 0; r < 60; ++r) b(r, 0) = {0, 0, 0};  // differ only outside the crop
  const CropRect crop{10, 5, 40, 30};
  const auto m = image_metrics(a, b, crop);
  EXPECT_EQ(m.l1, 0.0);
  EXPECT_GT(image_metrics(a, b).l1, 0.0);
  const auto ca = crop_image(a, crop);
  EXPECT_EQ(ca.rows(), 30);
  EXPECT_EQ(ca.cols(), 40);
  EXPECT_EQ(ca(0, 0), a(5, 10));
  EXPECT_THROW(image_metrics(a, b, CropRect{50, 0, 40, 30}), RangeError);
}

TEST(ImageMetrics, ShapeErrors) {
  EXPECT_THROW(image_metrics(ImageRgb(20, 20), ImageRgb(20, 21)), DomainError);
  EXPECT_THROW(image_metrics(ImageRgb(10, 20), ImageRgb(10, 20)), DomainError);
}

namespace {

MarkerField field_of(const std::vector<Vec3d>& u) {
  MarkerField f;
  for (std::size_t i = 0; i < u.size(); ++i) {
    f.positions.emplace_back(0.5 * i, 0.0);
    f.displacement.push_back(u[i]);
  }
  return f;
}

}  // namespace

TEST(MarkerErrors, IdenticalFields) {
  const auto f = field_of({Vec3d(0.1, 0.2, -0.1), Vec3d(-0.05, 0, 0), Vec3d(0, 0, 0)});
  const auto e = marker_errors(f, f);
  EXPECT_EQ(e.magnitude_l1_mm, 0.0);
  EXPECT_NEAR(e.angular_error_deg, 0.0, 1e-12);
}

TEST(MarkerErrors, QuarterTurn) {
  const auto ref = field_of({Vec3d(0.1, 0, 0), Vec3d(0, 0.2, 0), Vec3d(-0.3, 0.1, 0)});
  std::vector<Vec3d> turned;
  for (const auto& u : ref.displacement) turned.emplace_back(-u.y(), u.x(), u.z());
  const auto e = marker_errors(ref, field_of(turned));
  EXPECT_NEAR(e.magnitude_l1_mm, 0.0, 1e-15);
  EXPECT_NEAR(e.angular_error_deg, 90.0, 1e-9);
}

TEST(MarkerErrors, MatchesDirectFormula) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0, 0.1);
  std::vector<Vec3d> a, b;
  for (int i = 0; i < 50; ++i) {
    a.emplace_back(n(rng), n(rng), n(rng));
    b.emplace_back(n(rng), n(rng), n(rng));
  }
  double l1 = 0, num = 0, den = 0;
  for (int i = 0; i < 50; ++i) {
    l1 += std::abs(a[i].norm() - b[i].norm());
    const Eigen::Vector2d p = a[i].head<2>(), q = b[i].head<2>();
    const double cosang = std::clamp(p.dot(q) / (p.norm() * q.norm()), -1.0, 1.0);
    num += p.norm() * std::acos(cosang) * 180 / std::numbers::pi;
    den += p.norm();
  }
  const auto e = marker_errors(field_of(a), field_of(b));
  EXPECT_NEAR(e.magnitude_l1_mm, l1 / 50, 1e-12);
  EXPECT_NEAR(e.angular_error_deg, num / den, 1e-6);
}

TEST(MarkerErrors, MismatchedFieldsThrow) {
  auto a = field_of({Vec3d(0.1, 0, 0), Vec3d(0, 0.1, 0)});
  auto b = field_of({Vec3d(0.1, 0, 0)});
  EXPECT_THROW(marker_errors(a, b), DomainError);
  b = a;
  b.positions[1].x() += 0.1;
  EXPECT_THROW(marker_errors(a, b), DomainError);
}
