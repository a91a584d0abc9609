#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gelsim/error.hpp"
#include "gelsim/geometry.hpp"
#include "gelsim/synth.hpp"

using namespace gelsim;

namespace {

// Radius of the circle a sphere of radius R cuts at depth d below its lowest point.
double cap_radius(double R, double d) { return std::sqrt(2 * R * d - d * d); }

}  // namespace

TEST(SensorConfig, FlatAndDomeShapes) {
  const auto flat = SensorConfig::flat(64, 48, 0.025);
  flat.validate();
  for (float v : flat.gel_surface.values()) EXPECT_EQ(v, 0.f);

  const auto dome = SensorConfig::dome(64, 48, 0.025, 30.0);
  dome.validate();
  EXPECT_EQ(dome.gel_surface(24, 32), 0.f);
  for (float v : dome.gel_surface.values()) EXPECT_LE(v, 0.f);
  EXPECT_LT(dome.gel_surface(0, 0), dome.gel_surface(24, 32));
}

TEST(SensorConfig, RejectsBadValues) {
  auto cfg = SensorConfig::flat(64, 48, 0.025);
  cfg.pixel_pitch = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SensorConfig::flat(64, 48, 0.025);
  cfg.gel_surface = HeightMap(10, 10);
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(SensorConfig::dome(64, 48, 0.025, -1.0), ConfigError);
}

TEST(Rasterize, NoContactAtZeroDepth) {
  const auto cfg = SensorConfig::flat(160, 120, 0.025);
  Pose pose;
  pose.translation = {0, 0, 5};
  const auto press = rasterize_press(synth::sphere_mesh(2.0), pose, 0.0, cfg);
  EXPECT_EQ(press.mask.count(), 0u);
  EXPECT_EQ(press.height.values().size(), cfg.gel_surface.values().size());
  for (std::size_t i = 0; i < press.height.size(); ++i)
    EXPECT_EQ(press.height[i], cfg.gel_surface[i]);
}

TEST(Rasterize, SphereContactRadiusAndHeights) {
  const double R = 2.0, d = 0.5;
  const auto cfg = SensorConfig::flat(160, 160, 0.025);
  const auto press = rasterize_press(synth::sphere_mesh(R, 128, 64), Pose{}, d, cfg);

  const double a = cap_radius(R, d);
  EXPECT_NEAR(a, 1.3229, 1e-4);
  for (int r = 0; r < cfg.height_px; ++r)
    for (int c = 0; c < cfg.width_px; ++c) {
      const double x = cfg.x_of_col(c), y = cfg.y_of_row(r);
      const double rho = std::hypot(x, y);
      if (rho < a - cfg.pixel_pitch) {
        ASSERT_TRUE(press.mask(r, c)) << r << "," << c;
        const double expected = -d + R - std::sqrt(R * R - rho * rho);
        EXPECT_NEAR(press.height(r, c), expected, 2e-3);
      } else if (rho > a + cfg.pixel_pitch) {
        ASSERT_FALSE(press.mask(r, c)) << r << "," << c;
        EXPECT_EQ(press.height(r, c), 0.f);
      }
    }
  // Contact area against the analytic disk.
  const double disk_px = std::numbers::pi * a * a / (cfg.pixel_pitch * cfg.pixel_pitch);
  EXPECT_NEAR(static_cast<double>(press.mask.count()), disk_px, 0.02 * disk_px);
  // Deepest point sits exactly at the press depth below the gel.
  EXPECT_NEAR(press.height(80, 80), -d, 1e-6);
}

TEST(Rasterize, ContactPixelsLieBelowGel) {
  const auto cfg = SensorConfig::dome(120, 100, 0.025, 20.0);
  Pose pose;
  pose.translation = {0.3, -0.2, 1.0};
  pose.rotation = {0.2, 0.1, 0.4};
  const auto press = rasterize_press(synth::cylinder_mesh(0.6, 2.0), pose, 0.4, cfg);
  ASSERT_GT(press.mask.count(), 0u);
  for (std::size_t i = 0; i < press.mask.size(); ++i) {
    if (press.mask[i])
      EXPECT_LT(press.height[i], cfg.gel_surface[i]);
    else
      EXPECT_EQ(press.height[i], cfg.gel_surface[i]);
  }
}

TEST(Rasterize, TranslationEquivariance) {
  // Pitch 1/32 mm makes the pixel shift exact in binary.
  const auto cfg = SensorConfig::flat(128, 96, 1.0 / 32);
  const auto mesh = synth::sphere_mesh(1.0, 48, 24);
  const int shift_c = 7, shift_r = -4;
  Pose a, b;
  b.translation = {shift_c * cfg.pixel_pitch, shift_r * cfg.pixel_pitch, 0};
  const auto pa = rasterize_press(mesh, a, 0.3, cfg);
  const auto pb = rasterize_press(mesh, b, 0.3, cfg);
  ASSERT_EQ(pa.mask.count(), pb.mask.count());
  for (int r = 10; r < cfg.height_px - 10; ++r)
    for (int c = 10; c < cfg.width_px - 10; ++c) {
      ASSERT_EQ(pa.mask(r, c), pb.mask(r + shift_r, c + shift_c));
      EXPECT_NEAR(pa.height(r, c), pb.height(r + shift_r, c + shift_c), 1e-6);
    }
}

TEST(Rasterize, DepthOutsideRangeThrows) {
  const auto cfg = SensorConfig::flat(64, 64, 0.025, 1.5);
  const auto mesh = synth::sphere_mesh(1.0);
  EXPECT_THROW(rasterize_press(mesh, Pose{}, 1.6, cfg), RangeError);
  EXPECT_THROW(rasterize_press(mesh, Pose{}, -0.1, cfg), RangeError);
}

TEST(Rasterize, BadMeshThrows) {
  const auto cfg = SensorConfig::flat(64, 64, 0.025);
  TriangleMesh empty;
  EXPECT_THROW(rasterize_press(empty, Pose{}, 0.1, cfg), ContentError);
  TriangleMesh bad;
  bad.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  bad.triangles = {{0, 1, 3}};
  EXPECT_THROW(rasterize_press(bad, Pose{}, 0.1, cfg), ContentError);
}

TEST(Pose, AxisAngleRotation) {
  Pose p;
  p.rotation = {0, 0, std::numbers::pi / 2};
  p.translation = {1, 2, 3};
  const Eigen::Vector3d q = p.apply({1, 0, 0});
  EXPECT_NEAR(q.x(), 1.0, 1e-12);
  EXPECT_NEAR(q.y(), 3.0, 1e-12);
  EXPECT_NEAR(q.z(), 3.0, 1e-12);
}

TEST(Smooth, ScheduleValidation) {
  HeightMap h(20, 20);
  ContactMask m(20, 20, 0);
  EXPECT_THROW(smooth_pyramid(h, m, {}), ConfigError);
  EXPECT_THROW(smooth_pyramid(h, m, {{4, 1.0}}), ConfigError);
  EXPECT_THROW(smooth_pyramid(h, m, {{5, 1.0}, {7, 1.0}}), ConfigError);
  EXPECT_THROW(smooth_pyramid(h, m, {{5, 1.0}, {5, 1.0}}), ConfigError);
  EXPECT_THROW(smooth_pyramid(h, m, {{5, 0.0}}), ConfigError);
}

TEST(Smooth, DefaultPyramid) {
  const auto p = default_pyramid();
  ASSERT_EQ(p.size(), 4u);
  const int sizes[] = {51, 31, 11, 5};
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(p[i].size, sizes[i]);
    EXPECT_DOUBLE_EQ(p[i].sigma, sizes[i] / 6.0);
  }
}

TEST(Smooth, ContactPixelsUnchangedAndStepSoftened) {
  const auto cfg = SensorConfig::flat(120, 120, 0.025);
  const auto press = synth::pin_press(cfg, 60, 60, 1.0, 0.4);
  const auto smoothed = smooth_pyramid(press.height, press.mask, default_pyramid(), cfg.gel_surface);
  for (std::size_t i = 0; i < press.mask.size(); ++i)
    if (press.mask[i]) EXPECT_EQ(std::bit_cast<std::uint32_t>(smoothed[i]),
                                 std::bit_cast<std::uint32_t>(press.height[i]));

  // Largest neighbour jump touching a non-contact pixel.
  auto max_jump = [&](const HeightMap& h) {
    double worst = 0;
    for (int r = 0; r < h.rows(); ++r)
      for (int c = 0; c + 1 < h.cols(); ++c)
        if (!press.mask(r, c) || !press.mask(r, c + 1))
          worst = std::max(worst, std::abs(double(h(r, c)) - h(r, c + 1)));
    return worst;
  };
  EXPECT_LT(max_jump(smoothed), 0.5 * max_jump(press.height));
  // Smoothing never pushes the gel beyond the range spanned by the input.
  for (float v : smoothed.values()) {
    EXPECT_LE(v, 0.f);
    EXPECT_GE(v, -0.4f);
  }
}

TEST(Smooth, RandomContactBitIdentical) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(-1.f, 0.f);
  HeightMap h(50, 70);
  ContactMask m(50, 70, 0);
  for (std::size_t i = 0; i < h.size(); ++i) {
    h[i] = u(rng);
    m[i] = (rng() % 3) == 0;
  }
  const auto s = smooth_pyramid(h, m, {{11, 11 / 6.0}, {5, 5 / 6.0}});
  for (std::size_t i = 0; i < h.size(); ++i)
    if (m[i]) EXPECT_EQ(s[i], h[i]);
}

TEST(Smooth, UntouchedMapStaysPut) {
  const auto cfg = SensorConfig::dome(90, 70, 0.025, 15.0);
  ContactMask none(70, 90, 0);
  const auto s = smooth_pyramid(cfg.gel_surface, none, default_pyramid(), cfg.gel_surface);
  EXPECT_EQ(s, cfg.gel_surface);
}

TEST(Smooth, SizeOneIsIdentity) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-1.f, 0.f);
  HeightMap h(20, 30);
  for (auto& v : h.values()) v = u(rng);
  ContactMask m(20, 30, 0);
  EXPECT_EQ(smooth_pyramid(h, m, {{1, 1.0}}), h);
}

TEST(Normals, FlatMap) {
  HeightMap h(10, 12, -0.25f);
  const auto n = compute_normals(h, 0.025);
  for (const auto& v : n.values()) EXPECT_EQ(v, (Vec3f{0, 0, 1}));
}

TEST(Normals, InclinedPlane) {
  const double pitch = 0.025;
  HeightMap h(10, 12);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 12; ++c) h(r, c) = static_cast<float>(c * pitch);
  const auto n = compute_normals(h, pitch);
  const float s = static_cast<float>(1 / std::sqrt(2.0));
  for (const auto& v : n.values()) {
    EXPECT_NEAR(v.x, -s, 1e-5);
    EXPECT_NEAR(v.y, 0.f, 1e-6);
    EXPECT_NEAR(v.z, s, 1e-5);
  }
}

TEST(Normals, SphereCapMatchesAnalytic) {
  const double R = 2.0, pitch = 0.03;
  const int N = 161;
  HeightMap h(N, N);
  for (int r = 0; r < N; ++r)
    for (int c = 0; c < N; ++c) {
      const double x = (c - 80) * pitch, y = (r - 80) * pitch;
      h(r, c) = static_cast<float>(std::sqrt(std::max(0.0, R * R - x * x - y * y)));
    }
  const auto n = compute_normals(h, pitch);
  for (int r = 1; r < N - 1; ++r)
    for (int c = 1; c < N - 1; ++c) {
      const double x = (c - 80) * pitch, y = (r - 80) * pitch;
      if (std::hypot(x, y) > 0.7 * R) continue;
      const double z = std::sqrt(R * R - x * x - y * y);
      EXPECT_NEAR(n(r, c).x, x / R, 1e-3);
      EXPECT_NEAR(n(r, c).y, y / R, 1e-3);
      EXPECT_NEAR(n(r, c).z, z / R, 1e-3);
    }
}

TEST(Normals, UnitLengthPointingOut) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(-0.5f, 0.f);
  HeightMap h(30, 40);
  for (auto& v : h.values()) v = u(rng);
  for (const auto& v : compute_normals(h, 0.025).values()) {
    EXPECT_NEAR(std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z), 1.f, 1e-6);
    EXPECT_GT(v.z, 0.f);
  }
  EXPECT_THROW(compute_normals(h, 0.0), DomainError);
}
