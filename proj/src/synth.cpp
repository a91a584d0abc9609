#include "gelsim/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "gelsim/error.hpp"

namespace gelsim::synth {

namespace {

constexpr double kLightElevation = std::numbers::pi / 4;

Eigen::Vector3d light_vector(int ch) {
  const double az = ch * 2.0 * std::numbers::pi / 3.0;
  return {std::cos(kLightElevation) * std::cos(az), std::cos(kLightElevation) * std::sin(az),
          std::sin(kLightElevation)};
}

}  // namespace

PolynomialTable planted_table(const BinSpec& spec) {
  PolynomialTable table(spec);
  const int b = spec.bins;
  for (int t = 0; t < b; ++t)
    for (int p = 0; p < b; ++p) {
      const double theta = (t + 0.5) * spec.theta_max / b;
      const double phi = (p + 0.5) * 2.0 * std::numbers::pi / b;
      const Eigen::Vector3d n(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
                              std::cos(theta));
      for (int ch = 0; ch < 3; ++ch) {
        const double s = n.dot(light_vector(ch));
        float* k = table.coeffs(t, p, ch);
        k[0] = static_cast<float>(-7.0 - 3.0 * n.z());  // x^2
        k[1] = static_cast<float>(-5.0 + 2.0 * s);      // y^2
        k[2] = static_cast<float>(4.0 * s);             // xy
        k[3] = static_cast<float>(12.0 + 6.0 * n.x());  // x
        k[4] = static_cast<float>(-10.0 + 5.0 * n.y()); // y
        k[5] = static_cast<float>(110.0 + 75.0 * s);    // constant
      }
      table.fill(t, p) = BinFill::calibrated;
    }
  return table;
}

ImageRgb shade(const NormalMap& normals, const PolynomialTable& table, const ImageRgb& background) {
  const int rows = normals.rows(), cols = normals.cols();
  ImageRgb out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const Vec3f& n = normals(r, c);
      if (n.x * n.x + n.y * n.y <= 1e-10f) {
        out(r, c) = background(r, c);
        continue;
      }
      const NormalBin bin = normal_to_bin(n, table.spec());
      const double x = normalized_coord(c, cols), y = normalized_coord(r, rows);
      const double terms[kPolyTerms] = {x * x, y * y, x * y, x, y, 1.0};
      for (int ch = 0; ch < 3; ++ch) {
        const float* k = table.coeffs(bin.theta, bin.phi, ch);
        double v = 0;
        for (int i = 0; i < kPolyTerms; ++i) v += k[i] * terms[i];
        out(r, c)[ch] = static_cast<float>(v);
      }
    }
  return out;
}

ImageRgb planted_background(const PolynomialTable& table, const SensorConfig& cfg) {
  ImageRgb bg(cfg.height_px, cfg.width_px);
  for (int r = 0; r < cfg.height_px; ++r)
    for (int c = 0; c < cfg.width_px; ++c) {
      const double x = normalized_coord(c, cfg.width_px), y = normalized_coord(r, cfg.height_px);
      const double terms[kPolyTerms] = {x * x, y * y, x * y, x, y, 1.0};
      for (int ch = 0; ch < 3; ++ch) {
        const float* k = table.coeffs(0, 0, ch);
        double v = 0;
        for (int i = 0; i < kPolyTerms; ++i) v += k[i] * terms[i];
        bg(r, c)[ch] = static_cast<float>(v);
      }
    }
  return quantize(bg);
}

double ball_contact_radius_px(const SensorConfig& cfg, double ball_radius_mm, double depth_mm) {
  if (!(depth_mm > 0 && depth_mm < ball_radius_mm)) throw DomainError("ball depth out of range");
  return std::sqrt(2 * ball_radius_mm * depth_mm - depth_mm * depth_mm) / cfg.pixel_pitch;
}

NormalMap ball_normals(const SensorConfig& cfg, double center_col, double center_row,
                       double ball_radius_mm, double depth_mm) {
  const double a = ball_contact_radius_px(cfg, ball_radius_mm, depth_mm);
  NormalMap n(cfg.height_px, cfg.width_px);
  for (int r = 0; r < cfg.height_px; ++r)
    for (int c = 0; c < cfg.width_px; ++c) {
      const double dc = c - center_col, dr = r - center_row;
      if (dc * dc + dr * dr >= a * a) continue;
      const double dx = dc * cfg.pixel_pitch, dy = dr * cfg.pixel_pitch;
      const double dz = std::sqrt(ball_radius_mm * ball_radius_mm - dx * dx - dy * dy);
      n(r, c) = Vec3f{static_cast<float>(-dx / ball_radius_mm), static_cast<float>(-dy / ball_radius_mm),
                      static_cast<float>(dz / ball_radius_mm)};
    }
  return n;
}

CalibrationRecord ball_record(const PolynomialTable& table, const ImageRgb& background,
                              const SensorConfig& cfg, double center_col, double center_row,
                              double ball_radius_mm, double depth_mm) {
  CalibrationRecord rec;
  rec.background = background;
  rec.image = quantize(shade(ball_normals(cfg, center_col, center_row, ball_radius_mm, depth_mm),
                             table, background));
  rec.center_col = center_col;
  rec.center_row = center_row;
  rec.radius_px = ball_contact_radius_px(cfg, ball_radius_mm, depth_mm);
  rec.ball_radius_mm = ball_radius_mm;
  return rec;
}

std::vector<CalibrationRecord> ball_records(const PolynomialTable& table, const ImageRgb& background,
                                            const SensorConfig& cfg, int count, std::uint64_t seed,
                                            double ball_radius_mm) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<CalibrationRecord> out;
  for (int i = 0; i < count; ++i) {
    const double depth = 0.3 + 0.7 * unit(rng);
    const double a = ball_contact_radius_px(cfg, ball_radius_mm, depth);
    const double col = a + 2 + unit(rng) * (cfg.width_px - 1 - 2 * (a + 2));
    const double row = a + 2 + unit(rng) * (cfg.height_px - 1 - 2 * (a + 2));
    out.push_back(ball_record(table, background, cfg, col, row, ball_radius_mm, depth));
  }
  return out;
}

Eigen::Vector2d shadow_direction(int light) {
  const double ang = std::numbers::pi / 2 + light * 2.0 * std::numbers::pi / 3.0;
  return {std::cos(ang), std::sin(ang)};
}

float planted_shadow_ratio(int light, double dcol, double drow, double pin_radius_px, double depth_mm) {
  const Eigen::Vector2d d = shadow_direction(light);
  const double along = dcol * d.x() + drow * d.y();
  const double across = -dcol * d.y() + drow * d.x();
  const double length = 6.0 + 30.0 * depth_mm;
  if (along <= 0 || std::abs(across) > pin_radius_px) return 1.f;
  if (std::hypot(dcol, drow) <= pin_radius_px + 1) return 1.f;
  if (along > pin_radius_px + length) return 1.f;
  return static_cast<float>(0.5 + 0.4 * std::max(0.0, along - pin_radius_px) / length);
}

PressResult pin_press(const SensorConfig& cfg, double center_col, double center_row,
                      double pin_diameter_mm, double depth_mm) {
  const double rp = pin_diameter_mm / 2 / cfg.pixel_pitch;
  PressResult out{cfg.gel_surface, ContactMask(cfg.height_px, cfg.width_px, 0)};
  for (int r = 0; r < cfg.height_px; ++r)
    for (int c = 0; c < cfg.width_px; ++c)
      if ((r - center_row) * (r - center_row) + (c - center_col) * (c - center_col) <= rp * rp) {
        out.height(r, c) = static_cast<float>(cfg.gel_surface(r, c) - depth_mm);
        out.mask(r, c) = 1;
      }
  return out;
}

PressResult sphere_press(const SensorConfig& cfg, double center_col, double center_row,
                         double ball_radius_mm, double depth_mm) {
  const double R = ball_radius_mm;
  const double base = cfg.gel_surface(static_cast<int>(std::lround(center_row)),
                                      static_cast<int>(std::lround(center_col))) - depth_mm;
  PressResult out{cfg.gel_surface, ContactMask(cfg.height_px, cfg.width_px, 0)};
  for (int r = 0; r < cfg.height_px; ++r)
    for (int c = 0; c < cfg.width_px; ++c) {
      const double dx = (c - center_col) * cfg.pixel_pitch;
      const double dy = (r - center_row) * cfg.pixel_pitch;
      const double rho2 = dx * dx + dy * dy;
      if (rho2 >= R * R) continue;
      const double z = base + R - std::sqrt(R * R - rho2);
      if (z < cfg.gel_surface(r, c)) {
        out.height(r, c) = static_cast<float>(z);
        out.mask(r, c) = 1;
      }
    }
  return out;
}

PinPressRecord pin_record(const ImageRgb& background, const SensorConfig& cfg, double center_col,
                          double center_row, double pin_diameter_mm, double depth_mm,
                          bool with_shadow) {
  PinPressRecord rec;
  rec.background = background;
  rec.image = background;
  rec.center_col = center_col;
  rec.center_row = center_row;
  rec.pin_diameter_mm = pin_diameter_mm;
  rec.depth_mm = depth_mm;
  if (!with_shadow) return rec;
  const double rp = pin_diameter_mm / 2 / cfg.pixel_pitch;
  for (int r = 0; r < cfg.height_px; ++r)
    for (int c = 0; c < cfg.width_px; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const float ratio = planted_shadow_ratio(ch, c - center_col, r - center_row, rp, depth_mm);
        if (ratio < 1.f) rec.image(r, c)[ch] = std::nearbyint(background(r, c)[ch] * ratio);
      }
  return rec;
}

TensorKernel random_kernel(int radius, double spacing, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TensorKernel k;
  k.radius = radius;
  k.spacing = spacing;
  k.surface.resize(static_cast<std::size_t>(k.width()) * k.width());
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      Eigen::Matrix3d t;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) t(a, b) = u(rng);
      const double decay = 1.0 / (1.0 + std::hypot(dx, dy));
      t *= 0.3 * decay;
      if (dx == 0 && dy == 0) t.diagonal().array() += 1.0;
      k.surface[k.slot(dx, dy)] = t;
    }
  return k;
}

std::vector<UnitLoadField> kernel_fields(const TensorKernel& kernel, const std::vector<Vec3d>& prescriptions,
                                         int extent) {
  std::vector<UnitLoadField> out;
  const NodeGrid grid{2 * extent + 1, 2 * extent + 1, kernel.spacing, -extent, -extent};
  for (const Vec3d& p : prescriptions) {
    UnitLoadField f;
    f.grid = grid;
    f.prescribed = p;
    f.displacement.assign(grid.size(), Vec3d::Zero());
    for (int r = 0; r < grid.rows; ++r)
      for (int c = 0; c < grid.cols; ++c) {
        const int dx = c - extent, dy = r - extent;
        if (kernel.covers(dx, dy))
          f.displacement[static_cast<std::size_t>(r) * grid.cols + c] = kernel.at(dx, dy) * p;
      }
    out.push_back(std::move(f));
  }
  return out;
}

TriangleMesh sphere_mesh(double radius, int segments, int rings) {
  if (!(radius > 0) || segments < 3 || rings < 2) throw DomainError("invalid sphere tessellation");
  TriangleMesh m;
  m.vertices.emplace_back(0, 0, -radius);
  for (int i = 1; i < rings; ++i) {
    const double th = std::numbers::pi * i / rings;
    for (int j = 0; j < segments; ++j) {
      const double ph = 2 * std::numbers::pi * j / segments;
      m.vertices.emplace_back(radius * std::sin(th) * std::cos(ph), radius * std::sin(th) * std::sin(ph),
                              -radius * std::cos(th));
    }
  }
  m.vertices.emplace_back(0, 0, radius);
  const int top = static_cast<int>(m.vertices.size()) - 1;
  auto ring = [&](int i, int j) { return 1 + (i - 1) * segments + (j % segments); };
  for (int j = 0; j < segments; ++j) m.triangles.push_back({0, ring(1, j + 1), ring(1, j)});
  for (int i = 1; i + 1 < rings; ++i)
    for (int j = 0; j < segments; ++j) {
      m.triangles.push_back({ring(i, j), ring(i, j + 1), ring(i + 1, j + 1)});
      m.triangles.push_back({ring(i, j), ring(i + 1, j + 1), ring(i + 1, j)});
    }
  for (int j = 0; j < segments; ++j) m.triangles.push_back({top, ring(rings - 1, j), ring(rings - 1, j + 1)});
  return m;
}

TriangleMesh cylinder_mesh(double radius, double height, int segments) {
  if (!(radius > 0) || !(height > 0) || segments < 3) throw DomainError("invalid cylinder tessellation");
  TriangleMesh m;
  m.vertices.emplace_back(0, 0, 0);
  m.vertices.emplace_back(0, 0, height);
  for (int j = 0; j < segments; ++j) {
    const double ph = 2 * std::numbers::pi * j / segments;
    m.vertices.emplace_back(radius * std::cos(ph), radius * std::sin(ph), 0);
    m.vertices.emplace_back(radius * std::cos(ph), radius * std::sin(ph), height);
  }
  auto lo = [&](int j) { return 2 + 2 * (j % segments); };
  auto hi = [&](int j) { return 3 + 2 * (j % segments); };
  for (int j = 0; j < segments; ++j) {
    m.triangles.push_back({0, lo(j + 1), lo(j)});
    m.triangles.push_back({1, hi(j), hi(j + 1)});
    m.triangles.push_back({lo(j), lo(j + 1), hi(j + 1)});
    m.triangles.push_back({lo(j), hi(j + 1), hi(j)});
  }
  return m;
}

}  // namespace gelsim::synth
