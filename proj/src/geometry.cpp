#include "gelsim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Geometry>

#include "gelsim/error.hpp"

namespace gelsim {

std::size_t ContactMask::count() const {
  return static_cast<std::size_t>(std::count_if(values().begin(), values().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

SensorConfig SensorConfig::flat(int width, int height, double pitch, double max_indent) {
  SensorConfig cfg;
  cfg.width_px = width;
  cfg.height_px = height;
  cfg.pixel_pitch = pitch;
  cfg.max_indent = max_indent;
  cfg.gel_surface = HeightMap(height, width, 0.f);
  return cfg;
}

SensorConfig SensorConfig::dome(int width, int height, double pitch, double dome_radius,
                                double max_indent) {
  if (!(dome_radius > 0)) throw ConfigError("dome radius must be positive");
  SensorConfig cfg = flat(width, height, pitch, max_indent);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double x = cfg.x_of_col(c);
      const double y = cfg.y_of_row(r);
      const double rho2 = std::min(x * x + y * y, dome_radius * dome_radius);
      cfg.gel_surface(r, c) = static_cast<float>(std::sqrt(dome_radius * dome_radius - rho2) -
                                                 dome_radius);
    }
  }
  return cfg;
}

void SensorConfig::validate() const {
  if (width_px <= 0 || height_px <= 0) throw ConfigError("sensor size must be positive");
  if (!(pixel_pitch > 0) || !std::isfinite(pixel_pitch))
    throw ConfigError("pixel pitch must be positive");
  if (!(max_indent > 0)) throw ConfigError("max_indent must be positive");
  if (gel_surface.rows() != height_px || gel_surface.cols() != width_px)
    throw ConfigError("gel surface shape does not match the sensor size");
  for (float v : gel_surface.values())
    if (!std::isfinite(v)) throw ConfigError("gel surface contains non-finite heights");
}

void TriangleMesh::validate() const {
  if (triangles.empty()) throw ContentError("mesh has no triangles");
  const int n = static_cast<int>(vertices.size());
  for (std::size_t t = 0; t < triangles.size(); ++t)
    for (int idx : triangles[t])
      if (idx < 0 || idx >= n)
        throw ContentError("triangle " + std::to_string(t) + " references vertex " +
                           std::to_string(idx) + " of " + std::to_string(n));
}

Eigen::Vector3d Pose::apply(const Eigen::Vector3d& p) const {
  const double angle = rotation.norm();
  if (angle == 0.0) return p + translation;
  return Eigen::AngleAxisd(angle, rotation / angle) * p + translation;
}

namespace {

double edge(const Eigen::Vector3d& a, const Eigen::Vector3d& b, double px, double py) {
  return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
}

}  // namespace

PressResult rasterize_press(const TriangleMesh& mesh, const Pose& pose, double press_depth,
                            const SensorConfig& cfg) {
  cfg.validate();
  mesh.validate();
  if (!(press_depth >= 0.0) || press_depth > cfg.max_indent)
    throw RangeError("press depth " + std::to_string(press_depth) + " mm outside [0, " +
                     std::to_string(cfg.max_indent) + "]");

  const int rows = cfg.height_px;
  const int cols = cfg.width_px;

  // Vertices in (column, row, height) space.
  std::vector<Eigen::Vector3d> pix;
  pix.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) {
    const Eigen::Vector3d p = pose.apply(v);
    pix.emplace_back(cfg.col_of_x(p.x()), cfg.row_of_y(p.y()), p.z());
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  Grid<double> zbuf(rows, cols, kInf);
  for (const auto& tri : mesh.triangles) {
    const Eigen::Vector3d& a = pix[tri[0]];
    const Eigen::Vector3d& b = pix[tri[1]];
    const Eigen::Vector3d& c = pix[tri[2]];
    const double area = edge(a, b, c.x(), c.y());
    if (std::abs(area) < 1e-12) continue;  // seen edge-on

    const int c0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}))));
    const int c1 = std::min(cols - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}))));
    const int r0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}))));
    const int r1 = std::min(rows - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}))));
    const double inv_area = 1.0 / area;
    constexpr double kEps = -1e-9;
    for (int r = r0; r <= r1; ++r) {
      for (int col = c0; col <= c1; ++col) {
        const double w0 = edge(b, c, col, r) * inv_area;
        const double w1 = edge(c, a, col, r) * inv_area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < kEps || w1 < kEps || w2 < kEps) continue;
        const double z = w0 * a.z() + w1 * b.z() + w2 * c.z();
        double& slot = zbuf(r, col);
        if (z < slot) slot = z;
      }
    }
  }

  // Lower the object until it first touches the gel on the pixel grid.
  double gap = kInf;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (zbuf(r, c) < kInf) gap = std::min(gap, zbuf(r, c) - cfg.gel_surface(r, c));

  PressResult out{cfg.gel_surface, ContactMask(rows, cols, 0)};
  if (gap == kInf) return out;

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (zbuf(r, c) == kInf) continue;
      const double z = zbuf(r, c) - gap - press_depth;
      if (z < cfg.gel_surface(r, c)) {
        out.height(r, c) = static_cast<float>(z);
        out.mask(r, c) = 1;
      }
    }
  }
  return out;
}

std::vector<SmoothLevel> default_pyramid() {
  std::vector<SmoothLevel> levels;
  for (int size : {51, 31, 11, 5}) levels.push_back({size, size / 6.0});
  return levels;
}

namespace {

void validate_levels(const std::vector<SmoothLevel>& levels) {
  if (levels.empty()) throw ConfigError("smoothing schedule is empty");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& lv = levels[i];
    if (lv.size < 1 || lv.size % 2 == 0)
      throw ConfigError("smoothing kernel size " + std::to_string(lv.size) + " is not odd");
    if (!(lv.sigma > 0)) throw ConfigError("smoothing sigma must be positive");
    if (i > 0 && lv.size >= levels[i - 1].size)
      throw ConfigError("smoothing kernel sizes must strictly decrease");
  }
}

std::vector<float> gaussian_weights(const SmoothLevel& lv) {
  const int radius = lv.size / 2;
  std::vector<double> w(lv.size);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    w[i + radius] = std::exp(-0.5 * i * i / (lv.sigma * lv.sigma));
    sum += w[i + radius];
  }
  std::vector<float> out(lv.size);
  for (int i = 0; i < lv.size; ++i) out[i] = static_cast<float>(w[i] / sum);
  return out;
}

struct Roi {
  int r0, r1, c0, c1;  // inclusive
};

// Separable blur of `src` into `dst` for pixels inside `roi`, replicating the
// image border. Written as center + sum w * (x - center) so that constant
// regions are reproduced exactly.
void blur_roi(const Grid<float>& src, Grid<float>& dst, Grid<float>& tmp,
              const std::vector<float>& w, const Roi& roi) {
  const int radius = static_cast<int>(w.size()) / 2;
  const int rows = src.rows();
  const int cols = src.cols();
  for (int r = roi.r0; r <= roi.r1; ++r) {
    const float* row = &src(r, 0);
    float* out = &tmp(r, 0);
    for (int c = roi.c0; c <= roi.c1; ++c) {
      const float center = row[c];
      float acc = 0.f;
      for (int k = -radius; k <= radius; ++k) {
        const int cc = std::clamp(c + k, 0, cols - 1);
        acc += w[k + radius] * (row[cc] - center);
      }
      out[c] = center + acc;
    }
  }
  for (int r = roi.r0; r <= roi.r1; ++r) {
    for (int c = roi.c0; c <= roi.c1; ++c) {
      const float center = tmp(r, c);
      float acc = 0.f;
      for (int k = -radius; k <= radius; ++k) {
        const int rr = std::clamp(r + k, 0, rows - 1);
        acc += w[k + radius] * (tmp(rr, c) - center);
      }
      dst(r, c) = center + acc;
    }
  }
}

}  // namespace

HeightMap smooth_pyramid(const HeightMap& h, const ContactMask& mask,
                         const std::vector<SmoothLevel>& levels, const HeightMap& reference) {
  validate_levels(levels);
  if (!h.same_shape(mask) || !h.same_shape(reference))
    throw ConfigError("height map, mask and reference must share a shape");

  const int rows = h.rows();
  const int cols = h.cols();
  Grid<float> disp(rows, cols, 0.f);
  int r0 = rows, r1 = -1, c0 = cols, c1 = -1;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const float d = h(r, c) - reference(r, c);
      disp(r, c) = d;
      if (d != 0.f || mask(r, c)) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
    }
  }
  HeightMap out = h;
  if (r1 < 0) return out;

  // Outside this box the deformation is zero before and after every level.
  int reach = 0;
  for (const auto& lv : levels) reach += lv.size / 2;
  const Roi roi{std::max(0, r0 - reach), std::min(rows - 1, r1 + reach),
                std::max(0, c0 - reach), std::min(cols - 1, c1 + reach)};

  Grid<float> blurred(rows, cols, 0.f);
  Grid<float> tmp(rows, cols, 0.f);
  for (const auto& lv : levels) {
    if (lv.size == 1) continue;
    blur_roi(disp, blurred, tmp, gaussian_weights(lv), roi);
    for (int r = roi.r0; r <= roi.r1; ++r)
      for (int c = roi.c0; c <= roi.c1; ++c)
        if (!mask(r, c)) disp(r, c) = blurred(r, c);
  }

  for (int r = roi.r0; r <= roi.r1; ++r)
    for (int c = roi.c0; c <= roi.c1; ++c)
      if (!mask(r, c)) out(r, c) = reference(r, c) + disp(r, c);
  return out;
}

HeightMap smooth_pyramid(const HeightMap& h, const ContactMask& mask,
                         const std::vector<SmoothLevel>& levels) {
  return smooth_pyramid(h, mask, levels, HeightMap(h.rows(), h.cols(), 0.f));
}

NormalMap compute_normals(const HeightMap& h, double pitch) {
  if (!(pitch > 0)) throw DomainError("pixel pitch must be positive");
  const int rows = h.rows();
  const int cols = h.cols();
  NormalMap n(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const int ru = r > 0 ? r - 1 : r;
    const int rd = r < rows - 1 ? r + 1 : r;
    const double sy = rd - ru > 0 ? 1.0 / ((rd - ru) * pitch) : 0.0;
    for (int c = 0; c < cols; ++c) {
      const int cl = c > 0 ? c - 1 : c;
      const int cr = c < cols - 1 ? c + 1 : c;
      const double sx = cr - cl > 0 ? 1.0 / ((cr - cl) * pitch) : 0.0;
      const double gx = (static_cast<double>(h(r, cr)) - h(r, cl)) * sx;
      const double gy = (static_cast<double>(h(rd, c)) - h(ru, c)) * sy;
      const double inv = 1.0 / std::sqrt(gx * gx + gy * gy + 1.0);
      n(r, c) = Vec3f{static_cast<float>(-gx * inv), static_cast<float>(-gy * inv),
                      static_cast<float>(inv)};
    }
  }
  return n;
}

}  // namespace gelsim
