#include "gelsim/pipeline.hpp"

#include <chrono>
#include <cmath>

#include "gelsim/error.hpp"

namespace gelsim {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

ImageRgb render_height(const HeightMap& smoothed, const ContactMask& mask, const SensorConfig& cfg,
                       const CalibrationBundle& bundle, const RenderOptions& opts,
                       StageTimings* timings) {
  if (bundle.background.empty()) throw ConfigError("bundle has no background image");
  if (!smoothed.same_shape(bundle.background))
    throw ConfigError("bundle background does not match the sensor size");
  StageTimings t;
  auto t0 = Clock::now();
  const NormalMap normals = compute_normals(smoothed, cfg.pixel_pitch);
  t.normals_ms = ms_since(t0);

  t0 = Clock::now();
  ImageRgb image;
  if (opts.use_lookup) {
    if (!bundle.lookup) throw ConfigError("bundle has no lookup table");
    image = render_optics(normals, *bundle.lookup, bundle.background);
  } else {
    if (!bundle.poly) throw ConfigError("bundle has no polynomial table");
    image = render_optics(normals, *bundle.poly, bundle.background);
  }
  t.optics_ms = ms_since(t0);

  if (opts.shadows && bundle.shadows && !bundle.shadows->empty()) {
    t0 = Clock::now();
    image = attach_shadows(image, smoothed, mask, *bundle.shadows, opts.shadow);
    t.shadow_ms = ms_since(t0);
  }
  if (timings) {
    timings->normals_ms = t.normals_ms;
    timings->optics_ms = t.optics_ms;
    timings->shadow_ms = t.shadow_ms;
  }
  return image;
}

RenderResult render_press(const TriangleMesh& mesh, const Pose& pose, double press_depth,
                          const SensorConfig& cfg, const CalibrationBundle& bundle,
                          const RenderOptions& opts) {
  const auto start = Clock::now();
  RenderResult out;
  auto t0 = Clock::now();
  PressResult press = rasterize_press(mesh, pose, press_depth, cfg);
  out.timings.rasterize_ms = ms_since(t0);

  t0 = Clock::now();
  out.height = smooth_pyramid(press.height, press.mask, opts.pyramid, cfg.gel_surface);
  out.timings.smooth_ms = ms_since(t0);
  out.mask = std::move(press.mask);

  out.image = render_height(out.height, out.mask, cfg, bundle, opts, &out.timings);
  out.timings.total_ms = ms_since(start);
  return out;
}

MarkerResult simulate_markers(const PressResult& press, const SensorConfig& cfg,
                              const TensorKernel& kernel, double shear_x, double shear_y,
                              const std::vector<Eigen::Vector2d>& markers,
                              const AmendOptions& amend) {
  const auto start = Clock::now();
  MarkerResult out;
  const NodeGrid grid = NodeGrid::for_sensor(cfg, kernel.spacing);
  out.active = press_to_active(press.height, press.mask, cfg, shear_x, shear_y, grid);
  std::vector<Vec3d> amended;
  if (out.active.size() > 0) amended = amend_active(out.active, kernel, amend, &out.report);
  out.field = superpose(out.active, amended, kernel, grid, KernelLayer::markers, Coupling::full);
  out.markers = sample_markers(out.field, markers);
  out.elastic_ms = ms_since(start);
  return out;
}

namespace {

void plot(ImageRgb& img, int r, int c, const Rgb& color) {
  if (img.contains(r, c)) img(r, c) = color;
}

void draw_line(ImageRgb& img, double r0, double c0, double r1, double c1, const Rgb& color) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(r1 - r0), std::abs(c1 - c0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    plot(img, static_cast<int>(std::lround(r0 + t * (r1 - r0))),
         static_cast<int>(std::lround(c0 + t * (c1 - c0))), color);
  }
}

}  // namespace

ImageRgb draw_marker_arrows(const ImageRgb& image, const MarkerField& markers,
                            const SensorConfig& cfg, double scale) {
  ImageRgb out = image;
  const Rgb arrow{255.f, 40.f, 40.f};
  const Rgb dot{20.f, 20.f, 20.f};
  for (std::size_t i = 0; i < markers.positions.size(); ++i) {
    const double c0 = cfg.col_of_x(markers.positions[i].x());
    const double r0 = cfg.row_of_y(markers.positions[i].y());
    const double dc = scale * markers.displacement[i].x() / cfg.pixel_pitch;
    const double dr = scale * markers.displacement[i].y() / cfg.pixel_pitch;
    const double len = std::hypot(dc, dr);
    if (len >= 1.0) {
      const double c1 = c0 + dc, r1 = r0 + dr;
      draw_line(out, r0, c0, r1, c1, arrow);
      const double head = std::min(6.0, 0.35 * len);
      const double ux = dc / len, uy = dr / len;
      for (double s : {-1.0, 1.0}) {
        const double hx = -ux * std::cos(0.5) - s * uy * std::sin(0.5);
        const double hy = -uy * std::cos(0.5) + s * ux * std::sin(0.5);
        draw_line(out, r1, c1, r1 + head * hy, c1 + head * hx, arrow);
      }
    }
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        plot(out, static_cast<int>(std::lround(r0)) + dy, static_cast<int>(std::lround(c0)) + dx, dot);
  }
  return out;
}

}  // namespace gelsim
