#pragma once

#include <vector>

#include "gelsim/elastic.hpp"
#include "gelsim/geometry.hpp"
#include "gelsim/io.hpp"
#include "gelsim/optics.hpp"
#include "gelsim/shadow.hpp"

namespace gelsim {

/// Wall-clock milliseconds per render stage.
struct StageTimings {
  double rasterize_ms = 0;
  double smooth_ms = 0;
  double normals_ms = 0;
  double optics_ms = 0;
  double shadow_ms = 0;
  double total_ms = 0;
};

struct RenderOptions {
  bool shadows = true;
  bool use_lookup = false;  // render with the lookup baseline instead of the polynomial table
  std::vector<SmoothLevel> pyramid = default_pyramid();
  ShadowOptions shadow;
};

struct RenderResult {
  ImageRgb image;
  HeightMap height;  // smoothed
  ContactMask mask;
  StageTimings timings;
};

/// rasterize -> smooth -> normals -> optics -> shadows. Shadows are skipped
/// when disabled or when the bundle holds none.
RenderResult render_press(const TriangleMesh& mesh, const Pose& pose, double press_depth,
                          const SensorConfig& cfg, const CalibrationBundle& bundle,
                          const RenderOptions& opts = {});

/// Optical stages only, starting from a smoothed height map.
ImageRgb render_height(const HeightMap& smoothed, const ContactMask& mask, const SensorConfig& cfg,
                       const CalibrationBundle& bundle, const RenderOptions& opts,
                       StageTimings* timings = nullptr);

struct MarkerResult {
  MarkerField markers;
  DisplacementField field;
  ActiveSet active;
  AmendReport report;
  double elastic_ms = 0;
};

/// press_to_active -> amend_active -> superpose -> sample_markers on a node
/// grid at the kernel spacing. An empty contact gives an all-zero field.
MarkerResult simulate_markers(const PressResult& press, const SensorConfig& cfg,
                              const TensorKernel& kernel, double shear_x, double shear_y,
                              const std::vector<Eigen::Vector2d>& markers,
                              const AmendOptions& amend = {});

/// Draws each marker's in-plane motion, scaled, as an arrow on the image.
ImageRgb draw_marker_arrows(const ImageRgb& image, const MarkerField& markers,
                            const SensorConfig& cfg, double scale = 20.0);

}  // namespace gelsim
