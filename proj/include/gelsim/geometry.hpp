#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "gelsim/grid.hpp"

namespace gelsim {

/// Gel surface height over the image grid in mm. Positive values point away
/// from the camera, toward the touching object.
struct HeightMap : Grid<float> {
  using Grid<float>::Grid;
  HeightMap(Grid<float> g) : Grid<float>(std::move(g)) {}
};

/// True (1) where the object indents the gel.
struct ContactMask : Grid<std::uint8_t> {
  using Grid<std::uint8_t>::Grid;
  std::size_t count() const;
};

struct Vec3f {
  float x = 0.f;
  float y = 0.f;
  float z = 1.f;
  bool operator==(const Vec3f&) const = default;
};

/// Unit surface normals, z toward the object.
struct NormalMap : Grid<Vec3f> {
  using Grid<Vec3f>::Grid;
};

/// Image geometry and the undeformed gel shape.
///
/// Sensor frame: x to the right along columns, y downward along rows, z away
/// from the camera. The frame origin sits on pixel (height_px / 2, width_px / 2).
struct SensorConfig {
  int width_px = 640;
  int height_px = 480;
  double pixel_pitch = 0.025;  // mm per pixel
  double max_indent = 1.5;     // mm
  HeightMap gel_surface;       // height_px x width_px background heights

  static SensorConfig flat(int width, int height, double pitch, double max_indent = 1.5);
  /// Spherical dome of the given radius whose apex touches z = 0 at the frame origin.
  static SensorConfig dome(int width, int height, double pitch, double dome_radius,
                           double max_indent = 1.5);

  /// Throws ConfigError when an invariant is violated.
  void validate() const;

  double origin_col() const noexcept { return width_px / 2; }
  double origin_row() const noexcept { return height_px / 2; }
  double x_of_col(double col) const noexcept { return (col - origin_col()) * pixel_pitch; }
  double y_of_row(double row) const noexcept { return (row - origin_row()) * pixel_pitch; }
  double col_of_x(double x) const noexcept { return origin_col() + x / pixel_pitch; }
  double row_of_y(double y) const noexcept { return origin_row() + y / pixel_pitch; }
};

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;

  /// Throws ContentError on out-of-range indices or an empty triangle list.
  void validate() const;
};

/// Rigid transform: rotate by the axis-angle vector (radians), then translate (mm).
struct Pose {
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const;
};

struct PressResult {
  HeightMap height;
  ContactMask mask;
};

/// Orthographic z-buffer press of a mesh into the gel.
///
/// The posed mesh is first lowered until its bottom surface touches the gel
/// on the pixel grid, then pushed `press_depth` mm further. Pixels where the
/// object ends up strictly below the gel form the contact mask and take the
/// object height; every other pixel keeps the gel background.
PressResult rasterize_press(const TriangleMesh& mesh, const Pose& pose, double press_depth,
                            const SensorConfig& cfg);

struct SmoothLevel {
  int size = 1;        // odd kernel width in pixels
  double sigma = 1.0;  // pixels
};

/// Large-to-small pyramid, sizes 51/31/11/5 px with sigma = size / 6.
std::vector<SmoothLevel> default_pyramid();

/// Pyramid-Gaussian deformation approximation.
///
/// Each level blurs the whole map and rewrites only non-contact pixels.
/// Contact pixels are returned bit-identical to the input. The blur acts on
/// the deformation relative to `reference` (the undeformed gel), so an
/// untouched region stays exactly at the background.
HeightMap smooth_pyramid(const HeightMap& h, const ContactMask& mask,
                         const std::vector<SmoothLevel>& levels, const HeightMap& reference);

/// Same with a zero reference plane.
HeightMap smooth_pyramid(const HeightMap& h, const ContactMask& mask,
                         const std::vector<SmoothLevel>& levels);

/// Normals from central differences (one-sided on the border):
/// n = normalize(-dh/dx, -dh/dy, 1).
NormalMap compute_normals(const HeightMap& h, double pitch);

}  // namespace gelsim
