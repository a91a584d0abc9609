#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "gelsim/geometry.hpp"

namespace gelsim {

struct MarkerSpec {
  int rows = 0;
  int cols = 0;
  double spacing = 1.0;  // mm
  double origin_x = 0;   // mm, first marker
  double origin_y = 0;
};

/// One press to render or simulate. Paths are resolved against the scene
/// file's directory.
struct SceneSpec {
  std::filesystem::path mesh;
  Pose pose;
  double press_depth = 0;  // mm
  Eigen::Vector2d shear = Eigen::Vector2d::Zero();
  MarkerSpec markers;
  double node_spacing = 0;  // mm; 0 means 4x the pixel pitch
  std::filesystem::path sensor;  // empty: use the bundle's sensor snapshot
  std::filesystem::path bundle;
};

/// Parses `key = value` lines; `#` starts a comment. Throws ParseError with a
/// byte offset on unknown or duplicate keys and malformed values, RangeError
/// on a negative press depth.
SceneSpec parse_scene(const std::string& text, const std::filesystem::path& base_dir);

/// Reads and parses a scene, then checks that the referenced files exist.
SceneSpec load_scene(const std::filesystem::path& path);

/// Sensor description in the same key-value syntax. Keys: width, height,
/// pitch, max_indent, gel (`flat`, `dome` or a PFM path), dome_radius.
SensorConfig parse_sensor(const std::string& text, const std::filesystem::path& base_dir);
SensorConfig load_sensor(const std::filesystem::path& path);

}  // namespace gelsim
