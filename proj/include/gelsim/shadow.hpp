#pragma once

#include <array>
#include <vector>

#include "gelsim/geometry.hpp"
#include "gelsim/grid.hpp"
#include "gelsim/optics.hpp"

namespace gelsim {

/// Integer pixel offset (row, column).
struct PixelOffset {
  int row = 0;
  int col = 0;
  bool operator==(const PixelOffset&) const = default;
};

/// Shadow cast by the calibration pin at one press depth, seen in one channel.
struct ShadowMask {
  double depth_mm = 0;
  Grid<float> stencil;     // multiplicative attenuation in [0, 1]
  PixelOffset anchor;      // casting pixel inside the stencil
  double dir_x = 1, dir_y = 0;  // principal direction observed in this record
  double length_px = 0;    // reach of the shadow along the light direction

  bool operator==(const ShadowMask&) const = default;
};

/// One LED group. Its shadows always fall along `dir`.
struct LightShadows {
  double dir_x = 1, dir_y = 0;
  double unit_width_px = 0;  // across-direction extent of one pin's casting edge
  std::vector<ShadowMask> masks;  // strictly increasing depth

  bool operator==(const LightShadows&) const = default;
};

/// Unit shadows for the red, green and blue light groups.
struct ShadowMaskSet {
  std::array<LightShadows, 3> lights;
  double depth_step_mm = 0;

  bool empty() const noexcept;
  bool operator==(const ShadowMaskSet&) const = default;
};

/// Pin pressed straight into the gel, used to collect unit shadows.
struct PinPressRecord {
  ImageRgb image;
  ImageRgb background;
  double center_col = 0;
  double center_row = 0;
  double pin_diameter_mm = 1.0;
  double depth_mm = 0;
};

struct ShadowOptions {
  double darken_threshold = 4.0;   // intensity levels below background
  double height_threshold = 0.05;  // mm, neighbour drop that makes a pixel cast
};

/// Segments the darkened region next to each pin, per channel.
/// Throws CalibrationError with fewer than two distinct depths or when no
/// channel shows a shadow.
ShadowMaskSet extract_shadow_masks(const std::vector<PinPressRecord>& records,
                                   const SensorConfig& cfg, const ShadowOptions& opts = {});

/// One unit shadow placed at a casting pixel.
struct ShadowCast {
  int light = 0;
  int mask = 0;
  int row = 0;
  int col = 0;
  bool operator==(const ShadowCast&) const = default;
};

/// Finds casting pixels: contact pixels whose neighbour along a light's
/// direction lies lower by more than the height threshold. The casting pixels
/// of each contact region are cut into pin-wide segments across the light
/// direction; each segment casts one unit shadow picked by its protrusion
/// height.
std::vector<ShadowCast> find_shadow_casts(const HeightMap& h, const ContactMask& mask,
                                          const ShadowMaskSet& set,
                                          const ShadowOptions& opts = {});

/// Multiplies the casts' stencils into per-channel attenuation. The result
/// does not depend on the order of `casts`.
std::array<Grid<float>, 3> accumulate_shadows(int rows, int cols,
                                              const std::vector<ShadowCast>& casts,
                                              const ShadowMaskSet& set);

/// Darkens `image` with the shadows cast by the height map.
ImageRgb attach_shadows(const ImageRgb& image, const HeightMap& h, const ContactMask& mask,
                        const ShadowMaskSet& set, const ShadowOptions& opts = {});

/// Pixel step along a unit direction, rounded to one of the 8 neighbours.
PixelOffset direction_step(double dx, double dy) noexcept;

/// Casting pixel of a set of edge pixels: furthest along the direction,
/// nearest the middle of the set across it.
PixelOffset casting_anchor(const std::vector<PixelOffset>& pixels, double dx, double dy);

}  // namespace gelsim
