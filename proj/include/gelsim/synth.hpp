#pragma once

#include <cstdint>
#include <vector>

#include "gelsim/elastic.hpp"
#include "gelsim/geometry.hpp"
#include "gelsim/optics.hpp"
#include "gelsim/shadow.hpp"

namespace gelsim::synth {

/// Polynomial table whose coefficients vary smoothly with the bin-centre
/// normal, lit by three lights at azimuths 0, 120 and 240 degrees. Every
/// value stays inside (0, 255) for all pixels.
PolynomialTable planted_table(const BinSpec& spec = {});

/// Flat-gel appearance: the table's (0, 0) bin evaluated at every pixel, quantized.
ImageRgb planted_background(const PolynomialTable& table, const SensorConfig& cfg);

/// Direct evaluation of the table: flat normals take the background, the
/// rest evaluate their bin's polynomial. Not quantized.
ImageRgb shade(const NormalMap& normals, const PolynomialTable& table, const ImageRgb& background);

/// Normals of a ball of radius `ball_radius_mm` pressed `depth_mm` into a flat
/// gel at the given pixel centre; (0, 0, 1) outside the contact circle.
NormalMap ball_normals(const SensorConfig& cfg, double center_col, double center_row,
                       double ball_radius_mm, double depth_mm);

/// Contact circle radius in pixels for a ball press.
double ball_contact_radius_px(const SensorConfig& cfg, double ball_radius_mm, double depth_mm);

/// Quantized ball-press image under the table, packaged as a calibration record.
CalibrationRecord ball_record(const PolynomialTable& table, const ImageRgb& background,
                              const SensorConfig& cfg, double center_col, double center_row,
                              double ball_radius_mm, double depth_mm);

/// `count` ball presses at random positions and depths in [0.3, 1.0] mm.
std::vector<CalibrationRecord> ball_records(const PolynomialTable& table, const ImageRgb& background,
                                            const SensorConfig& cfg, int count, std::uint64_t seed,
                                            double ball_radius_mm = 2.0);

/// Direction (unit, image x/y) along which light group `light` casts shadows.
Eigen::Vector2d shadow_direction(int light);

/// Planted attenuation of one light's shadow next to a pin, 1 where unshadowed.
float planted_shadow_ratio(int light, double dcol, double drow, double pin_radius_px, double depth_mm);

/// Flat-topped pin press: heights sit `depth_mm` below the gel on the disk
/// |p - centre| <= radius, which is also the contact mask.
PressResult pin_press(const SensorConfig& cfg, double center_col, double center_row,
                      double pin_diameter_mm, double depth_mm);

/// Exact press of a ball whose lowest point sits `depth_mm` below the gel
/// surface under the given pixel centre. Mirror symmetric about that centre.
PressResult sphere_press(const SensorConfig& cfg, double center_col, double center_row,
                         double ball_radius_mm, double depth_mm);

/// Pin record on the given background with planted shadows in all three channels.
PinPressRecord pin_record(const ImageRgb& background, const SensorConfig& cfg, double center_col,
                          double center_row, double pin_diameter_mm, double depth_mm,
                          bool with_shadow = true);

/// Random 3x3 tensors on a (2 radius + 1)^2 grid with a dominant positive self term.
TensorKernel random_kernel(int radius, double spacing, std::uint64_t seed);

/// Unit-load fields produced by `kernel` for each prescription, on a
/// (2 extent + 1)^2 grid centred on the load (responses beyond the kernel
/// radius are zero).
std::vector<UnitLoadField> kernel_fields(const TensorKernel& kernel, const std::vector<Vec3d>& prescriptions,
                                         int extent);

/// Closed UV sphere centred at the origin.
TriangleMesh sphere_mesh(double radius, int segments = 64, int rings = 32);

/// Closed cylinder along z with its base on z = 0 and top at z = height.
TriangleMesh cylinder_mesh(double radius, double height, int segments = 64);

}  // namespace gelsim::synth
