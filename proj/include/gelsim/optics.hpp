#pragma once

#include <cstdint>
#include <numbers>
#include <vector>

#include "gelsim/geometry.hpp"
#include "gelsim/grid.hpp"

namespace gelsim {

/// Polar-angle / azimuth cell of the normal table.
struct NormalBin {
  int theta = 0;
  int phi = 0;
  bool operator==(const NormalBin&) const = default;
};

struct BinSpec {
  int bins = 125;
  double theta_max = 70.0 * std::numbers::pi / 180.0;  // radians
  bool operator==(const BinSpec&) const = default;
};

/// Bins a unit normal by polar angle (clamped to theta_max) and azimuth.
/// Throws DomainError when n.z <= 0.
NormalBin normal_to_bin(const Vec3f& n, const BinSpec& spec);

enum class BinFill : std::uint8_t {
  calibrated = 0,
  interpolated = 1,  // too few samples, filled from neighbouring bins and fitted to any it has
  degenerate = 2,    // enough samples but rank-deficient fit, minimum-norm solution used
};

/// Number of coefficients per polynomial: a x^2 + b y^2 + c xy + d x + e y + f.
inline constexpr int kPolyTerms = 6;

/// Per-bin, per-channel quadratic in normalized image coordinates.
/// Coefficient layout: [theta][phi][channel][term], C order.
class PolynomialTable {
 public:
  PolynomialTable() = default;
  explicit PolynomialTable(BinSpec spec);

  const BinSpec& spec() const noexcept { return spec_; }
  int bins() const noexcept { return spec_.bins; }

  float* coeffs(int theta, int phi, int channel) noexcept {
    return &coeffs_[offset(theta, phi, channel)];
  }
  const float* coeffs(int theta, int phi, int channel) const noexcept {
    return &coeffs_[offset(theta, phi, channel)];
  }
  BinFill& fill(int theta, int phi) noexcept { return fill_[theta * spec_.bins + phi]; }
  BinFill fill(int theta, int phi) const noexcept { return fill_[theta * spec_.bins + phi]; }

  std::vector<float>& raw() noexcept { return coeffs_; }
  const std::vector<float>& raw() const noexcept { return coeffs_; }
  std::vector<BinFill>& fill_mask() noexcept { return fill_; }
  const std::vector<BinFill>& fill_mask() const noexcept { return fill_; }

  /// Intensity of one channel at normalized coordinates (xn, yn) in [-1, 1].
  float evaluate(NormalBin bin, int channel, float xn, float yn) const noexcept;

  bool operator==(const PolynomialTable&) const = default;

 private:
  std::size_t offset(int theta, int phi, int channel) const noexcept {
    return ((static_cast<std::size_t>(theta) * spec_.bins + phi) * 3 + channel) * kPolyTerms;
  }

  BinSpec spec_;
  std::vector<float> coeffs_;
  std::vector<BinFill> fill_;
};

/// Location-independent baseline: one constant intensity per bin and channel.
/// Layout: [theta][phi][channel].
class LookupTable {
 public:
  LookupTable() = default;
  explicit LookupTable(BinSpec spec);

  const BinSpec& spec() const noexcept { return spec_; }
  int bins() const noexcept { return spec_.bins; }

  float& value(int theta, int phi, int channel) noexcept {
    return values_[(static_cast<std::size_t>(theta) * spec_.bins + phi) * 3 + channel];
  }
  float value(int theta, int phi, int channel) const noexcept {
    return values_[(static_cast<std::size_t>(theta) * spec_.bins + phi) * 3 + channel];
  }
  BinFill& fill(int theta, int phi) noexcept { return fill_[theta * spec_.bins + phi]; }
  BinFill fill(int theta, int phi) const noexcept { return fill_[theta * spec_.bins + phi]; }

  std::vector<float>& raw() noexcept { return values_; }
  const std::vector<float>& raw() const noexcept { return values_; }
  std::vector<BinFill>& fill_mask() noexcept { return fill_; }
  const std::vector<BinFill>& fill_mask() const noexcept { return fill_; }

  bool operator==(const LookupTable&) const = default;

 private:
  BinSpec spec_;
  std::vector<float> values_;
  std::vector<BinFill> fill_;
};

/// One press of a calibration ball with its hand-located contact circle.
struct CalibrationRecord {
  ImageRgb image;
  ImageRgb background;
  double center_col = 0;  // pixels
  double center_row = 0;
  double radius_px = 0;        // contact circle radius
  double ball_radius_mm = 2.0;
};

struct CalibrationOptions {
  BinSpec bins;
  int min_samples = 15;
  double rank_tolerance = 1e-6;  // relative pivot below which a fit direction is dropped
};

struct FillStats {
  int calibrated = 0;
  int interpolated = 0;
  int degenerate = 0;
};

FillStats fill_stats(const std::vector<BinFill>& fill);

/// Analytic normals of the ball surface inside the record's contact circle.
/// Pixels outside the circle get (0, 0, 1); `inside` marks the circle.
NormalMap sphere_record_normals(const CalibrationRecord& rec, double pitch, ContactMask* inside);

/// Fits the polynomial table by per-bin least squares on (I, n, x, y) samples.
PolynomialTable calibrate_polytable(const std::vector<CalibrationRecord>& records,
                                    const SensorConfig& cfg, const CalibrationOptions& opts = {});

/// Fits the lookup baseline: per-bin mean intensity.
LookupTable calibrate_lookup(const std::vector<CalibrationRecord>& records,
                             const SensorConfig& cfg, const CalibrationOptions& opts = {});

/// Fills unknown bins with the discrete harmonic interpolant of the known
/// ones, i.e. the fixed point of repeated neighbour averaging. Azimuth is
/// periodic and theta bin 0 connects across the pole to phi + pi.
///
/// `values` holds `width` doubles per bin in [theta][phi] order; `known`
/// flags the fixed bins. Throws CalibrationError when nothing is known.
void inpaint_bins(std::vector<double>& values, int width, const std::vector<bool>& known,
                  int bins);

/// Per-pixel lookup of normals through the table. Flat normals copy the
/// background. Output clamped to [0, 255].
ImageRgb render_optics(const NormalMap& normals, const PolynomialTable& table,
                       const ImageRgb& background);
ImageRgb render_optics(const NormalMap& normals, const LookupTable& table,
                       const ImageRgb& background);

/// Normalized image coordinate in [-1, 1] of a pixel index along an axis of `n` pixels.
inline float normalized_coord(int i, int n) noexcept {
  return n > 1 ? 2.f * static_cast<float>(i) / static_cast<float>(n - 1) - 1.f : 0.f;
}

/// Whether a normal counts as the undeformed surface.
inline bool is_flat(const Vec3f& n) noexcept { return n.x * n.x + n.y * n.y <= 1e-10f; }

}  // namespace gelsim
