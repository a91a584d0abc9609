#pragma once

#include <optional>

#include "gelsim/elastic.hpp"
#include "gelsim/grid.hpp"

namespace gelsim {

struct CropRect {
  int x = 0;  // left column
  int y = 0;  // top row
  int width = 0;
  int height = 0;
};

struct ImageMetrics {
  double l1 = 0;
  double mse = 0;
  double ssim = 1;
  double psnr = 0;  // +infinity when mse == 0
};

/// L1 and MSE over all pixels and channels, PSNR against a 255 peak, and SSIM
/// with an 11x11 Gaussian window (sigma 1.5, K1 0.01, K2 0.03) over the valid
/// region, averaged over channels. Throws DomainError on a shape mismatch or
/// images smaller than the window, RangeError on a crop outside the image.
ImageMetrics image_metrics(const ImageRgb& reference, const ImageRgb& candidate,
                           std::optional<CropRect> crop = std::nullopt);

ImageRgb crop_image(const ImageRgb& img, const CropRect& rect);

struct MarkerErrorReport {
  double magnitude_l1_mm = 0;
  double angular_error_deg = 0;
};

/// Mean |‖u_ref‖ - ‖u_cand‖| over markers, and the in-plane angle between
/// reference and candidate motions weighted by the reference in-plane
/// magnitude. A zero-length motion contributes an angle of zero.
MarkerErrorReport marker_errors(const MarkerField& reference, const MarkerField& candidate);

}  // namespace gelsim
