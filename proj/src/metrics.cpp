#include "gelsim/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "gelsim/error.hpp"

namespace gelsim {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kPeak = 255.0;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> w{};
  double sum = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable 'valid' filtering of a rows x cols plane.
std::vector<double> filter_valid(const std::vector<double>& src, int rows, int cols,
                                 const std::array<double, kWindow>& w) {
  const int orows = rows - kWindow + 1, ocols = cols - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(rows) * ocols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < ocols; ++c) {
      double s = 0;
      for (int k = 0; k < kWindow; ++k) s += w[k] * src[static_cast<std::size_t>(r) * cols + c + k];
      tmp[static_cast<std::size_t>(r) * ocols + c] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(orows) * ocols);
  for (int r = 0; r < orows; ++r)
    for (int c = 0; c < ocols; ++c) {
      double s = 0;
      for (int k = 0; k < kWindow; ++k) s += w[k] * tmp[static_cast<std::size_t>(r + k) * ocols + c];
      out[static_cast<std::size_t>(r) * ocols + c] = s;
    }
  return out;
}

double ssim_channel(const ImageRgb& a, const ImageRgb& b, int ch) {
  const int rows = a.rows(), cols = a.cols();
  const std::size_t n = a.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a[i][ch];
    y[i] = b[i][ch];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto w = gaussian_taps();
  const auto mx = filter_valid(x, rows, cols, w), my = filter_valid(y, rows, cols, w);
  const auto sxx = filter_valid(xx, rows, cols, w), syy = filter_valid(yy, rows, cols, w);
  const auto sxy = filter_valid(xy, rows, cols, w);
  const double c1 = (0.01 * kPeak) * (0.01 * kPeak), c2 = (0.03 * kPeak) * (0.03 * kPeak);
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace

ImageRgb crop_image(const ImageRgb& img, const CropRect& rect) {
  if (rect.width <= 0 || rect.height <= 0 || rect.x < 0 || rect.y < 0 ||
      rect.x + rect.width > img.cols() || rect.y + rect.height > img.rows())
    throw RangeError("crop rectangle outside the image");
  ImageRgb out(rect.height, rect.width);
  for (int r = 0; r < rect.height; ++r)
    for (int c = 0; c < rect.width; ++c) out(r, c) = img(rect.y + r, rect.x + c);
  return out;
}

ImageMetrics image_metrics(const ImageRgb& reference, const ImageRgb& candidate,
                           std::optional<CropRect> crop) {
  if (!reference.same_shape(candidate)) throw DomainError("image dimensions differ");
  if (crop) return image_metrics(crop_image(reference, *crop), crop_image(candidate, *crop));
  if (reference.rows() < kWindow || reference.cols() < kWindow)
    throw DomainError("images must be at least 11x11 for SSIM");

  ImageMetrics m;
  double l1 = 0, sq = 0;
  for (std::size_t i = 0; i < reference.size(); ++i)
    for (int ch = 0; ch < 3; ++ch) {
      const double d = static_cast<double>(reference[i][ch]) - candidate[i][ch];
      l1 += std::abs(d);
      sq += d * d;
    }
  const double count = static_cast<double>(reference.size()) * 3;
  m.l1 = l1 / count;
  m.mse = sq / count;
  m.psnr = m.mse == 0 ? std::numeric_limits<double>::infinity()
                      : 10.0 * std::log10(kPeak * kPeak / m.mse);
  m.ssim = (ssim_channel(reference, candidate, 0) + ssim_channel(reference, candidate, 1) +
            ssim_channel(reference, candidate, 2)) /
           3.0;
  return m;
}

MarkerErrorReport marker_errors(const MarkerField& reference, const MarkerField& candidate) {
  const std::size_t n = reference.positions.size();
  if (candidate.positions.size() != n || reference.displacement.size() != n ||
      candidate.displacement.size() != n)
    throw DomainError("marker fields differ in size");
  for (std::size_t i = 0; i < n; ++i)
    if ((reference.positions[i] - candidate.positions[i]).norm() > 1e-9)
      throw DomainError("marker positions differ");

  MarkerErrorReport rep;
  if (n == 0) return rep;
  double l1 = 0, weighted = 0, weight = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3d& a = reference.displacement[i];
    const Vec3d& b = candidate.displacement[i];
    l1 += std::abs(a.norm() - b.norm());
    const double w = std::hypot(a.x(), a.y());
    const double cross = a.x() * b.y() - a.y() * b.x();
    const double dot = a.x() * b.x() + a.y() * b.y();
    weighted += w * std::atan2(std::abs(cross), dot);
    weight += w;
  }
  rep.magnitude_l1_mm = l1 / static_cast<double>(n);
  rep.angular_error_deg = weight > 0 ? weighted / weight * 180.0 / std::numbers::pi : 0.0;
  return rep;
}

}  // namespace gelsim
