#pragma once

#include <cmath>
#include <limits>

#include "gelsim/grid.hpp"

namespace gelsim::test {

struct BruteMetrics {
  double l1 = 0, mse = 0, ssim = 0, psnr = 0;
};

/// Direct evaluation: per-window two-pass statistics with a full 2D Gaussian.
inline BruteMetrics brute_force_metrics(const ImageRgb& a, const ImageRgb& b) {
  BruteMetrics m;
  const int rows = a.rows(), cols = a.cols();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const double d = double(a(r, c)[ch]) - double(b(r, c)[ch]);
        m.l1 += std::abs(d);
        m.mse += d * d;
      }
  m.l1 /= rows * cols * 3.0;
  m.mse /= rows * cols * 3.0;
  m.psnr = m.mse > 0 ? 20 * std::log10(255.0) - 10 * std::log10(m.mse)
                     : std::numeric_limits<double>::infinity();

  double w[11][11], wsum = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      wsum += w[i][j];
    }
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double total = 0;
  int windows = 0;
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r + 11 <= rows; ++r)
      for (int c = 0; c + 11 <= cols; ++c) {
        double mx = 0, my = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            mx += w[i][j] / wsum * a(r + i, c + j)[ch];
            my += w[i][j] / wsum * b(r + i, c + j)[ch];
          }
        double vx = 0, vy = 0, cov = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double dx = a(r + i, c + j)[ch] - mx, dy = b(r + i, c + j)[ch] - my;
            vx += w[i][j] / wsum * dx * dx;
            vy += w[i][j] / wsum * dy * dy;
            cov += w[i][j] / wsum * dx * dy;
          }
        total += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
  m.ssim = total / windows;
  return m;
}

/// True when |got - want| <= tol * |want|.
inline bool close_rel(double got, double want, double tol) {
  if (std::isinf(want) || want == 0) return got == want;
  return std::abs(got - want) <= tol * std::abs(want);
}

}  // namespace gelsim::test
