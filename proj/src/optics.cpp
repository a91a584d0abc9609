#include "gelsim/optics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "gelsim/error.hpp"

namespace gelsim {

NormalBin normal_to_bin(const Vec3f& n, const BinSpec& spec) {
  if (!(n.z > 0.f)) throw DomainError("normal must point toward the object (n.z > 0)");
  const double nx = n.x;
  const double ny = n.y;
  const double theta = std::min(std::atan2(std::sqrt(nx * nx + ny * ny), double{n.z}),
                                spec.theta_max);
  double phi = std::atan2(ny, nx);
  if (phi < 0) phi += 2.0 * std::numbers::pi;
  const int b = spec.bins;
  const int tb = std::min(b - 1, static_cast<int>(theta / spec.theta_max * b));
  const int pb = std::min(b - 1, static_cast<int>(phi / (2.0 * std::numbers::pi) * b));
  return {tb, pb};
}

PolynomialTable::PolynomialTable(BinSpec spec)
    : spec_(spec),
      coeffs_(static_cast<std::size_t>(spec.bins) * spec.bins * 3 * kPolyTerms, 0.f),
      fill_(static_cast<std::size_t>(spec.bins) * spec.bins, BinFill::interpolated) {}

float PolynomialTable::evaluate(NormalBin bin, int channel, float xn, float yn) const noexcept {
  const float* k = coeffs(bin.theta, bin.phi, channel);
  return k[0] * xn * xn + k[1] * yn * yn + k[2] * xn * yn + k[3] * xn + k[4] * yn + k[5];
}

LookupTable::LookupTable(BinSpec spec)
    : spec_(spec),
      values_(static_cast<std::size_t>(spec.bins) * spec.bins * 3, 0.f),
      fill_(static_cast<std::size_t>(spec.bins) * spec.bins, BinFill::interpolated) {}

FillStats fill_stats(const std::vector<BinFill>& fill) {
  FillStats s;
  for (BinFill f : fill) {
    switch (f) {
      case BinFill::calibrated: ++s.calibrated; break;
      case BinFill::interpolated: ++s.interpolated; break;
      case BinFill::degenerate: ++s.degenerate; break;
    }
  }
  return s;
}

NormalMap sphere_record_normals(const CalibrationRecord& rec, double pitch, ContactMask* inside) {
  const int rows = rec.image.rows();
  const int cols = rec.image.cols();
  NormalMap n(rows, cols);
  if (inside) *inside = ContactMask(rows, cols, 0);
  const double big_r = rec.ball_radius_mm;
  const double r2 = rec.radius_px * rec.radius_px;
  const int r0 = std::max(0, static_cast<int>(std::floor(rec.center_row - rec.radius_px)));
  const int r1 = std::min(rows - 1, static_cast<int>(std::ceil(rec.center_row + rec.radius_px)));
  const int c0 = std::max(0, static_cast<int>(std::floor(rec.center_col - rec.radius_px)));
  const int c1 = std::min(cols - 1, static_cast<int>(std::ceil(rec.center_col + rec.radius_px)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const double dc = c - rec.center_col;
      const double dr = r - rec.center_row;
      if (dc * dc + dr * dr >= r2) continue;
      const double dx = dc * pitch;
      const double dy = dr * pitch;
      const double dz = std::sqrt(big_r * big_r - dx * dx - dy * dy);
      n(r, c) = Vec3f{static_cast<float>(-dx / big_r), static_cast<float>(-dy / big_r),
                      static_cast<float>(dz / big_r)};
      if (inside) (*inside)(r, c) = 1;
    }
  }
  return n;
}

namespace {

struct Sample {
  int bin;
  float xn;
  float yn;
  Rgb intensity;
};

void check_record(const CalibrationRecord& rec, const SensorConfig& cfg, std::size_t idx) {
  const std::string tag = "calibration record " + std::to_string(idx) + ": ";
  if (rec.image.rows() != cfg.height_px || rec.image.cols() != cfg.width_px)
    throw CalibrationError(tag + "image size does not match the sensor");
  if (!rec.image.same_shape(rec.background))
    throw CalibrationError(tag + "background size does not match the image");
  if (!(rec.ball_radius_mm > 0)) throw CalibrationError(tag + "ball radius must be positive");
  if (!(rec.radius_px > 0)) throw CalibrationError(tag + "contact radius must be positive");
  if (rec.center_col - rec.radius_px < 0 || rec.center_row - rec.radius_px < 0 ||
      rec.center_col + rec.radius_px > cfg.width_px - 1 ||
      rec.center_row + rec.radius_px > cfg.height_px - 1)
    throw CalibrationError(tag + "contact circle leaves the image");
  if (rec.radius_px * cfg.pixel_pitch >= rec.ball_radius_mm)
    throw CalibrationError(tag + "contact circle is wider than the ball");
}

std::vector<Sample> collect_samples(const std::vector<CalibrationRecord>& records,
                                    const SensorConfig& cfg, const BinSpec& spec) {
  if (records.empty()) throw CalibrationError("no calibration records");
  cfg.validate();
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    check_record(rec, cfg, i);
    ContactMask inside;
    const NormalMap normals = sphere_record_normals(rec, cfg.pixel_pitch, &inside);
    for (int r = 0; r < inside.rows(); ++r) {
      for (int c = 0; c < inside.cols(); ++c) {
        if (!inside(r, c)) continue;
        const NormalBin b = normal_to_bin(normals(r, c), spec);
        samples.push_back({b.theta * spec.bins + b.phi, normalized_coord(c, cfg.width_px),
                           normalized_coord(r, cfg.height_px), rec.image(r, c)});
      }
    }
  }
  std::stable_sort(samples.begin(), samples.end(),
                   [](const Sample& a, const Sample& b) { return a.bin < b.bin; });
  return samples;
}

template <typename Fn>
void for_each_bin_range(const std::vector<Sample>& samples, Fn&& fn) {
  std::size_t lo = 0;
  while (lo < samples.size()) {
    std::size_t hi = lo;
    while (hi < samples.size() && samples[hi].bin == samples[lo].bin) ++hi;
    fn(samples[lo].bin, lo, hi);
    lo = hi;
  }
}

}  // namespace

void inpaint_bins(std::vector<double>& values, int width, const std::vector<bool>& known,
                  int bins) {
  const int n = bins * bins;
  std::vector<int> unknown_index(n, -1);
  int unknowns = 0;
  for (int i = 0; i < n; ++i)
    if (!known[i]) unknown_index[i] = unknowns++;
  if (unknowns == 0) return;
  if (unknowns == n) throw CalibrationError("no calibrated bins to interpolate from");

  // Weighted neighbour lists: theta +-1, periodic phi +-1, and across the pole.
  auto neighbours = [bins](int t, int p, auto&& visit) {
    if (t > 0) visit(t - 1, p, 1.0);
    if (t < bins - 1) visit(t + 1, p, 1.0);
    if (bins > 1) {
      visit(t, (p + 1) % bins, 1.0);
      visit(t, (p + bins - 1) % bins, 1.0);
    }
    if (t == 0 && bins > 1) {
      visit(0, (p + bins / 2) % bins, 0.5);
      visit(0, (p + (bins + 1) / 2) % bins, 0.5);
    }
  };

  std::vector<Eigen::Triplet<double>> trips;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(unknowns, width);
  for (int t = 0; t < bins; ++t) {
    for (int p = 0; p < bins; ++p) {
      const int self = t * bins + p;
      const int row = unknown_index[self];
      if (row < 0) continue;
      double diag = 0;
      neighbours(t, p, [&](int tn, int pn, double w) {
        const int other = tn * bins + pn;
        if (other == self) return;
        diag += w;
        if (known[other]) {
          for (int k = 0; k < width; ++k) rhs(row, k) += w * values[other * width + k];
        } else {
          trips.emplace_back(row, unknown_index[other], -w);
        }
      });
      trips.emplace_back(row, row, diag);
    }
  }
  Eigen::SparseMatrix<double> lap(unknowns, unknowns);
  lap.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(lap);
  if (solver.info() != Eigen::Success) throw NumericalError("bin interpolation failed to factor");
  const Eigen::MatrixXd sol = solver.solve(rhs);
  for (int i = 0; i < n; ++i) {
    const int row = unknown_index[i];
    if (row < 0) continue;
    for (int k = 0; k < width; ++k) values[i * width + k] = sol(row, k);
  }
}

namespace {

// Least-squares quadratic in (x, y) per channel, written into out[3 * 6].
// The fit runs in coordinates centred on the samples with one common scale,
// so a clustered sample cloud shows up as small pivots and those directions
// drop out of the minimum-norm solution. Returns the numerical rank.
int fit_bin(const std::vector<Sample>& samples, std::size_t lo, std::size_t hi, const Eigen::MatrixXd& y,
            double tolerance, double* out) {
  const int count = static_cast<int>(hi - lo);
  double mx = 0, my = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    mx += samples[i].xn;
    my += samples[i].yn;
  }
  mx /= count;
  my /= count;
  double var = 0;
  for (std::size_t i = lo; i < hi; ++i)
    var = std::max({var, (samples[i].xn - mx) * (samples[i].xn - mx), (samples[i].yn - my) * (samples[i].yn - my)});
  const double sc = var > 0 ? std::sqrt(var) : 1.0;
  Eigen::MatrixXd a(count, kPolyTerms);
  for (int i = 0; i < count; ++i) {
    const double u = (samples[lo + i].xn - mx) / sc;
    const double v = (samples[lo + i].yn - my) / sc;
    a.row(i) << u * u, v * v, u * v, u, v, 1.0;
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  cod.setThreshold(tolerance);
  const Eigen::MatrixXd k = cod.solve(y);
  const double s2 = sc * sc;
  for (int c = 0; c < 3; ++c) {
    const double k0 = k(0, c) / s2, k1 = k(1, c) / s2, k2 = k(2, c) / s2;
    const double k3 = k(3, c) / sc, k4 = k(4, c) / sc;
    double* o = out + c * kPolyTerms;
    o[0] = k0;
    o[1] = k1;
    o[2] = k2;
    o[3] = k3 - 2 * k0 * mx - k2 * my;
    o[4] = k4 - 2 * k1 * my - k2 * mx;
    o[5] = k(5, c) + k0 * mx * mx + k1 * my * my + k2 * mx * my - k3 * mx - k4 * my;
  }
  return static_cast<int>(cod.rank());
}

double eval_poly(const double* k, double x, double y) {
  return k[0] * x * x + k[1] * y * y + k[2] * x * y + k[3] * x + k[4] * y + k[5];
}

}  // namespace

PolynomialTable calibrate_polytable(const std::vector<CalibrationRecord>& records,
                                    const SensorConfig& cfg, const CalibrationOptions& opts) {
  const BinSpec& spec = opts.bins;
  const std::vector<Sample> samples = collect_samples(records, cfg, spec);
  const int n = spec.bins * spec.bins;
  constexpr int width = 3 * kPolyTerms;
  std::vector<double> values(static_cast<std::size_t>(n) * width, 0.0);
  std::vector<bool> known(n, false);
  PolynomialTable table(spec);

  for_each_bin_range(samples, [&](int bin, std::size_t lo, std::size_t hi) {
    const int count = static_cast<int>(hi - lo);
    if (count < opts.min_samples) return;
    Eigen::MatrixXd y(count, 3);
    for (int i = 0; i < count; ++i)
      for (int c = 0; c < 3; ++c) y(i, c) = samples[lo + i].intensity[c];
    const int rank = fit_bin(samples, lo, hi, y, opts.rank_tolerance, &values[static_cast<std::size_t>(bin) * width]);
    table.fill_mask()[bin] = rank < kPolyTerms ? BinFill::degenerate : BinFill::calibrated;
    known[bin] = true;
  });

  inpaint_bins(values, width, known, spec.bins);

  // Sparse bins keep the interpolated surface but are pulled onto their own
  // observations by a minimum-norm correction.
  for_each_bin_range(samples, [&](int bin, std::size_t lo, std::size_t hi) {
    if (known[bin]) return;
    const int count = static_cast<int>(hi - lo);
    double* k = &values[static_cast<std::size_t>(bin) * width];
    Eigen::MatrixXd resid(count, 3);
    for (int i = 0; i < count; ++i)
      for (int c = 0; c < 3; ++c)
        resid(i, c) = samples[lo + i].intensity[c] - eval_poly(k + c * kPolyTerms, samples[lo + i].xn, samples[lo + i].yn);
    double delta[width];
    fit_bin(samples, lo, hi, resid, opts.rank_tolerance, delta);
    for (int i = 0; i < width; ++i) k[i] += delta[i];
  });

  for (std::size_t i = 0; i < values.size(); ++i)
    table.raw()[i] = static_cast<float>(values[i]);
  return table;
}

LookupTable calibrate_lookup(const std::vector<CalibrationRecord>& records,
                             const SensorConfig& cfg, const CalibrationOptions& opts) {
  const BinSpec& spec = opts.bins;
  const std::vector<Sample> samples = collect_samples(records, cfg, spec);
  const int n = spec.bins * spec.bins;
  std::vector<double> values(static_cast<std::size_t>(n) * 3, 0.0);
  std::vector<bool> known(n, false);
  LookupTable table(spec);

  for_each_bin_range(samples, [&](int bin, std::size_t lo, std::size_t hi) {
    const int count = static_cast<int>(hi - lo);
    if (count < opts.min_samples) return;
    double sum[3] = {0, 0, 0};
    for (std::size_t i = lo; i < hi; ++i)
      for (int c = 0; c < 3; ++c) sum[c] += samples[i].intensity[c];
    for (int c = 0; c < 3; ++c) values[static_cast<std::size_t>(bin) * 3 + c] = sum[c] / count;
    known[bin] = true;
    table.fill_mask()[bin] = BinFill::calibrated;
  });

  inpaint_bins(values, 3, known, spec.bins);
  for (std::size_t i = 0; i < values.size(); ++i)
    table.raw()[i] = static_cast<float>(values[i]);
  return table;
}

namespace {

template <typename Shade>
ImageRgb render_with(const NormalMap& normals, const ImageRgb& background, const BinSpec& spec,
                     Shade&& shade) {
  if (!normals.same_shape(background))
    throw ConfigError("normal map and background image differ in size");
  const int rows = normals.rows();
  const int cols = normals.cols();
  std::vector<float> xs(cols);
  for (int c = 0; c < cols; ++c) xs[c] = normalized_coord(c, cols);
  ImageRgb out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const float yn = normalized_coord(r, rows);
    for (int c = 0; c < cols; ++c) {
      const Vec3f& n = normals(r, c);
      if (is_flat(n)) {
        out(r, c) = background(r, c);
        continue;
      }
      const NormalBin bin = normal_to_bin(n, spec);
      Rgb px;
      for (int ch = 0; ch < 3; ++ch)
        px[ch] = std::clamp(shade(bin, ch, xs[c], yn), 0.f, 255.f);
      out(r, c) = px;
    }
  }
  return out;
}

}  // namespace

ImageRgb render_optics(const NormalMap& normals, const PolynomialTable& table,
                       const ImageRgb& background) {
  return render_with(normals, background, table.spec(),
                     [&](NormalBin b, int ch, float x, float y) {
                       return table.evaluate(b, ch, x, y);
                     });
}

ImageRgb render_optics(const NormalMap& normals, const LookupTable& table,
                       const ImageRgb& background) {
  return render_with(normals, background, table.spec(),
                     [&](NormalBin b, int ch, float, float) {
                       return table.value(b.theta, b.phi, ch);
                     });
}

}  // namespace gelsim
