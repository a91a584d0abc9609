#include "gelsim/shadow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "gelsim/error.hpp"

namespace gelsim {

bool ShadowMaskSet::empty() const noexcept {
  return std::all_of(lights.begin(), lights.end(),
                     [](const LightShadows& l) { return l.masks.empty(); });
}

PixelOffset direction_step(double dx, double dy) noexcept {
  return {static_cast<int>(std::lround(dy)), static_cast<int>(std::lround(dx))};
}

PixelOffset casting_anchor(const std::vector<PixelOffset>& pixels, double dx, double dy) {
  if (pixels.empty()) throw DomainError("casting anchor of an empty pixel set");
  double best_along = -std::numeric_limits<double>::infinity();
  double mean_across = 0;
  for (const auto& p : pixels) {
    best_along = std::max(best_along, p.col * dx + p.row * dy);
    mean_across += -p.col * dy + p.row * dx;
  }
  mean_across /= static_cast<double>(pixels.size());
  PixelOffset best = pixels.front();
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& p : pixels) {
    if (p.col * dx + p.row * dy < best_along - 1e-9) continue;
    const double dist = std::abs(-p.col * dy + p.row * dx - mean_across);
    const bool better = dist < best_dist - 1e-9 ||
                        (std::abs(dist - best_dist) <= 1e-9 &&
                         (p.row < best.row || (p.row == best.row && p.col < best.col)));
    if (better) {
      best = p;
      best_dist = dist;
    }
  }
  return best;
}

namespace {

constexpr int kNeighbours8[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1},
                                    {0, 1},   {1, -1}, {1, 0},  {1, 1}};

// 8-connected components of the flagged pixels, in raster order of their seeds.
std::vector<std::vector<PixelOffset>> components(const Grid<std::uint8_t>& flags) {
  Grid<std::uint8_t> seen(flags.rows(), flags.cols(), 0);
  std::vector<std::vector<PixelOffset>> out;
  std::vector<PixelOffset> stack;
  for (int r = 0; r < flags.rows(); ++r) {
    for (int c = 0; c < flags.cols(); ++c) {
      if (!flags(r, c) || seen(r, c)) continue;
      std::vector<PixelOffset> comp;
      stack.push_back({r, c});
      seen(r, c) = 1;
      while (!stack.empty()) {
        const PixelOffset p = stack.back();
        stack.pop_back();
        comp.push_back(p);
        for (const auto& d : kNeighbours8) {
          const int rr = p.row + d[0];
          const int cc = p.col + d[1];
          if (flags.contains(rr, cc) && flags(rr, cc) && !seen(rr, cc)) {
            seen(rr, cc) = 1;
            stack.push_back({rr, cc});
          }
        }
      }
      std::sort(comp.begin(), comp.end(), [](const PixelOffset& a, const PixelOffset& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
      });
      out.push_back(std::move(comp));
    }
  }
  return out;
}

Grid<std::uint8_t> pin_disk(int rows, int cols, double cr, double cc, double radius) {
  Grid<std::uint8_t> disk(rows, cols, 0);
  const double r2 = radius * radius;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= r2) disk(r, c) = 1;
  return disk;
}

// Pixels of `region` whose neighbour one step along the direction is outside it.
std::vector<PixelOffset> edge_pixels(const Grid<std::uint8_t>& region, PixelOffset step) {
  std::vector<PixelOffset> out;
  for (int r = 0; r < region.rows(); ++r) {
    for (int c = 0; c < region.cols(); ++c) {
      if (!region(r, c)) continue;
      const int rr = r + step.row;
      const int cc = c + step.col;
      if (!region.contains(rr, cc) || !region(rr, cc)) out.push_back({r, c});
    }
  }
  return out;
}

double across_extent(const std::vector<PixelOffset>& pixels, double dx, double dy) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : pixels) {
    const double t = -p.col * dy + p.row * dx;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  return hi - lo + 1.0;
}

struct RawShadow {
  std::vector<PixelOffset> region;  // darkened pixels
  double dir_x = 0, dir_y = 0;
};

}  // namespace

ShadowMaskSet extract_shadow_masks(const std::vector<PinPressRecord>& records,
                                   const SensorConfig& cfg, const ShadowOptions& opts) {
  cfg.validate();
  if (records.size() < 2) throw CalibrationError("shadow calibration needs at least two pin presses");
  std::vector<double> depths;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    const std::string tag = "pin record " + std::to_string(i) + ": ";
    if (!(rec.depth_mm > 0)) throw CalibrationError(tag + "press depth must be positive");
    if (!(rec.pin_diameter_mm > 0)) throw CalibrationError(tag + "pin diameter must be positive");
    if (rec.image.rows() != cfg.height_px || rec.image.cols() != cfg.width_px ||
        !rec.image.same_shape(rec.background))
      throw CalibrationError(tag + "image size does not match the sensor");
    const double rp = rec.pin_diameter_mm / 2 / cfg.pixel_pitch;
    if (rec.center_col - rp < 0 || rec.center_row - rp < 0 ||
        rec.center_col + rp > cfg.width_px - 1 || rec.center_row + rp > cfg.height_px - 1)
      throw CalibrationError(tag + "pin circle leaves the image");
    depths.push_back(rec.depth_mm);
  }
  std::sort(depths.begin(), depths.end());
  if (std::adjacent_find(depths.begin(), depths.end()) != depths.end())
    throw CalibrationError("pin presses must have distinct depths");

  const int rows = cfg.height_px;
  const int cols = cfg.width_px;

  // raw[channel][record]
  std::array<std::vector<RawShadow>, 3> raw;
  for (int ch = 0; ch < 3; ++ch) raw[ch].resize(records.size());

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    const double rp = rec.pin_diameter_mm / 2 / cfg.pixel_pitch;
    for (int ch = 0; ch < 3; ++ch) {
      Grid<std::uint8_t> dark(rows, cols, 0);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          const double dr = r - rec.center_row;
          const double dc = c - rec.center_col;
          if (dr * dr + dc * dc <= (rp + 1) * (rp + 1)) continue;
          if (rec.background(r, c)[ch] - rec.image(r, c)[ch] > opts.darken_threshold)
            dark(r, c) = 1;
        }
      }
      RawShadow shadow;
      double wx = 0, wy = 0;
      for (auto& comp : components(dark)) {
        const bool touches = std::any_of(comp.begin(), comp.end(), [&](const PixelOffset& p) {
          const double dr = p.row - rec.center_row;
          const double dc = p.col - rec.center_col;
          return dr * dr + dc * dc <= (rp + 3) * (rp + 3);
        });
        if (!touches) continue;
        for (const auto& p : comp) {
          const double bg = rec.background(p.row, p.col)[ch];
          const double ratio = bg > 0 ? rec.image(p.row, p.col)[ch] / bg : 1.0;
          const double w = 1.0 - std::clamp(ratio, 0.0, 1.0);
          wx += w * (p.col - rec.center_col);
          wy += w * (p.row - rec.center_row);
          shadow.region.push_back(p);
        }
      }
      const double norm = std::hypot(wx, wy);
      if (shadow.region.empty() || norm == 0) continue;
      shadow.dir_x = wx / norm;
      shadow.dir_y = wy / norm;
      raw[ch][i] = std::move(shadow);
    }
  }

  ShadowMaskSet set;
  set.depth_step_mm = depths.size() > 1 ? depths[1] - depths[0] : 0;
  for (std::size_t k = 2; k < depths.size(); ++k)
    set.depth_step_mm = std::min(set.depth_step_mm, depths[k] - depths[k - 1]);

  for (int ch = 0; ch < 3; ++ch) {
    double gx = 0, gy = 0;
    for (const auto& s : raw[ch]) {
      gx += s.dir_x;
      gy += s.dir_y;
    }
    const double gn = std::hypot(gx, gy);
    if (gn == 0) continue;
    LightShadows& light = set.lights[ch];
    light.dir_x = gx / gn;
    light.dir_y = gy / gn;
    const PixelOffset step = direction_step(light.dir_x, light.dir_y);

    for (std::size_t i = 0; i < records.size(); ++i) {
      const RawShadow& s = raw[ch][i];
      if (s.region.empty()) continue;
      const auto& rec = records[i];
      const double rp = rec.pin_diameter_mm / 2 / cfg.pixel_pitch;
      const auto disk = pin_disk(rows, cols, rec.center_row, rec.center_col, rp);
      const auto edge = edge_pixels(disk, step);
      const PixelOffset anchor = casting_anchor(edge, light.dir_x, light.dir_y);
      light.unit_width_px = std::max(light.unit_width_px,
                                     across_extent(edge, light.dir_x, light.dir_y));

      int r0 = anchor.row, r1 = anchor.row, c0 = anchor.col, c1 = anchor.col;
      double reach = 0;
      for (const auto& p : s.region) {
        r0 = std::min(r0, p.row);
        r1 = std::max(r1, p.row);
        c0 = std::min(c0, p.col);
        c1 = std::max(c1, p.col);
        reach = std::max(reach, (p.col - anchor.col) * light.dir_x +
                                    (p.row - anchor.row) * light.dir_y);
      }
      ShadowMask m;
      m.depth_mm = rec.depth_mm;
      m.stencil = Grid<float>(r1 - r0 + 1, c1 - c0 + 1, 1.f);
      m.anchor = {anchor.row - r0, anchor.col - c0};
      m.dir_x = s.dir_x;
      m.dir_y = s.dir_y;
      m.length_px = reach;
      for (const auto& p : s.region) {
        const float bg = rec.background(p.row, p.col)[ch];
        const float ratio = bg > 0 ? rec.image(p.row, p.col)[ch] / bg : 1.f;
        m.stencil(p.row - r0, p.col - c0) = std::clamp(ratio, 0.f, 1.f);
      }
      light.masks.push_back(std::move(m));
    }
    std::sort(light.masks.begin(), light.masks.end(),
              [](const ShadowMask& a, const ShadowMask& b) { return a.depth_mm < b.depth_mm; });
  }

  if (set.empty()) throw CalibrationError("no shadow found next to any pin press");
  return set;
}

std::vector<ShadowCast> find_shadow_casts(const HeightMap& h, const ContactMask& mask,
                                          const ShadowMaskSet& set, const ShadowOptions& opts) {
  if (!h.same_shape(mask)) throw ConfigError("height map and contact mask differ in size");
  std::vector<ShadowCast> casts;
  const int rows = h.rows();
  const int cols = h.cols();
  if (set.empty()) return casts;
  // Casting edges are grouped by the contact region they belong to.
  const auto regions = components(mask);
  for (int light = 0; light < 3; ++light) {
    const LightShadows& ls = set.lights[light];
    if (ls.masks.empty()) continue;
    const PixelOffset step = direction_step(ls.dir_x, ls.dir_y);

    std::vector<std::vector<PixelOffset>> groups;
    for (const auto& region : regions) {
      std::vector<PixelOffset> edge;
      for (const auto& p : region) {
        const int rr = p.row + step.row;
        const int cc = p.col + step.col;
        if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
        if (h(rr, cc) - h(p.row, p.col) > opts.height_threshold) edge.push_back(p);
      }
      if (!edge.empty()) groups.push_back(std::move(edge));
    }
    if (groups.empty()) continue;

    double max_reach = 0;
    for (const auto& m : ls.masks) max_reach = std::max(max_reach, m.length_px);
    const int reach_steps = static_cast<int>(std::ceil(max_reach)) + 1;
    const double unit = std::max(1.0, ls.unit_width_px);

    for (const auto& comp : groups) {
      double lo = std::numeric_limits<double>::infinity();
      for (const auto& p : comp) lo = std::min(lo, -p.col * ls.dir_y + p.row * ls.dir_x);
      const double extent = across_extent(comp, ls.dir_x, ls.dir_y);
      const int segments = std::max(1, static_cast<int>(std::ceil(extent / unit - 1e-9)));
      const double seg_width = extent / segments;
      std::vector<std::vector<PixelOffset>> parts(segments);
      for (const auto& p : comp) {
        const double t = -p.col * ls.dir_y + p.row * ls.dir_x - lo;
        parts[std::min(segments - 1, static_cast<int>(t / seg_width))].push_back(p);
      }
      for (const auto& part : parts) {
        if (part.empty()) continue;
        const PixelOffset a = casting_anchor(part, ls.dir_x, ls.dir_y);
        double protrusion = 0;
        for (int k = 1; k <= reach_steps; ++k) {
          const int rr = a.row + k * step.row;
          const int cc = a.col + k * step.col;
          if (!h.contains(rr, cc)) break;
          protrusion = std::max(protrusion, static_cast<double>(h(rr, cc)) - h(a.row, a.col));
        }
        int best = 0;
        for (int m = 1; m < static_cast<int>(ls.masks.size()); ++m)
          if (std::abs(ls.masks[m].depth_mm - protrusion) <
              std::abs(ls.masks[best].depth_mm - protrusion))
            best = m;
        casts.push_back({light, best, a.row, a.col});
      }
    }
  }
  return casts;
}

std::array<Grid<float>, 3> accumulate_shadows(int rows, int cols,
                                              const std::vector<ShadowCast>& casts,
                                              const ShadowMaskSet& set) {
  std::array<Grid<float>, 3> atten{Grid<float>(rows, cols, 1.f), Grid<float>(rows, cols, 1.f),
                                   Grid<float>(rows, cols, 1.f)};
  std::vector<ShadowCast> ordered = casts;
  std::sort(ordered.begin(), ordered.end(), [](const ShadowCast& a, const ShadowCast& b) {
    if (a.light != b.light) return a.light < b.light;
    if (a.row != b.row) return a.row < b.row;
    if (a.col != b.col) return a.col < b.col;
    return a.mask < b.mask;
  });
  for (const auto& cast : ordered) {
    if (cast.light < 0 || cast.light > 2) throw RangeError("shadow cast light index out of range");
    const auto& masks = set.lights[cast.light].masks;
    if (cast.mask < 0 || cast.mask >= static_cast<int>(masks.size()))
      throw RangeError("shadow cast mask index out of range");
    const ShadowMask& m = masks[cast.mask];
    Grid<float>& a = atten[cast.light];
    for (int sr = 0; sr < m.stencil.rows(); ++sr) {
      const int r = cast.row + sr - m.anchor.row;
      if (r < 0 || r >= rows) continue;
      for (int sc = 0; sc < m.stencil.cols(); ++sc) {
        const int c = cast.col + sc - m.anchor.col;
        if (c < 0 || c >= cols || (r == cast.row && c == cast.col)) continue;
        a(r, c) *= m.stencil(sr, sc);
      }
    }
  }
  for (auto& a : atten)
    for (float& v : a.values()) v = std::clamp(v, 0.f, 1.f);
  return atten;
}

ImageRgb attach_shadows(const ImageRgb& image, const HeightMap& h, const ContactMask& mask,
                        const ShadowMaskSet& set, const ShadowOptions& opts) {
  if (!image.same_shape(h)) throw ConfigError("image and height map differ in size");
  if (set.empty()) return image;
  const auto casts = find_shadow_casts(h, mask, set, opts);
  if (casts.empty()) return image;
  const auto atten = accumulate_shadows(image.rows(), image.cols(), casts, set);
  ImageRgb out = image;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (int ch = 0; ch < 3; ++ch) out[i][ch] *= atten[ch][i];
  return out;
}

}  // namespace gelsim
