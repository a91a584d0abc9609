#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace gelsim {

/// Dense row-major 2D array. Row index first (image y), column second (image x).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, const T& fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    assert(rows >= 0 && cols >= 0);
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int r, int c) noexcept { return data_[index(r, c)]; }
  const T& operator()(int r, int c) const noexcept { return data_[index(r, c)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  bool contains(int r, int c) const noexcept {
    return r >= 0 && c >= 0 && r < rows_ && c < cols_;
  }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t index(int r, int c) const noexcept {
    assert(contains(r, c));
    return static_cast<std::size_t>(r) * cols_ + c;
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

/// Linear RGB intensity triple in camera units, nominally [0, 255].
struct Rgb {
  float r = 0.f;
  float g = 0.f;
  float b = 0.f;

  float& operator[](int c) noexcept { return c == 0 ? r : (c == 1 ? g : b); }
  float operator[](int c) const noexcept { return c == 0 ? r : (c == 1 ? g : b); }
  bool operator==(const Rgb&) const = default;
};

using ImageRgb = Grid<Rgb>;

/// Rounds every channel to the nearest integer level and clamps to [0, 255].
inline ImageRgb quantize(const ImageRgb& img) {
  ImageRgb out(img.rows(), img.cols());
  for (std::size_t i = 0; i < img.size(); ++i)
    for (int c = 0; c < 3; ++c)
      out[i][c] = std::clamp(std::nearbyint(img[i][c]), 0.f, 255.f);
  return out;
}

}  // namespace gelsim
