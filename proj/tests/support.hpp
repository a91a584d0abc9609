#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "gelsim/grid.hpp"

namespace gelsim::test {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "gelsim") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Image with integer levels drawn uniformly from [0, 255].
inline ImageRgb random_image(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> level(0, 255);
  ImageRgb img(rows, cols);
  for (std::size_t i = 0; i < img.size(); ++i)
    for (int c = 0; c < 3; ++c) img[i][c] = static_cast<float>(level(rng));
  return img;
}

inline double max_abs_diff(const ImageRgb& a, const ImageRgb& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int c = 0; c < 3; ++c)
      worst = std::max(worst, static_cast<double>(std::abs(a[i][c] - b[i][c])));
  return worst;
}

}  // namespace gelsim::test
