#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace prgbd {

/// Dense row-major 2D array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  const T& operator()(int x, int y) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Grid& other) const { return width_ == other.width_ && height_ == other.height_; }
  template <typename U>
  bool same_shape(const Grid<U>& other) const { return width_ == other.width() && height_ == other.height(); }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Grayscale intensities in [0, 1].
using Image = Grid<double>;

struct ImageSample {
  double value = 0.0;
  double d_du = 0.0;
  double d_dv = 0.0;
};

/// Bilinear lookup with coordinates clamped to the image border.
/// Derivatives are zero along a clamped axis.
ImageSample sample_bilinear(const Image& image, double u, double v);

}  // namespace prgbd
