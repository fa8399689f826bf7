#pragma once

#include <array>
#include <cstddef>
#include <optional>

#include "prgbd/grid.hpp"

namespace prgbd {

inline constexpr double kMinFieldDepth = 0.1;
inline constexpr double kMaxFieldDepth = 120.0;

/// Result of a sub-pixel depth lookup together with its partial derivatives.
struct DepthSample {
  double depth = 0.0;
  std::array<std::size_t, 4> index{};
  /// d depth / d log-depth of each bilinear support pixel.
  std::array<double, 4> d_log{};
  double d_du = 0.0;
  double d_dv = 0.0;
};

/// Dense per-pixel depth map, parameterized by log-depth.
///
/// Sub-pixel lookups interpolate inverse depth bilinearly, which is exact on
/// planar surfaces (inverse depth is affine in pixel coordinates there).
class DepthField {
 public:
  DepthField() = default;
  DepthField(int width, int height, double depth);
  static DepthField from_depths(const Grid<double>& depths);

  int width() const { return log_depth_.width(); }
  int height() const { return log_depth_.height(); }
  std::size_t size() const { return log_depth_.size(); }

  double depth(int x, int y) const;
  double depth_at(std::size_t i) const;
  double log_depth_at(std::size_t i) const { return log_depth_[i]; }
  void set_depth(int x, int y, double depth);
  void set_log_depth_at(std::size_t i, double value) { log_depth_[i] = value; }

  const Grid<double>& log_depth() const { return log_depth_; }
  Grid<double>& log_depth() { return log_depth_; }
  Grid<double> depths() const;

  /// Inverse-depth bilinear lookup; nullopt outside [0, w-1] x [0, h-1].
  std::optional<DepthSample> sample(double u, double v) const;
  std::optional<double> sample_depth(double u, double v) const;

  /// Project every value into [min_depth, max_depth].
  void clamp(double min_depth = kMinFieldDepth, double max_depth = kMaxFieldDepth);
  double max_depth() const;

  friend bool operator==(const DepthField& a, const DepthField& b) { return a.log_depth_ == b.log_depth_; }

 private:
  Grid<double> log_depth_;
};

}  // namespace prgbd
