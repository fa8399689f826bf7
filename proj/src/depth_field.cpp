#include "prgbd/depth_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prgbd/error.hpp"

namespace prgbd {

ImageSample sample_bilinear(const Image& image, double u, double v) {
  const int w = image.width();
  const int h = image.height();
  ImageSample s;
  bool clamped_u = false;
  bool clamped_v = false;
  if (u < 0.0) { u = 0.0; clamped_u = true; }
  if (u > w - 1) { u = w - 1; clamped_u = true; }
  if (v < 0.0) { v = 0.0; clamped_v = true; }
  if (v > h - 1) { v = h - 1; clamped_v = true; }
  int x0 = std::min(static_cast<int>(std::floor(u)), w - 2);
  int y0 = std::min(static_cast<int>(std::floor(v)), h - 2);
  const double ax = u - x0;
  const double ay = v - y0;
  const double i00 = image(x0, y0);
  const double i10 = image(x0 + 1, y0);
  const double i01 = image(x0, y0 + 1);
  const double i11 = image(x0 + 1, y0 + 1);
  s.value = (1.0 - ay) * ((1.0 - ax) * i00 + ax * i10) + ay * ((1.0 - ax) * i01 + ax * i11);
  if (!clamped_u) s.d_du = (1.0 - ay) * (i10 - i00) + ay * (i11 - i01);
  if (!clamped_v) s.d_dv = (1.0 - ax) * (i01 - i00) + ax * (i11 - i10);
  return s;
}

DepthField::DepthField(int width, int height, double depth) : log_depth_(width, height, std::log(depth)) {
  if (!(depth > 0.0)) throw Error(ErrorKind::DegenerateDepth, "depth field needs positive depth");
}

DepthField DepthField::from_depths(const Grid<double>& depths) {
  DepthField f;
  f.log_depth_ = Grid<double>(depths.width(), depths.height());
  for (std::size_t i = 0; i < depths.size(); ++i) {
    if (!(depths[i] > 0.0)) throw Error(ErrorKind::DegenerateDepth, "depth field needs positive depth");
    f.log_depth_[i] = std::log(depths[i]);
  }
  return f;
}

double DepthField::depth(int x, int y) const { return std::exp(log_depth_(x, y)); }
double DepthField::depth_at(std::size_t i) const { return std::exp(log_depth_[i]); }

void DepthField::set_depth(int x, int y, double depth) {
  if (!(depth > 0.0)) throw Error(ErrorKind::DegenerateDepth, "depth field needs positive depth");
  log_depth_(x, y) = std::log(depth);
}

Grid<double> DepthField::depths() const {
  Grid<double> out(width(), height());
  for (std::size_t i = 0; i < size(); ++i) out[i] = std::exp(log_depth_[i]);
  return out;
}

std::optional<DepthSample> DepthField::sample(double u, double v) const {
  const int w = width();
  const int h = height();
  // Round-off from a reprojection can land a hair outside the border.
  constexpr double slack = 1e-9;
  if (!(u >= -slack && v >= -slack && u <= w - 1 + slack && v <= h - 1 + slack)) return std::nullopt;
  u = std::clamp(u, 0.0, w - 1.0);
  v = std::clamp(v, 0.0, h - 1.0);
  const int x0 = std::min(static_cast<int>(std::floor(u)), w - 2);
  const int y0 = std::min(static_cast<int>(std::floor(v)), h - 2);
  const double ax = u - x0;
  const double ay = v - y0;
  const std::array<std::size_t, 4> idx{log_depth_.index(x0, y0), log_depth_.index(x0 + 1, y0),
                                       log_depth_.index(x0, y0 + 1), log_depth_.index(x0 + 1, y0 + 1)};
  const std::array<double, 4> wts{(1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay, ax * ay};
  std::array<double, 4> inv{};
  double rho = 0.0;
  for (int k = 0; k < 4; ++k) {
    inv[k] = std::exp(-log_depth_[idx[k]]);
    rho += wts[k] * inv[k];
  }
  DepthSample s;
  s.depth = 1.0 / rho;
  s.index = idx;
  const double d2 = s.depth * s.depth;
  for (int k = 0; k < 4; ++k) s.d_log[k] = wts[k] * inv[k] * d2;
  const double drho_du = (1.0 - ay) * (inv[1] - inv[0]) + ay * (inv[3] - inv[2]);
  const double drho_dv = (1.0 - ax) * (inv[2] - inv[0]) + ax * (inv[3] - inv[1]);
  s.d_du = -d2 * drho_du;
  s.d_dv = -d2 * drho_dv;
  return s;
}

std::optional<double> DepthField::sample_depth(double u, double v) const {
  const auto s = sample(u, v);
  if (!s) return std::nullopt;
  return s->depth;
}

void DepthField::clamp(double min_depth, double max_depth) {
  const double lo = std::log(min_depth);
  const double hi = std::log(max_depth);
  for (double& l : log_depth_.data()) l = std::clamp(l, lo, hi);
}

double DepthField::max_depth() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double l : log_depth_.data()) m = std::max(m, l);
  return std::exp(m);
}

}  // namespace prgbd
