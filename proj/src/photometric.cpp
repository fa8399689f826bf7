#include <array>
#include <cmath>
#include <limits>

#include "loss_terms.hpp"
#include "prgbd/error.hpp"

namespace prgbd {
namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr double kSsimWeight = 0.85 / 2.0;
constexpr double kL1Weight = 0.15;

int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

struct Window {
  std::array<std::size_t, 9> index{};
};

Window window_at(int x, int y, int w, int h) {
  Window win;
  int k = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      win.index[k++] = static_cast<std::size_t>(reflect(y + dy, h)) * w + reflect(x + dx, w);
  return win;
}

// Error at the window center and, optionally, its derivative with respect to
// each b sample of the window (center is element 4).
double pixel_error(const Window& win, const Image& a, const std::vector<double>& b, std::array<double, 9>* d_b) {
  constexpr double n = 9.0;
  double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i : win.index) {
    ma += a[i];
    mb += b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
    sab += a[i] * b[i];
  }
  ma /= n;
  mb /= n;
  const double var_a = saa / n - ma * ma;
  const double var_b = sbb / n - mb * mb;
  const double cov = sab / n - ma * mb;
  const double A = 2.0 * ma * mb + kC1;
  const double B = 2.0 * cov + kC2;
  const double C = ma * ma + mb * mb + kC1;
  const double D = var_a + var_b + kC2;
  const double ssim = A * B / (C * D);
  const std::size_t center = win.index[4];
  const double diff = b[center] - a[center];
  if (d_b) {
    for (int k = 0; k < 9; ++k) {
      const std::size_t i = win.index[k];
      const double dA = 2.0 * ma / n;
      const double dB = 2.0 * (a[i] - ma) / n;
      const double dC = 2.0 * mb / n;
      const double dD = 2.0 * (b[i] - mb) / n;
      const double dssim = (dA * B + A * dB) / (C * D) - ssim * (dC / C + dD / D);
      (*d_b)[k] = -kSsimWeight * dssim;
    }
    (*d_b)[4] += kL1Weight * (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0));
  }
  return kSsimWeight * (1.0 - ssim) + kL1Weight * std::abs(diff);
}

struct Warp {
  std::vector<double> value;
  std::vector<double> d_log;  // d value / d log-depth of the same pixel
  std::vector<bool> valid;
};

Warp warp_source(const PhotometricSource& src, const DepthField& d, const CameraIntrinsics& k, bool want_gradient) {
  const int w = d.width();
  const int h = d.height();
  const Image& img = *src.image;
  if (img.width() != w || img.height() != h) throw Error(ErrorKind::InvalidConfig, "source image size differs");
  const PoseSE3 t = src.source_to_current.inverse();
  Warp out;
  out.value.assign(d.size(), 0.0);
  out.d_log.assign(want_gradient ? d.size() : 0, 0.0);
  out.valid.assign(d.size(), false);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = d.log_depth().index(x, y);
      const double depth = d.depth_at(i);
      const Vec3 m = t.rotation() * Vec3((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 xs = depth * m + t.translation();
      if (xs.z() <= 1e-9) continue;
      const double iz = 1.0 / xs.z();
      const double u = k.fx * xs.x() * iz + k.cx;
      const double v = k.fy * xs.y() * iz + k.cy;
      const ImageSample s = sample_bilinear(img, u, v);
      out.value[i] = s.value;
      out.valid[i] = u >= 0.0 && v >= 0.0 && u <= w - 1 && v <= h - 1;
      if (want_gradient) {
        const double du = k.fx * (m.x() * xs.z() - xs.x() * m.z()) * iz * iz;
        const double dv = k.fy * (m.y() * xs.z() - xs.y() * m.z()) * iz * iz;
        out.d_log[i] = (s.d_du * du + s.d_dv * dv) * depth;
      }
    }
  }
  return out;
}

}  // namespace

Image photometric_error_map(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::InvalidConfig, "image sizes differ");
  if (a.width() < 2 || a.height() < 2) throw Error(ErrorKind::InvalidConfig, "images must be at least 2x2");
  Image out(a.width(), a.height());
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      out(x, y) = pixel_error(window_at(x, y, a.width(), a.height()), a, b.data(), nullptr);
  return out;
}

namespace detail {

std::optional<double> photometric_terms(const Image& current, const std::vector<PhotometricSource>& sources,
                                        const DepthField& d_c, const CameraIntrinsics& k, double weight,
                                        const GradientSink* sink) {
  const int w = d_c.width();
  const int h = d_c.height();
  if (current.width() != w || current.height() != h)
    throw Error(ErrorKind::InvalidConfig, "image and depth field sizes differ");
  if (w < 2 || h < 2) throw Error(ErrorKind::InvalidConfig, "images must be at least 2x2");
  const bool want_gradient = sink && sink->c;
  std::vector<Warp> warps;
  for (const auto& s : sources) {
    if (!s.image) throw Error(ErrorKind::InvalidConfig, "photometric source without image");
    warps.push_back(warp_source(s, d_c, k, want_gradient));
  }

  struct Best {
    int source = -1;
    double error = 0.0;
  };
  std::vector<Best> best(d_c.size());
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = d_c.log_depth().index(x, y);
      const Window win = window_at(x, y, w, h);
      for (std::size_t s = 0; s < warps.size(); ++s) {
        if (!warps[s].valid[i]) continue;
        const double e = pixel_error(win, current, warps[s].value, nullptr);
        if (best[i].source < 0 || e < best[i].error) best[i] = {static_cast<int>(s), e};
      }
      if (best[i].source >= 0) {
        sum += best[i].error;
        ++count;
      }
    }
  }
  if (count == 0) return std::nullopt;
  const double mean = sum / static_cast<double>(count);
  if (!want_gradient) return mean;

  const double scale = weight / static_cast<double>(count);
  std::array<double, 9> d_b{};
  std::array<double, 9> partial{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = d_c.log_depth().index(x, y);
      if (best[i].source < 0) continue;
      const Warp& warp = warps[best[i].source];
      const Window win = window_at(x, y, w, h);
      pixel_error(win, current, warp.value, &d_b);
      double l1 = 0.0;
      for (int q = 0; q < 9; ++q) {
        partial[q] = d_b[q] * warp.d_log[win.index[q]];
        sink->c[win.index[q]] += scale * partial[q];
      }
      if (!sink->curvature) continue;
      // Reflected windows can list a pixel twice; merge before taking magnitudes.
      for (int q = 0; q < 9; ++q)
        for (int r = 0; r < q; ++r)
          if (win.index[r] == win.index[q]) {
            partial[r] += partial[q];
            partial[q] = 0.0;
            break;
          }
      for (int q = 0; q < 9; ++q) l1 += std::abs(partial[q]);
      const double c = scale * l1 / std::max(best[i].error, kPhotometricCurvatureFloor);
      for (int q = 0; q < 9; ++q) sink->curvature[win.index[q]] += c * std::abs(partial[q]);
    }
  }
  return mean;
}

}  // namespace detail
}  // namespace prgbd
