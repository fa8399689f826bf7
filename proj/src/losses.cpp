#include "prgbd/losses.hpp"

#include <array>
#include <cmath>

#include "loss_terms.hpp"
#include "prgbd/error.hpp"

namespace prgbd {
namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// One directed transfer of pixel q from frame a into frame b.
struct Directed {
  bool valid = false;
  double error = 0.0;  // transferred depth minus d_b at the landing spot
  std::array<std::size_t, 4> index_a{};
  std::array<std::size_t, 4> index_b{};
  std::array<double, 4> grad_a{};  // d error / d log-depth
  std::array<double, 4> grad_b{};
};

Directed directed_transfer(const Pixel& q, const DepthField& a, const DepthField& b, const PoseSE3& t_ab,
                           const CameraIntrinsics& k) {
  Directed out;
  const auto sa = a.sample(q.u, q.v);
  if (!sa) return out;
  const Vec3 ray((q.u - k.cx) / k.fx, (q.v - k.cy) / k.fy, 1.0);
  const Vec3 m = t_ab.rotation() * ray;
  const Vec3 xb = sa->depth * m + t_ab.translation();
  if (xb.z() <= 1e-9) return out;
  const double iz = 1.0 / xb.z();
  const double u = k.fx * xb.x() * iz + k.cx;
  const double v = k.fy * xb.y() * iz + k.cy;
  const auto sb = b.sample(u, v);
  if (!sb) return out;
  out.valid = true;
  out.error = xb.z() - sb->depth;
  const double du = k.fx * (m.x() * xb.z() - xb.x() * m.z()) * iz * iz;
  const double dv = k.fy * (m.y() * xb.z() - xb.y() * m.z()) * iz * iz;
  const double de_dd = m.z() - sb->d_du * du - sb->d_dv * dv;
  out.index_a = sa->index;
  out.index_b = sb->index;
  for (int i = 0; i < 4; ++i) {
    out.grad_a[i] = de_dd * sa->d_log[i];
    out.grad_b[i] = -sb->d_log[i];
  }
  return out;
}

// Gradient destinations for the three fields of a triple; null entries are ignored.
struct FieldSinks {
  double* c = nullptr;
  double* k1 = nullptr;
  double* k2 = nullptr;
  double* curvature = nullptr;
  double* curvature_k1 = nullptr;
  double* curvature_k2 = nullptr;
};

enum class Slot { C, K1, K2 };

double* sink_for(const FieldSinks& s, Slot slot) {
  switch (slot) {
    case Slot::C: return s.c;
    case Slot::K1: return s.k1;
    case Slot::K2: return s.k2;
  }
  return nullptr;
}

double* curvature_for(const FieldSinks& s, Slot slot) {
  switch (slot) {
    case Slot::C: return s.curvature;
    case Slot::K1: return s.curvature_k1;
    case Slot::K2: return s.curvature_k2;
  }
  return nullptr;
}

// Majorizer curvature of w * |e| for the four support pixels of one field.
void add_curvature(double* curv, const std::array<std::size_t, 4>& idx, const std::array<double, 4>& g, double w,
                   double error) {
  if (!curv) return;
  double l1 = 0.0;
  for (int i = 0; i < 4; ++i) l1 += std::abs(g[i]);
  const double scale = w * l1 / std::max(std::abs(error), detail::kDepthCurvatureFloor);
  for (int i = 0; i < 4; ++i) curv[idx[i]] += scale * std::abs(g[i]);
}

struct PairSpec {
  Slot a;
  Slot b;
  const DepthField* da;
  const DepthField* db;
  PoseSE3 t_ab;
};

struct PairResult {
  double sum = 0.0;
  int valid = 0;
  double value() const { return valid > 0 ? 2.0 * sum / valid : 0.0; }
};

// Directed transfers of one pair, both ways over every patch; the gradient of
// `weight * value()` is added to the sinks when given.
PairResult accumulate_pair(const PairSpec& pair, const std::vector<std::pair<Pixel, Pixel>>& centers,
                           const CameraIntrinsics& k, double weight, const FieldSinks* sinks) {
  std::vector<Directed> terms;
  const PoseSE3 t_ba = pair.t_ab.inverse();
  for (const auto& [pa, pb] : centers) {
    if (k.contains(pa))
      for (const Pixel& q : patch_coordinates(pa, k, 5)) {
        Directed d = directed_transfer(q, *pair.da, *pair.db, pair.t_ab, k);
        if (d.valid) terms.push_back(d);
      }
    if (k.contains(pb))
      for (const Pixel& q : patch_coordinates(pb, k, 5)) {
        Directed d = directed_transfer(q, *pair.db, *pair.da, t_ba, k);
        if (!d.valid) continue;
        std::swap(d.index_a, d.index_b);
        std::swap(d.grad_a, d.grad_b);
        terms.push_back(d);
      }
  }
  PairResult r;
  r.valid = static_cast<int>(terms.size());
  for (const auto& d : terms) r.sum += std::abs(d.error);
  if (!sinks || r.valid == 0) return r;

  const double w = weight * 2.0 / r.valid;
  double* ga = sink_for(*sinks, pair.a);
  double* gb = sink_for(*sinks, pair.b);
  for (const auto& d : terms) {
    const double s = sign(d.error);
    for (int i = 0; i < 4; ++i) {
      if (ga) ga[d.index_a[i]] += w * s * d.grad_a[i];
      if (gb) gb[d.index_b[i]] += w * s * d.grad_b[i];
    }
    add_curvature(curvature_for(*sinks, pair.a), d.index_a, d.grad_a, w, d.error);
    add_curvature(curvature_for(*sinks, pair.b), d.index_b, d.grad_b, w, d.error);
  }
  return r;
}

struct TransferResult {
  PairResult c_k1, c_k2, k1_k2;
};

TransferResult transfer_terms(const std::vector<CommonKeypoint>& common, const DepthField& d_k1, const DepthField& d_c,
                              const DepthField& d_k2, const PoseSE3& pose_k1, const PoseSE3& pose_c,
                              const PoseSE3& pose_k2, const CameraIntrinsics& k, double weight,
                              const FieldSinks* sinks) {
  std::vector<std::pair<Pixel, Pixel>> c_k1, c_k2, k1_k2;
  for (const auto& x : common) {
    c_k1.emplace_back(x.in_c, x.in_k1);
    c_k2.emplace_back(x.in_c, x.in_k2);
    k1_k2.emplace_back(x.in_k1, x.in_k2);
  }
  const PoseSE3 c_inv = pose_c.inverse();
  TransferResult r;
  r.c_k1 = accumulate_pair({Slot::C, Slot::K1, &d_c, &d_k1, pose_k1 * c_inv}, c_k1, k, weight, sinks);
  r.c_k2 = accumulate_pair({Slot::C, Slot::K2, &d_c, &d_k2, pose_k2 * c_inv}, c_k2, k, weight, sinks);
  r.k1_k2 = accumulate_pair({Slot::K1, Slot::K2, &d_k1, &d_k2, pose_k2 * pose_k1.inverse()}, k1_k2, k, weight, sinks);
  return r;
}

std::optional<double> consistency_terms(const DepthField& d_c, const std::vector<Pixel>& keypoints,
                                        const std::vector<double>& slam, double weight, const FieldSinks* sinks) {
  if (keypoints.size() != slam.size())
    throw Error(ErrorKind::InvalidConfig, "one SLAM depth per keypoint is required");
  std::vector<DepthSample> samples;
  std::vector<double> errors;
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    if (!(slam[i] > 0.0)) throw Error(ErrorKind::DegenerateDepth, "SLAM depth must be positive");
    const auto s = d_c.sample(keypoints[i].u, keypoints[i].v);
    if (!s) throw Error(ErrorKind::OutOfBounds, "keypoint outside the depth field");
    samples.push_back(*s);
    errors.push_back(s->depth - slam[i]);
  }
  if (samples.empty()) return std::nullopt;
  const double n = static_cast<double>(samples.size());
  double sum = 0.0;
  for (double e : errors) sum += std::abs(e);
  if (sinks && sinks->c) {
    const double w = weight / n;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const double s = sign(errors[i]);
      for (int j = 0; j < 4; ++j) sinks->c[samples[i].index[j]] += w * s * samples[i].d_log[j];
      add_curvature(sinks->curvature, samples[i].index, samples[i].d_log, w, errors[i]);
    }
  }
  return sum / n;
}

double smoothness_terms(const DepthField& d_c, const Image& image, double weight, const FieldSinks* sinks) {
  const int w = d_c.width();
  const int h = d_c.height();
  if (image.width() != w || image.height() != h)
    throw Error(ErrorKind::InvalidConfig, "image and depth field sizes differ");
  const std::size_t n = d_c.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += d_c.depth_at(i);
  mean /= static_cast<double>(n);
  const double nx = static_cast<double>(w - 1) * h;
  const double ny = static_cast<double>(h - 1) * w;

  // g[i] accumulates d S / d (normalized depth)_i.
  std::vector<double> g(sinks ? n : 0, 0.0);
  double sx = 0.0;
  double sy = 0.0;
  const auto edge = [&](std::size_t i, std::size_t j, double count, double& acc) {
    const double diff = (d_c.depth_at(j) - d_c.depth_at(i)) / mean;
    const double wt = std::exp(-std::abs(image[j] - image[i]));
    acc += std::abs(diff) * wt;
    if (!sinks) return;
    const double s = sign(diff) * wt / count;
    g[j] += s;
    g[i] -= s;
    if (sinks->curvature) {
      const double c = weight * wt / count;
      const double ai = d_c.depth_at(i) / mean;
      const double aj = d_c.depth_at(j) / mean;
      const double scale = c * (ai + aj) / std::max(std::abs(diff), detail::kSmoothnessCurvatureFloor);
      sinks->curvature[i] += scale * ai;
      sinks->curvature[j] += scale * aj;
    }
  };
  if (w > 1)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x + 1 < w; ++x) edge(d_c.log_depth().index(x, y), d_c.log_depth().index(x + 1, y), nx, sx);
  if (h > 1)
    for (int y = 0; y + 1 < h; ++y)
      for (int x = 0; x < w; ++x) edge(d_c.log_depth().index(x, y), d_c.log_depth().index(x, y + 1), ny, sy);
  const double value = (w > 1 ? sx / nx : 0.0) + (h > 1 ? sy / ny : 0.0);

  if (sinks && sinks->c) {
    // d*_i = d_i / mean; chain through the mean, then to log-depth.
    double gd = 0.0;
    for (std::size_t i = 0; i < n; ++i) gd += g[i] * d_c.depth_at(i);
    gd /= mean * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      sinks->c[i] += weight * (g[i] / mean - gd / mean) * d_c.depth_at(i);
  }
  return value;
}

}  // namespace

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0 || mu < 0.0)
    throw Error(ErrorKind::InvalidConfig, "loss weights must be non-negative");
}

LossBreakdown total_loss(LossBreakdown c, const LossWeights& weights) {
  weights.validate();
  if (!c.photometric_present) c.photometric = 0.0;
  if (!c.consistency_present) c.consistency = 0.0;
  if (!c.transfer_present) c.transfer_c_k1 = c.transfer_c_k2 = c.transfer_k1_k2 = 0.0;
  c.total = weights.alpha * c.photometric + weights.beta * c.smoothness + weights.gamma * c.consistency +
            weights.mu * (c.transfer_c_k1 + c.transfer_c_k2 + c.transfer_k1_k2);
  return c;
}

TransferPair symmetric_transfer_pair(const Pixel& p_a, const Pixel& p_b, const DepthField& d_a, const DepthField& d_b,
                                     const PoseSE3& t_ab, const CameraIntrinsics& k) {
  TransferPair out;
  const Directed f = directed_transfer(p_a, d_a, d_b, t_ab, k);
  const Directed b = directed_transfer(p_b, d_b, d_a, t_ab.inverse(), k);
  out.forward_valid = f.valid;
  out.forward = std::abs(f.error);
  out.backward_valid = b.valid;
  out.backward = std::abs(b.error);
  return out;
}

TransferTotals symmetric_transfer_total(const std::vector<CommonKeypoint>& common, const DepthField& d_k1,
                                        const DepthField& d_c, const DepthField& d_k2, const PoseSE3& pose_k1,
                                        const PoseSE3& pose_c, const PoseSE3& pose_k2, const CameraIntrinsics& k) {
  TransferTotals out;
  if (common.empty()) return out;
  const TransferResult r = transfer_terms(common, d_k1, d_c, d_k2, pose_k1, pose_c, pose_k2, k, 1.0, nullptr);
  out.c_k1 = r.c_k1.value();
  out.c_k2 = r.c_k2.value();
  out.k1_k2 = r.k1_k2.value();
  out.present = r.c_k1.valid + r.c_k2.valid + r.k1_k2.valid > 0;
  return out;
}

TransferTotals symmetric_transfer_total(const KeyframeGraph& graph, int k1, int c, int k2, const DepthField& d_k1,
                                        const DepthField& d_c, const DepthField& d_k2, const CameraIntrinsics& k) {
  const auto common = common_tracked_keypoints(graph, k1, c, k2);
  return symmetric_transfer_total(common, d_k1, d_c, d_k2, graph.keyframe(k1).pose, graph.keyframe(c).pose,
                                  graph.keyframe(k2).pose, k);
}

std::optional<double> depth_consistency(const DepthField& d_c, const std::vector<Pixel>& keypoints,
                                        const std::vector<double>& slam_depths) {
  return consistency_terms(d_c, keypoints, slam_depths, 1.0, nullptr);
}

std::optional<double> depth_consistency(const Keyframe& c, const DepthField& d_c,
                                        const std::vector<CommonKeypoint>& common) {
  std::vector<Pixel> pixels;
  std::vector<double> slam;
  for (const auto& x : common) {
    const auto it = c.slam_depths.find(x.point);
    if (it == c.slam_depths.end()) throw Error(ErrorKind::NotFound, "keypoint has no SLAM depth in this keyframe");
    pixels.push_back(x.in_c);
    slam.push_back(it->second);
  }
  return depth_consistency(d_c, pixels, slam);
}

std::optional<double> photometric_loss(const Image& current, const std::vector<PhotometricSource>& sources,
                                       const DepthField& d_c, const CameraIntrinsics& k) {
  return detail::photometric_terms(current, sources, d_c, k, 1.0, nullptr);
}

double smoothness_loss(const DepthField& d_c, const Image& image) { return smoothness_terms(d_c, image, 1.0, nullptr); }

LossEvaluation evaluate_triple(const TripleProblem& p, const LossWeights& weights, bool want_gradient) {
  weights.validate();
  if (!p.intrinsics || !p.d_c || !p.image_c) throw Error(ErrorKind::InvalidConfig, "incomplete loss inputs");
  const CameraIntrinsics& k = *p.intrinsics;
  const bool has_triple = p.d_k1 && p.d_k2;
  LossEvaluation out;
  FieldSinks sinks;
  if (want_gradient) {
    out.gradient.c = Grid<double>(p.d_c->width(), p.d_c->height(), 0.0);
    out.curvature.c = Grid<double>(p.d_c->width(), p.d_c->height(), 0.0);
    sinks.c = out.gradient.c.data().data();
    sinks.curvature = out.curvature.c.data().data();
    if (has_triple) {
      out.gradient.k1 = Grid<double>(p.d_k1->width(), p.d_k1->height(), 0.0);
      out.gradient.k2 = Grid<double>(p.d_k2->width(), p.d_k2->height(), 0.0);
      out.curvature.k1 = Grid<double>(p.d_k1->width(), p.d_k1->height(), 0.0);
      out.curvature.k2 = Grid<double>(p.d_k2->width(), p.d_k2->height(), 0.0);
      sinks.k1 = out.gradient.k1.data().data();
      sinks.k2 = out.gradient.k2.data().data();
      sinks.curvature_k1 = out.curvature.k1.data().data();
      sinks.curvature_k2 = out.curvature.k2.data().data();
    }
  }
  const FieldSinks* sink = want_gradient ? &sinks : nullptr;
  LossBreakdown b;

  const detail::GradientSink photo_sink{sinks.c, sinks.curvature};
  if (const auto ph = detail::photometric_terms(*p.image_c, p.sources, *p.d_c, k, weights.alpha,
                                                want_gradient ? &photo_sink : nullptr)) {
    b.photometric = *ph;
    b.photometric_present = true;
  }
  b.smoothness = smoothness_terms(*p.d_c, *p.image_c, weights.beta, sink);

  if (has_triple && !p.common.empty()) {
    const TransferResult t =
        transfer_terms(p.common, *p.d_k1, *p.d_c, *p.d_k2, p.pose_k1, p.pose_c, p.pose_k2, k, weights.mu, sink);
    b.transfer_c_k1 = t.c_k1.value();
    b.transfer_c_k2 = t.c_k2.value();
    b.transfer_k1_k2 = t.k1_k2.value();
    b.transfer_present = t.c_k1.valid + t.c_k2.valid + t.k1_k2.valid > 0;

    std::vector<Pixel> pixels;
    for (const auto& x : p.common) pixels.push_back(x.in_c);
    if (const auto d = consistency_terms(*p.d_c, pixels, p.slam_depths, weights.gamma, sink)) {
      b.consistency = *d;
      b.consistency_present = true;
    }
  }
  out.breakdown = total_loss(b, weights);
  return out;
}

LossGradient total_loss_gradient(const TripleProblem& problem, const LossWeights& weights) {
  return evaluate_triple(problem, weights, true).gradient;
}

}  // namespace prgbd
