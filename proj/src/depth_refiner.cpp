#include "prgbd/depth_refiner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "prgbd/error.hpp"
#include "prgbd/parallel.hpp"

namespace prgbd {
namespace {

struct TripleSlot {
  std::size_t problem = 0;
  enum class Role { C, K1, K2 } role = Role::C;
};

const Grid<double>& slot_of(const LossGradient& g, TripleSlot::Role role) {
  switch (role) {
    case TripleSlot::Role::C: return g.c;
    case TripleSlot::Role::K1: return g.k1;
    case TripleSlot::Role::K2: return g.k2;
  }
  return g.c;
}

// Relative depth change below which the inverse warp counts as converged;
// anything still moving after five iterations straddles an occlusion.
constexpr double kWarpTolerance = 1e-3;
constexpr double kEdgeRatio = 1.5;
constexpr double kVisibilitySlack = 1.1;

// Bilinear corners spanning a depth discontinuity blend two surfaces.
bool straddles_edge(const DepthField& field, const DepthSample& s) {
  double lo = field.depth_at(s.index[0]);
  double hi = lo;
  for (std::size_t i : s.index) {
    lo = std::min(lo, field.depth_at(i));
    hi = std::max(hi, field.depth_at(i));
  }
  return hi > kEdgeRatio * lo;
}

// Smallest depth of the source field forward-transferred onto each target
// pixel; every transferred point covers the four pixels around it.
std::vector<double> splat_nearest(const DepthField& source, const PoseSE3& source_to_target,
                                  const CameraIntrinsics& k) {
  const int w = source.width();
  const int h = source.height();
  std::vector<double> out(source.size(), std::numeric_limits<double>::infinity());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Point3 X = source_to_target * back_project({double(x), double(y)}, source.depth(x, y), k);
      if (X.z() <= 1e-9) continue;
      const double u = k.fx * X.x() / X.z() + k.cx;
      const double v = k.fy * X.y() / X.z() + k.cy;
      const double fu = std::floor(u);
      const double fv = std::floor(v);
      for (double cu : {fu, fu + 1.0}) {
        for (double cv : {fv, fv + 1.0}) {
          if (cu < 0.0 || cv < 0.0 || cu > w - 1 || cv > h - 1) continue;
          double& slot = out[static_cast<std::size_t>(cv) * w + static_cast<std::size_t>(cu)];
          slot = std::min(slot, X.z());
        }
      }
    }
  }
  return out;
}

}  // namespace

void RefinerConfig::validate() const {
  if (!(step_size >= 0.0)) throw Error(ErrorKind::InvalidConfig, "step size must be non-negative");
  if (epochs < 1) throw Error(ErrorKind::InvalidConfig, "epochs must be at least 1");
  if (!(min_depth > 0.0) || !(max_depth > min_depth)) throw Error(ErrorKind::InvalidConfig, "invalid clamp bounds");
  if (!(max_log_step > 0.0)) throw Error(ErrorKind::InvalidConfig, "max_log_step must be positive");
  if (max_halvings < 0) throw Error(ErrorKind::InvalidConfig, "max_halvings must be non-negative");
  weights.validate();
}

TripleProblem keyframe_problem(const SceneSequence& sequence, const TrackingResult& tracking,
                               std::span<const DepthField> fields, int keyframe_id, int min_shared_points) {
  const KeyframeGraph& graph = tracking.graph;
  const Keyframe& kf = graph.keyframe(keyframe_id);
  const int frame = kf.frame_index;
  const int n = static_cast<int>(sequence.frames.size());
  if (fields.size() != sequence.frames.size())
    throw Error(ErrorKind::InvalidConfig, "one depth field per frame is required");

  TripleProblem p;
  p.intrinsics = &sequence.intrinsics;
  p.d_c = &fields[frame];
  p.image_c = &sequence.frames[frame].image;
  p.pose_c = kf.pose;
  for (int s : {frame - 1, frame + 1}) {
    if (s < 0 || s >= n || tracking.status[s] != FrameStatus::Tracked) continue;
    p.sources.push_back({&sequence.frames[s].image, kf.pose * tracking.poses[s].inverse()});
  }
  if (const auto nb = graph.wide_neighbors(keyframe_id, min_shared_points)) {
    const Keyframe& k1 = graph.keyframe(nb->first);
    const Keyframe& k2 = graph.keyframe(nb->second);
    p.d_k1 = &fields[k1.frame_index];
    p.d_k2 = &fields[k2.frame_index];
    p.pose_k1 = k1.pose;
    p.pose_k2 = k2.pose;
    for (const auto& x : common_tracked_keypoints(graph, k1.id, keyframe_id, k2.id)) {
      const auto it = kf.slam_depths.find(x.point);
      if (it == kf.slam_depths.end()) continue;
      p.common.push_back(x);
      p.slam_depths.push_back(it->second);
    }
  }
  return p;
}

double sequence_loss(const SceneSequence& sequence, const TrackingResult& tracking, std::span<const DepthField> fields,
                     const RefinerConfig& config) {
  double total = 0.0;
  for (const auto& kf : tracking.graph.keyframes()) {
    const TripleProblem p = keyframe_problem(sequence, tracking, fields, kf.id, config.min_shared_points);
    total += evaluate_triple(p, config.weights, false).breakdown.total;
  }
  return total;
}

RefineResult refine_depths(const SceneSequence& sequence, const TrackingResult& tracking,
                           std::span<const DepthField> fields, const RefinerConfig& config) {
  config.validate();
  RefineResult out;
  out.fields.assign(fields.begin(), fields.end());
  std::vector<DepthField>& work = out.fields;

  const auto& keyframes = tracking.graph.keyframes();
  std::vector<TripleProblem> problems;
  problems.reserve(keyframes.size());
  for (const auto& kf : keyframes)
    problems.push_back(keyframe_problem(sequence, tracking, work, kf.id, config.min_shared_points));

  // Which problems each keyframe's field takes part in, and in which role.
  std::map<const DepthField*, std::vector<TripleSlot>> involvement;
  for (std::size_t i = 0; i < problems.size(); ++i) {
    involvement[problems[i].d_c].push_back({i, TripleSlot::Role::C});
    if (problems[i].d_k1) involvement[problems[i].d_k1].push_back({i, TripleSlot::Role::K1});
    if (problems[i].d_k2) involvement[problems[i].d_k2].push_back({i, TripleSlot::Role::K2});
  }
  const auto loss_of = [&](const std::vector<TripleSlot>& slots) {
    double f = 0.0;
    for (const auto& s : slots) f += evaluate_triple(problems[s.problem], config.weights, false).breakdown.total;
    return f;
  };

  double before = 0.0;
  for (const auto& p : problems) before += evaluate_triple(p, config.weights, false).breakdown.total;
  out.report.loss_before = before;

  const double lo = std::log(config.min_depth);
  const double hi = std::log(config.max_depth);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t c = 0; c < problems.size(); ++c) {
      DepthField& field = work[keyframes[c].frame_index];
      const auto& slots = involvement[&field];
      ++out.report.keyframe_visits;

      Grid<double> grad(field.width(), field.height(), 0.0);
      Grid<double> curv(field.width(), field.height(), 0.0);
      double f0 = 0.0;
      for (const auto& s : slots) {
        const LossEvaluation e = evaluate_triple(problems[s.problem], config.weights, true);
        f0 += e.breakdown.total;
        const Grid<double>& g = slot_of(e.gradient, s.role);
        const Grid<double>& h = slot_of(e.curvature, s.role);
        for (std::size_t i = 0; i < grad.size(); ++i) {
          grad[i] += g[i];
          curv[i] += h[i];
        }
      }
      Grid<double> step(field.width(), field.height(), 0.0);
      bool any = false;
      for (std::size_t i = 0; i < step.size(); ++i) {
        if (curv[i] > 0.0 && grad[i] != 0.0) {
          step[i] = std::clamp(-config.step_size * grad[i] / curv[i], -config.max_log_step, config.max_log_step);
          any = any || step[i] != 0.0;
        }
      }
      if (!any) continue;

      const Grid<double> saved = field.log_depth();
      bool accepted = false;
      double t = 1.0;
      for (int m = 0; m <= config.max_halvings; ++m, t *= 0.5) {
        for (std::size_t i = 0; i < step.size(); ++i)
          field.set_log_depth_at(i, std::clamp(saved[i] + t * step[i], lo, hi));
        if (loss_of(slots) < f0) {
          accepted = true;
          break;
        }
      }
      if (accepted) {
        ++out.report.accepted_steps;
      } else {
        field.log_depth() = saved;
      }
    }
  }

  double after = 0.0;
  for (const auto& p : problems) after += evaluate_triple(p, config.weights, false).breakdown.total;
  out.report.loss_after = after;
  out.report.no_descent = out.report.keyframe_visits > 0 && out.report.accepted_steps == 0;
  return out;
}

std::vector<DepthField> propagate_to_nonkeyframes(std::span<const DepthField> fields, const TrackingResult& tracking,
                                                  const CameraIntrinsics& k) {
  std::vector<DepthField> out(fields.begin(), fields.end());
  const int n = static_cast<int>(fields.size());
  if (tracking.poses.size() != fields.size()) throw Error(ErrorKind::InvalidConfig, "pose and field counts differ");
  std::vector<int> key_frames;
  for (const auto& kf : tracking.graph.keyframes()) key_frames.push_back(kf.frame_index);
  if (key_frames.empty()) return out;
  std::vector<bool> is_key(n, false);
  for (int f : key_frames) is_key[f] = true;

  const double lo = std::log(kMinFieldDepth);
  const double hi = std::log(kMaxFieldDepth);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t idx) {
    const int f = static_cast<int>(idx);
    if (is_key[f] || tracking.status[f] != FrameStatus::Tracked) return;
    std::vector<int> order = key_frames;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return std::abs(a - f) < std::abs(b - f); });
    order.resize(std::min<std::size_t>(order.size(), 2));

    DepthField& target = out[f];
    const PoseSE3 to_world = tracking.poses[f].inverse();
    // Nearest surface over all candidate keyframes decides visibility.
    std::vector<double> nearest(target.size(), std::numeric_limits<double>::infinity());
    for (int kf : order) {
      const auto splat = splat_nearest(fields[kf], tracking.poses[f] * tracking.poses[kf].inverse(), k);
      for (std::size_t i = 0; i < nearest.size(); ++i) nearest[i] = std::min(nearest[i], splat[i]);
    }
    std::vector<bool> done(target.size(), false);
    for (int kf : order) {
      const DepthField& source = fields[kf];
      const PoseSE3 f_to_k = tracking.poses[kf] * to_world;
      const PoseSE3 k_to_f = f_to_k.inverse();
      for (int y = 0; y < target.height(); ++y) {
        for (int x = 0; x < target.width(); ++x) {
          const std::size_t i = target.log_depth().index(x, y);
          if (done[i]) continue;
          const Vec3 ray((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
          double d = fields[f].depth_at(i);
          bool ok = false;
          for (int it = 0; it < 5; ++it) {
            const Point3 xk = f_to_k * (d * ray);
            if (xk.z() <= 1e-9) break;
            const Projection pr = project(k, xk);
            const auto s = source.sample(pr.pixel.u, pr.pixel.v);
            if (!s || straddles_edge(source, *s)) break;
            const double next = (k_to_f * back_project(pr.pixel, s->depth, k)).z();
            if (!(next > 0.0)) break;
            const bool converged = std::abs(next - d) <= kWarpTolerance * d;
            d = next;
            if (converged) {
              ok = true;
              break;
            }
          }
          // The warp may settle on a surface hidden behind a nearer one.
          if (!ok || !(d <= kVisibilitySlack * nearest[i])) continue;
          target.set_log_depth_at(i, std::clamp(std::log(d), lo, hi));
          done[i] = true;
        }
      }
    }
  });
  return out;
}

}  // namespace prgbd
