#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "prgbd/error.hpp"
#include "prgbd/pose_backend.hpp"

namespace prgbd {
namespace {

struct Tracker {
  const SceneSequence& seq;
  std::span<const DepthField> fields;
  const TrackingParams& params;
  CorrespondenceOracle oracle;
  TrackingResult result;
  int next_keyframe_id = 0;
  // First keyframe id of the current map (changes on reinitialization).
  int map_origin = 0;

  Tracker(const SceneSequence& s, std::span<const DepthField> f, const TrackingParams& p)
      : seq(s), fields(f), params(p), oracle(s, p.pixel_noise, p.seed) {}

  const CameraIntrinsics& k() const { return seq.intrinsics; }

  std::vector<int> recent_keyframes() const {
    std::vector<int> ids;
    const auto& kfs = result.graph.keyframes();
    for (auto it = kfs.rbegin(); it != kfs.rend() && static_cast<int>(ids.size()) < params.ba_window; ++it) {
      if (it->id < map_origin) break;
      ids.push_back(it->id);
    }
    std::reverse(ids.begin(), ids.end());
    return ids;
  }

  // Map points observed in the recent keyframes.
  std::vector<int> local_map() const {
    const auto window = recent_keyframes();
    const std::set<int> in_window(window.begin(), window.end());
    std::vector<int> ids;
    for (const auto& p : result.graph.map_points())
      for (const auto& o : p.observations)
        if (in_window.count(o.keyframe)) {
          ids.push_back(p.id);
          break;
        }
    return ids;
  }

  // Add keyframe at `frame`, attach tracked observations, spawn points in empty cells.
  int insert_keyframe(int frame, const PoseSE3& pose, const std::vector<Correspondence>& tracked) {
    const int id = next_keyframe_id++;
    result.graph.add_keyframe({id, frame, pose, {}});
    const int spacing = params.keypoint_spacing;
    const int cols = (k().width + spacing - 1) / spacing;
    const int rows = (k().height + spacing - 1) / spacing;
    std::vector<bool> occupied(static_cast<std::size_t>(cols) * rows, false);
    std::map<int, Pixel> seen;
    for (const auto& c : tracked) seen[c.point] = c.pixel;
    for (auto& p : result.graph.map_points()) {
      const auto it = seen.find(p.id);
      if (it == seen.end()) continue;
      p.observations.push_back({id, it->second});
      const int cx = std::clamp(static_cast<int>(it->second.u) / spacing, 0, cols - 1);
      const int cy = std::clamp(static_cast<int>(it->second.v) / spacing, 0, rows - 1);
      occupied[static_cast<std::size_t>(cy) * cols + cx] = true;
    }
    const PoseSE3 to_world = pose.inverse();
    const DepthField& depth = fields[frame];
    for (int cy = 0; cy < rows; ++cy) {
      for (int cx = 0; cx < cols; ++cx) {
        if (occupied[static_cast<std::size_t>(cy) * cols + cx]) continue;
        const Pixel center{static_cast<double>(std::min(cx * spacing + spacing / 2, k().width - 1)),
                           static_cast<double>(std::min(cy * spacing + spacing / 2, k().height - 1))};
        const auto lm = oracle.spawn(frame, center);
        if (!lm) continue;
        const auto obs = oracle.observe(*lm, frame);
        if (!obs) continue;
        const auto d = depth.sample_depth(obs->pixel.u, obs->pixel.v);
        if (!d) continue;
        MapPoint mp;
        mp.id = *lm;
        mp.observations.push_back({id, obs->pixel});
        mp.world_position = to_world * back_project(obs->pixel, *d, k());
        result.graph.add_map_point(std::move(mp));
      }
    }
    return id;
  }

  void bundle_adjust() {
    const auto window = recent_keyframes();
    if (window.size() < 2) return;
    BundleAdjustOptions opt;
    opt.max_iterations = params.ba_iterations;
    opt.huber_delta = params.huber_delta;
    opt.baseline = result.baseline;
    try {
      const auto report = local_bundle_adjust(result.graph, window, k(), fields, opt);
      if (!report.converged) ++result.ba_warnings;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InvalidConfig) throw;
      return;
    }
    // Cull observations the adjusted map no longer explains.
    const std::set<int> in_window(window.begin(), window.end());
    const auto& graph = result.graph;
    result.graph.prune([&](const MapPoint& p, const Observation& o) {
      if (!in_window.count(o.keyframe)) return false;
      const Point3 xc = graph.keyframe(o.keyframe).pose * p.world_position;
      if (xc.z() <= 1e-9) return true;
      const Projection pr = project(k(), xc);
      return std::hypot(pr.pixel.u - o.pixel.u, pr.pixel.v - o.pixel.v) > params.inlier_threshold_px;
    });
  }

  // Robust pose from the local map; nullopt when tracking fails.
  std::optional<std::pair<PoseSE3, std::vector<Correspondence>>> track(int frame, const PoseSE3& prediction) {
    std::vector<Correspondence> corr;
    std::vector<Point3> world;
    for (int id : local_map()) {
      if (const auto c = oracle.observe(id, frame)) {
        corr.push_back(*c);
        world.push_back(result.graph.map_point(id).world_position);
      }
    }
    std::vector<bool> inlier(corr.size(), true);
    PoseSE3 pose = prediction;
    for (int round = 0; round < 3; ++round) {
      std::vector<std::pair<Point3, Pixel>> used;
      for (std::size_t i = 0; i < corr.size(); ++i)
        if (inlier[i]) used.emplace_back(world[i], corr[i].pixel);
      if (static_cast<int>(used.size()) < params.min_inliers) return std::nullopt;
      try {
        pose = estimate_pose_gn(used, k(), pose);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::DegenerateConfiguration && e.kind() != ErrorKind::NoConvergence) throw;
        return std::nullopt;
      }
      for (std::size_t i = 0; i < corr.size(); ++i) {
        const Point3 xc = pose * world[i];
        if (xc.z() <= 1e-9) {
          inlier[i] = false;
          continue;
        }
        const Projection pr = project(k(), xc);
        inlier[i] = std::hypot(pr.pixel.u - corr[i].pixel.u, pr.pixel.v - corr[i].pixel.v) <=
                    params.inlier_threshold_px;
      }
    }
    std::vector<Correspondence> kept;
    for (std::size_t i = 0; i < corr.size(); ++i)
      if (inlier[i]) kept.push_back(corr[i]);
    if (static_cast<int>(kept.size()) < params.min_inliers) return std::nullopt;
    return std::make_pair(pose, std::move(kept));
  }

  bool initialize(int frame, const PoseSE3& pose) {
    map_origin = next_keyframe_id;
    const std::size_t before = result.graph.map_points().size();
    const int id = insert_keyframe(frame, pose, {});
    if (result.graph.map_points().size() - before < 20) {
      if (frame == 0) throw Error(ErrorKind::InitializationFailure, "fewer than 20 keypoints in the first frame");
      return false;
    }
    (void)id;
    return true;
  }
};

}  // namespace

double TrackingResult::lost_fraction() const {
  if (status.empty()) return 0.0;
  const auto lost = std::count(status.begin(), status.end(), FrameStatus::Lost);
  return static_cast<double>(lost) / static_cast<double>(status.size());
}

TrackingResult track_sequence(const SceneSequence& sequence, std::span<const DepthField> depth_fields,
                              const TrackingParams& params) {
  const int n = static_cast<int>(sequence.frames.size());
  if (n == 0) throw Error(ErrorKind::InvalidConfig, "empty sequence");
  if (depth_fields.size() != sequence.frames.size())
    throw Error(ErrorKind::InvalidConfig, "one depth field per frame is required");
  if (params.keyframe_stride < 1 || params.ba_window < 2 || params.keypoint_spacing < 1)
    throw Error(ErrorKind::InvalidConfig, "invalid tracking parameters");

  Tracker t(sequence, depth_fields, params);
  TrackingResult& r = t.result;
  for (const auto& f : depth_fields) r.d_max = std::max(r.d_max, f.max_depth());
  r.baseline = adaptive_baseline(r.d_max);
  r.poses.assign(n, PoseSE3::identity());
  r.status.assign(n, FrameStatus::Tracked);

  // Non-keyframes are stored relative to their reference keyframe so later
  // bundle adjustment of that keyframe carries them along.
  std::vector<std::optional<std::pair<int, PoseSE3>>> relative(n);
  std::map<int, int> keyframe_at_frame;

  t.initialize(0, PoseSE3::identity());
  keyframe_at_frame[0] = 0;
  bool lost = false;
  int last_keyframe = 0;
  for (int f = 1; f < n; ++f) {
    const bool keyframe_slot = f % params.keyframe_stride == 0;
    if (lost) {
      r.status[f] = FrameStatus::Lost;
      r.poses[f] = r.poses[f - 1];
      if (keyframe_slot && t.initialize(f, r.poses[f - 1])) {
        lost = false;
        last_keyframe = r.graph.keyframes().back().id;
        keyframe_at_frame[f] = last_keyframe;
      }
      continue;
    }
    PoseSE3 prediction = r.poses[f - 1];
    if (f >= 2 && r.status[f - 2] == FrameStatus::Tracked)
      prediction = (r.poses[f - 1] * r.poses[f - 2].inverse()) * r.poses[f - 1];
    auto tracked = t.track(f, prediction);
    if (!tracked) {
      r.status[f] = FrameStatus::Lost;
      r.poses[f] = r.poses[f - 1];
      lost = true;
      continue;
    }
    r.poses[f] = tracked->first;
    if (keyframe_slot) {
      last_keyframe = t.insert_keyframe(f, tracked->first, tracked->second);
      keyframe_at_frame[f] = last_keyframe;
      t.bundle_adjust();
      r.poses[f] = r.graph.keyframe(last_keyframe).pose;
    } else {
      relative[f] = std::make_pair(last_keyframe, tracked->first * r.graph.keyframe(last_keyframe).pose.inverse());
    }
  }

  for (int f = 0; f < n; ++f) {
    if (const auto it = keyframe_at_frame.find(f); it != keyframe_at_frame.end()) {
      r.poses[f] = r.graph.keyframe(it->second).pose;
    } else if (relative[f]) {
      r.poses[f] = relative[f]->second * r.graph.keyframe(relative[f]->first).pose;
    } else if (f > 0) {
      r.poses[f] = r.poses[f - 1];
    }
  }
  r.graph.refresh_slam_depths();
  return r;
}

}  // namespace prgbd
