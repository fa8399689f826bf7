#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "prgbd/depth_field.hpp"
#include "prgbd/geometry.hpp"
#include "prgbd/keyframe_graph.hpp"
#include "prgbd/pose_backend.hpp"
#include "prgbd/scene_config.hpp"
#include "prgbd/scene_sim.hpp"

namespace prgbd::test {

inline Mat3 random_rotation(std::mt19937_64& rng, double max_angle) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> a(-max_angle, max_angle);
  const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
  return so3_exp(axis * a(rng));
}

inline SurfaceSpec plane_at(const Vec3& center, const Vec3& normal, double wavelength, double albedo = 0.5) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::Plane;
  s.plane.center = center;
  s.plane.normal = normal.normalized();
  s.plane.axis_u = Vec3::UnitX();
  s.texture = {albedo, 0.3, wavelength};
  return s;
}

/// Small camera looking down +z at a tilted wall and a closer billboard.
inline SceneConfig small_planar_scene(int width = 48, int height = 36, int frames = 50) {
  SceneConfig c;
  c.intrinsics = {40.0, 40.0, (width - 1) / 2.0, (height - 1) / 2.0, width, height};
  c.frames = frames;
  c.surfaces.push_back(plane_at({0.0, 0.0, 30.0}, {0.0, 0.15, -1.0}, 3.0));
  SurfaceSpec board = plane_at({1.0, 0.0, 9.0}, {0.2, 0.0, -1.0}, 1.2, 0.6);
  board.plane.axis_u = Vec3(1.0, 0.0, 0.2).normalized();
  board.plane.half_u = 4.0;
  board.plane.half_v = 4.0;
  c.surfaces.push_back(board);
  c.waypoints = {{{-2.0, 0.0, 0.0}, {-1.5, 0.0, 20.0}},
                 {{0.0, -0.3, 0.4}, {0.5, 0.2, 20.0}},
                 {{2.0, 0.3, 0.5}, {2.5, 0.0, 20.0}}};
  return c;
}

/// Tracking result with ground-truth poses and noiseless landmarks spawned on a
/// grid in every keyframe, observed in every keyframe that sees them.
inline TrackingResult ground_truth_tracking(const SceneSequence& seq, int stride, int spacing = 4) {
  TrackingResult t;
  const int n = static_cast<int>(seq.frames.size());
  for (const auto& f : seq.frames) t.poses.push_back(f.gt_pose);
  t.status.assign(n, FrameStatus::Tracked);
  std::vector<int> kf_frames;
  for (int f = 0; f < n; f += stride) kf_frames.push_back(f);
  for (std::size_t i = 0; i < kf_frames.size(); ++i) {
    Keyframe kf;
    kf.id = static_cast<int>(i);
    kf.frame_index = kf_frames[i];
    kf.pose = seq.frames[kf_frames[i]].gt_pose;
    t.graph.add_keyframe(kf);
  }
  CorrespondenceOracle oracle(seq, 0.0, 1);
  const CameraIntrinsics& k = seq.intrinsics;
  int id = 0;
  for (std::size_t i = 0; i < kf_frames.size(); ++i) {
    for (int y = spacing; y < k.height - spacing; y += spacing) {
      for (int x = spacing; x < k.width - spacing; x += spacing) {
        const auto lm = oracle.spawn(kf_frames[i], {double(x), double(y)});
        if (!lm) continue;
        MapPoint p;
        p.id = id++;
        p.world_position = oracle.landmark_position(*lm);
        for (std::size_t j = 0; j < kf_frames.size(); ++j) {
          if (const auto obs = oracle.observe(*lm, kf_frames[j]))
            p.observations.push_back({static_cast<int>(j), obs->pixel});
        }
        t.graph.add_map_point(p);
      }
    }
  }
  t.graph.refresh_slam_depths();
  t.d_max = seq.d_max_gt;
  t.baseline = adaptive_baseline(seq.d_max_gt);
  return t;
}

inline std::vector<DepthField> gt_fields(const SceneSequence& seq) {
  std::vector<DepthField> out;
  for (const auto& f : seq.frames) out.push_back(f.gt_depth);
  return out;
}

}  // namespace prgbd::test
