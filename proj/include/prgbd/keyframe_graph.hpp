#pragma once

#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <vector>

#include "prgbd/geometry.hpp"

namespace prgbd {

struct Keyframe {
  int id = 0;
  int frame_index = 0;
  /// World-to-camera, SLAM estimate.
  PoseSE3 pose;
  /// Map-point id -> bundle-adjusted depth of that point in this camera.
  std::map<int, double> slam_depths;
};

struct Observation {
  int keyframe = 0;
  Pixel pixel;
};

struct MapPoint {
  int id = 0;
  std::vector<Observation> observations;
  Point3 world_position = Point3::Zero();

  const Observation* find(int keyframe) const;
};

struct CommonKeypoint {
  int point = 0;
  Pixel in_k1;
  Pixel in_c;
  Pixel in_k2;
};

class KeyframeGraph {
 public:
  /// Keyframe ids must increase together with frame indices.
  void add_keyframe(Keyframe kf);
  /// Every observation must reference an existing keyframe, at most once each.
  void add_map_point(MapPoint point);

  const std::vector<Keyframe>& keyframes() const { return keyframes_; }
  std::vector<Keyframe>& keyframes() { return keyframes_; }
  const std::vector<MapPoint>& map_points() const { return points_; }
  std::vector<MapPoint>& map_points() { return points_; }

  bool has_keyframe(int id) const;
  /// Throws NotFound.
  const Keyframe& keyframe(int id) const;
  Keyframe& keyframe(int id);
  const MapPoint& map_point(int id) const;

  /// Keyframes sharing at least one map point with `id`.
  std::set<int> covisible(int id) const;
  /// Number of map points observed in both keyframes.
  int shared_points(int a, int b) const;

  /// Nearest preceding and following keyframes sharing >= min_shared points with c.
  std::optional<std::pair<int, int>> wide_neighbors(int c, int min_shared = 20) const;

  /// Remove observations for which drop(point, observation) holds; points left
  /// without observations disappear.
  void prune(const std::function<bool(const MapPoint&, const Observation&)>& drop);

  /// Recompute every keyframe's slam_depths from the current map.
  void refresh_slam_depths();

  /// One map point per line: "id x y z | kf u v | kf u v ...".
  void dump(std::ostream& out) const;

 private:
  std::size_t keyframe_slot(int id) const;

  std::vector<Keyframe> keyframes_;
  std::vector<MapPoint> points_;
  std::map<int, std::size_t> keyframe_index_;
  std::map<int, std::size_t> point_index_;
};

/// Map points observed in all three keyframes. Requires k1 < c < k2.
std::vector<CommonKeypoint> common_tracked_keypoints(const KeyframeGraph& graph, int k1, int c, int k2);

/// Pixel distance between the projected map point and its stored observation in kf.
double reprojection_error(const MapPoint& point, const Keyframe& kf, const CameraIntrinsics& k);

struct OutlierRule {
  int min_observations = 3;
  double max_reprojection_px = 3.0;
};

/// Drop points seen in fewer than min_observations keyframes, or whose
/// reprojection in `current` exceeds the threshold (points behind the camera
/// count as violators).
KeyframeGraph filter_outliers(const KeyframeGraph& graph, int current, const CameraIntrinsics& k,
                              const OutlierRule& rule = {});

/// Integer-offset size x size patch around p, clipped to the image.
std::vector<Pixel> patch_coordinates(const Pixel& p, const CameraIntrinsics& k, int size = 5);

}  // namespace prgbd
