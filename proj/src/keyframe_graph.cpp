#include "prgbd/keyframe_graph.hpp"

#include <algorithm>

#include "prgbd/error.hpp"

namespace prgbd {

const Observation* MapPoint::find(int keyframe) const {
  for (const auto& o : observations)
    if (o.keyframe == keyframe) return &o;
  return nullptr;
}

void KeyframeGraph::add_keyframe(Keyframe kf) {
  if (!keyframes_.empty()) {
    const Keyframe& last = keyframes_.back();
    if (kf.id <= last.id || kf.frame_index <= last.frame_index)
      throw Error(ErrorKind::InvalidConfig, "keyframe ids and frame indices must increase");
  }
  if (!kf.pose.is_valid(1e-6)) throw Error(ErrorKind::InvalidConfig, "keyframe pose is not a rigid motion");
  keyframe_index_[kf.id] = keyframes_.size();
  keyframes_.push_back(std::move(kf));
}

void KeyframeGraph::add_map_point(MapPoint point) {
  if (point.observations.empty()) throw Error(ErrorKind::InvalidConfig, "map point without observations");
  if (point_index_.count(point.id)) throw Error(ErrorKind::InvalidConfig, "duplicate map point id");
  std::set<int> seen;
  for (const auto& o : point.observations) {
    if (!has_keyframe(o.keyframe)) throw Error(ErrorKind::NotFound, "observation references unknown keyframe");
    if (!seen.insert(o.keyframe).second)
      throw Error(ErrorKind::InvalidConfig, "map point observed twice in one keyframe");
  }
  point_index_[point.id] = points_.size();
  points_.push_back(std::move(point));
}

bool KeyframeGraph::has_keyframe(int id) const { return keyframe_index_.count(id) != 0; }

std::size_t KeyframeGraph::keyframe_slot(int id) const {
  const auto it = keyframe_index_.find(id);
  if (it == keyframe_index_.end()) throw Error(ErrorKind::NotFound, "unknown keyframe id " + std::to_string(id));
  return it->second;
}

const Keyframe& KeyframeGraph::keyframe(int id) const { return keyframes_[keyframe_slot(id)]; }
Keyframe& KeyframeGraph::keyframe(int id) { return keyframes_[keyframe_slot(id)]; }

const MapPoint& KeyframeGraph::map_point(int id) const {
  const auto it = point_index_.find(id);
  if (it == point_index_.end()) throw Error(ErrorKind::NotFound, "unknown map point id " + std::to_string(id));
  return points_[it->second];
}

std::set<int> KeyframeGraph::covisible(int id) const {
  keyframe_slot(id);
  std::set<int> out;
  for (const auto& p : points_) {
    if (!p.find(id)) continue;
    for (const auto& o : p.observations)
      if (o.keyframe != id) out.insert(o.keyframe);
  }
  return out;
}

int KeyframeGraph::shared_points(int a, int b) const {
  int n = 0;
  for (const auto& p : points_)
    if (p.find(a) && p.find(b)) ++n;
  return n;
}

std::optional<std::pair<int, int>> KeyframeGraph::wide_neighbors(int c, int min_shared) const {
  const std::size_t slot = keyframe_slot(c);
  std::optional<int> before;
  std::optional<int> after;
  for (std::size_t i = slot; i-- > 0;) {
    if (shared_points(keyframes_[i].id, c) >= min_shared) {
      before = keyframes_[i].id;
      break;
    }
  }
  for (std::size_t i = slot + 1; i < keyframes_.size(); ++i) {
    if (shared_points(keyframes_[i].id, c) >= min_shared) {
      after = keyframes_[i].id;
      break;
    }
  }
  if (!before || !after) return std::nullopt;
  return std::make_pair(*before, *after);
}

void KeyframeGraph::prune(const std::function<bool(const MapPoint&, const Observation&)>& drop) {
  std::vector<MapPoint> kept;
  kept.reserve(points_.size());
  for (auto& p : points_) {
    std::vector<Observation> obs;
    for (const auto& o : p.observations)
      if (!drop(p, o)) obs.push_back(o);
    if (obs.empty()) continue;
    p.observations = std::move(obs);
    kept.push_back(std::move(p));
  }
  points_ = std::move(kept);
  point_index_.clear();
  for (std::size_t i = 0; i < points_.size(); ++i) point_index_[points_[i].id] = i;
}

void KeyframeGraph::refresh_slam_depths() {
  for (auto& kf : keyframes_) kf.slam_depths.clear();
  for (const auto& p : points_) {
    for (const auto& o : p.observations) {
      Keyframe& kf = keyframes_[keyframe_slot(o.keyframe)];
      const double z = (kf.pose * p.world_position).z();
      if (z > 0.0) kf.slam_depths[p.id] = z;
    }
  }
}

void KeyframeGraph::dump(std::ostream& out) const {
  for (const auto& p : points_) {
    out << p.id << ' ' << p.world_position.x() << ' ' << p.world_position.y() << ' ' << p.world_position.z();
    for (const auto& o : p.observations) out << " | " << o.keyframe << ' ' << o.pixel.u << ' ' << o.pixel.v;
    out << '\n';
  }
}

std::vector<CommonKeypoint> common_tracked_keypoints(const KeyframeGraph& graph, int k1, int c, int k2) {
  graph.keyframe(k1);
  graph.keyframe(c);
  graph.keyframe(k2);
  if (!(k1 < c && c < k2)) throw Error(ErrorKind::InvalidTriple, "common keypoints need k1 < c < k2");
  std::vector<CommonKeypoint> out;
  for (const auto& p : graph.map_points()) {
    const Observation* a = p.find(k1);
    const Observation* b = p.find(c);
    const Observation* d = p.find(k2);
    if (a && b && d) out.push_back({p.id, a->pixel, b->pixel, d->pixel});
  }
  return out;
}

double reprojection_error(const MapPoint& point, const Keyframe& kf, const CameraIntrinsics& k) {
  const Observation* o = point.find(kf.id);
  if (!o) throw Error(ErrorKind::NotFound, "map point is not observed in this keyframe");
  const Projection pr = project(k, kf.pose * point.world_position);
  return std::hypot(pr.pixel.u - o->pixel.u, pr.pixel.v - o->pixel.v);
}

KeyframeGraph filter_outliers(const KeyframeGraph& graph, int current, const CameraIntrinsics& k,
                              const OutlierRule& rule) {
  const Keyframe& kf = graph.keyframe(current);
  KeyframeGraph out;
  for (const auto& f : graph.keyframes()) out.add_keyframe(f);
  for (const auto& p : graph.map_points()) {
    if (static_cast<int>(p.observations.size()) < rule.min_observations) continue;
    if (p.find(current)) {
      double err = 0.0;
      try {
        err = reprojection_error(p, kf, k);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::BehindCamera) throw;
        continue;
      }
      if (err > rule.max_reprojection_px) continue;
    }
    out.add_map_point(p);
  }
  std::set<int> kept;
  for (const auto& p : out.map_points()) kept.insert(p.id);
  for (auto& f : out.keyframes())
    std::erase_if(f.slam_depths, [&](const auto& entry) { return !kept.count(entry.first); });
  return out;
}

std::vector<Pixel> patch_coordinates(const Pixel& p, const CameraIntrinsics& k, int size) {
  if (!k.contains(p)) throw Error(ErrorKind::OutOfBounds, "patch center outside the image");
  const int r = size / 2;
  std::vector<Pixel> out;
  out.reserve(static_cast<std::size_t>(size) * size);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const Pixel q{p.u + dx, p.v + dy};
      if (k.contains(q)) out.push_back(q);
    }
  return out;
}

}  // namespace prgbd
