#include "prgbd/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "prgbd/error.hpp"
#include "prgbd/parallel.hpp"

namespace prgbd {
namespace {

constexpr int kSinusoids = 6;
constexpr double kMaxSceneDepth = 80.0;

TextureBand draw_band(const SurfaceSpec& spec, const Vec3& axis_u, const Vec3& axis_v, std::uint64_t seed) {
  TextureBand band;
  band.albedo = spec.texture.albedo;
  if (spec.texture.wavelength <= 0.0 || spec.texture.contrast == 0.0) return band;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double amplitude_sum = 0.0;
  for (int k = 0; k < kSinusoids; ++k) {
    Vec3 dir;
    if (spec.kind == SurfaceSpec::Kind::Plane) {
      const double theta = std::numbers::pi * unit(rng);
      dir = std::cos(theta) * axis_u + std::sin(theta) * axis_v;
    } else {
      const double z = 2.0 * unit(rng) - 1.0;
      const double phi = 2.0 * std::numbers::pi * unit(rng);
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      dir = {r * std::cos(phi), r * std::sin(phi), z};
    }
    band.directions.push_back(dir);
    band.wavelengths.push_back(spec.texture.wavelength * (1.0 + 2.0 * unit(rng)));
    band.amplitudes.push_back(0.5 + 0.5 * unit(rng));
    band.phases.push_back(2.0 * std::numbers::pi * unit(rng));
    amplitude_sum += band.amplitudes.back();
  }
  for (double& a : band.amplitudes) a *= spec.texture.contrast / amplitude_sum;
  return band;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double t) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (p2 - p0) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3);
}

}  // namespace

SceneGeometry::SceneGeometry(const std::vector<SurfaceSpec>& specs, std::uint64_t seed) {
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Surface s;
    s.spec = specs[i];
    if (s.spec.kind == SurfaceSpec::Kind::Plane) {
      PlaneSpec& p = s.spec.plane;
      if (p.normal.norm() < 1e-12) throw Error(ErrorKind::InvalidConfig, "plane normal must be nonzero");
      p.normal.normalize();
      p.axis_u -= p.axis_u.dot(p.normal) * p.normal;
      if (p.axis_u.norm() < 1e-9) throw Error(ErrorKind::InvalidConfig, "plane axis_u must not be parallel to its normal");
      p.axis_u.normalize();
      if (!(p.half_u > 0.0) || !(p.half_v > 0.0)) throw Error(ErrorKind::InvalidConfig, "plane extents must be positive");
      s.axis_v = p.normal.cross(p.axis_u);
    } else {
      if (!(s.spec.sphere.radius > 0.0)) throw Error(ErrorKind::InvalidConfig, "sphere radius must be positive");
    }
    const Vec3 axis_u = s.spec.kind == SurfaceSpec::Kind::Plane ? s.spec.plane.axis_u : Vec3::UnitX();
    s.band = draw_band(s.spec, axis_u, s.axis_v, derive_seed(seed, 1000 + i));
    surfaces_.push_back(std::move(s));
  }
}

std::optional<SceneGeometry::Hit> SceneGeometry::intersect(const Vec3& origin, const Vec3& direction,
                                                           double t_min) const {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < surfaces_.size(); ++i) {
    const Surface& s = surfaces_[i];
    double t = -1.0;
    if (s.spec.kind == SurfaceSpec::Kind::Plane) {
      const PlaneSpec& p = s.spec.plane;
      const double denom = p.normal.dot(direction);
      if (std::abs(denom) < 1e-12) continue;
      t = p.normal.dot(p.center - origin) / denom;
      if (!(t > t_min)) continue;
      const Vec3 rel = origin + t * direction - p.center;
      if (std::abs(rel.dot(p.axis_u)) > p.half_u || std::abs(rel.dot(s.axis_v)) > p.half_v) continue;
    } else {
      const SphereSpec& sp = s.spec.sphere;
      const Vec3 oc = origin - sp.center;
      const double a = direction.squaredNorm();
      const double b = oc.dot(direction);
      const double c = oc.squaredNorm() - sp.radius * sp.radius;
      const double disc = b * b - a * c;
      if (disc < 0.0) continue;
      const double root = std::sqrt(disc);
      t = (-b - root) / a;
      if (!(t > t_min)) t = (-b + root) / a;
      if (!(t > t_min)) continue;
    }
    if (!best || t < best->t) best = Hit{t, static_cast<int>(i)};
  }
  return best;
}

double SceneGeometry::intensity(int surface, const Point3& x) const {
  const Surface& s = surfaces_.at(surface);
  const Vec3 origin = s.spec.kind == SurfaceSpec::Kind::Plane ? s.spec.plane.center : s.spec.sphere.center;
  const Vec3 rel = x - origin;
  double value = s.band.albedo;
  for (std::size_t k = 0; k < s.band.directions.size(); ++k)
    value += s.band.amplitudes[k] *
             std::sin(2.0 * std::numbers::pi * s.band.directions[k].dot(rel) / s.band.wavelengths[k] + s.band.phases[k]);
  return std::clamp(value, 0.0, 1.0);
}

RenderedView render(const SceneGeometry& geometry, const PoseSE3& pose, const CameraIntrinsics& k) {
  k.validate();
  RenderedView view;
  view.image = Image(k.width, k.height, 0.0);
  view.depth = Grid<double>(k.width, k.height, 0.0);
  view.surface_id = Grid<int>(k.width, k.height, -1);
  const Mat3 rt = pose.rotation().transpose();
  const Vec3 origin = -(rt * pose.translation());
  parallel_for(static_cast<std::size_t>(k.height), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < k.width; ++x) {
      const Vec3 ray_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 dir = rt * ray_cam;
      const auto hit = geometry.intersect(origin, dir);
      if (!hit) continue;
      view.depth(x, y) = hit->t;
      view.surface_id(x, y) = hit->surface;
      view.image(x, y) = geometry.intensity(hit->surface, origin + hit->t * dir);
    }
  });
  for (int id : view.surface_id.data())
    if (id >= 0) ++view.hit_count;
  if (view.hit_count == 0) throw Error(ErrorKind::EmptyView, "no surface visible from this pose");
  return view;
}

PoseSE3 look_at(const Vec3& position, const Vec3& target) {
  const Vec3 forward = target - position;
  if (forward.norm() < 1e-12) throw Error(ErrorKind::InvalidConfig, "look_at target coincides with position");
  const Vec3 z = forward.normalized();
  const Vec3 x_raw = Vec3::UnitY().cross(z);
  if (x_raw.norm() < 1e-9) throw Error(ErrorKind::InvalidConfig, "look_at direction is vertical");
  const Vec3 x = x_raw.normalized();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return {r, -(r * position)};
}

std::vector<PoseSE3> camera_trajectory(const SceneConfig& config) {
  if (config.frames < 1) throw Error(ErrorKind::InvalidConfig, "frames must be positive");
  std::vector<PoseSE3> poses;
  poses.reserve(config.frames);
  const double denom = config.frames > 1 ? config.frames - 1 : 1;
  if (config.use_orbit) {
    const OrbitSpec& o = config.orbit;
    if (!(o.radius > 0.0)) throw Error(ErrorKind::InvalidConfig, "orbit radius must be positive");
    for (int i = 0; i < config.frames; ++i) {
      const double deg = o.start_deg + (o.end_deg - o.start_deg) * (i / denom);
      const double a = deg * std::numbers::pi / 180.0;
      const Vec3 pos = o.center + Vec3(o.radius * std::sin(a), o.height, -o.radius * std::cos(a));
      poses.push_back(look_at(pos, o.center));
    }
    return poses;
  }
  const auto& w = config.waypoints;
  if (w.size() < 2) throw Error(ErrorKind::InvalidConfig, "camera path needs at least two waypoints");
  const int n = static_cast<int>(w.size());
  for (int i = 0; i < config.frames; ++i) {
    const double s = (n - 1) * (i / denom);
    const int j = std::min(static_cast<int>(std::floor(s)), n - 2);
    const double t = s - j;
    const auto at = [&](int idx) { return w[std::clamp(idx, 0, n - 1)]; };
    const Vec3 pos = catmull_rom(at(j - 1).position, at(j).position, at(j + 1).position, at(j + 2).position, t);
    const Vec3 tgt = catmull_rom(at(j - 1).target, at(j).target, at(j + 1).target, at(j + 2).target, t);
    poses.push_back(look_at(pos, tgt));
  }
  return poses;
}

SceneSequence generate_scene(const SceneConfig& config) {
  config.intrinsics.validate();
  if (config.surfaces.empty()) throw Error(ErrorKind::InvalidConfig, "scene has no surfaces");
  const auto poses = camera_trajectory(config);
  if (poses.size() > 1) {
    bool moving = false;
    for (std::size_t i = 1; i < poses.size() && !moving; ++i) {
      moving = !poses[i].rotation().isApprox(poses[0].rotation(), 1e-12) ||
               (poses[i].translation() - poses[0].translation()).norm() > 1e-12;
    }
    if (!moving) throw Error(ErrorKind::InvalidConfig, "camera never moves");
  }

  SceneSequence seq;
  seq.intrinsics = config.intrinsics;
  seq.geometry = SceneGeometry(config.surfaces, config.seed);
  seq.frames.resize(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    RenderedView view = render(seq.geometry, poses[i], config.intrinsics);
    if (view.hit_count != view.depth.size())
      throw Error(ErrorKind::InvalidConfig, "frame " + std::to_string(i) + " has pixels that see no surface");
    for (double d : view.depth.data()) {
      if (d < kMinFieldDepth || d > kMaxSceneDepth)
        throw Error(ErrorKind::InvalidConfig, "frame " + std::to_string(i) + " has depth outside [0.1, 80] m");
    }
    SceneFrame& f = seq.frames[i];
    f.image = std::move(view.image);
    f.gt_depth = DepthField::from_depths(view.depth);
    f.gt_pose = poses[i];
    f.timestamp = i * config.frame_dt;
    f.surface_id = std::move(view.surface_id);
    seq.d_max_gt = std::max(seq.d_max_gt, f.gt_depth.max_depth());
  }

  for (std::size_t i = 1; i < poses.size(); ++i) {
    const Vec3 a = -(poses[i - 1].rotation().transpose() * poses[i - 1].translation());
    const Vec3 b = -(poses[i].rotation().transpose() * poses[i].translation());
    if ((b - a).norm() >= 0.1 * seq.d_max_gt)
      throw Error(ErrorKind::InvalidConfig, "camera step between frames " + std::to_string(i - 1) + " and " +
                                                std::to_string(i) + " exceeds 10% of the depth range");
  }
  return seq;
}

DepthField corrupt_depth(const DepthField& gt, const NoiseModel& model, double d_max_gt, std::uint64_t stream) {
  if (!(d_max_gt > 0.0)) throw Error(ErrorKind::DegenerateDepth, "d_max_gt must be positive");
  if (model.sigma0 < 0.0) throw Error(ErrorKind::InvalidConfig, "noise sigma0 must be non-negative");
  std::mt19937_64 rng(derive_seed(model.seed, stream));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double hi = 1.5 * d_max_gt;
  Grid<double> out(gt.width(), gt.height());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double d = gt.depth_at(i);
    const double sigma = model.sigma0 * std::pow(d / d_max_gt, model.gamma);
    const double noisy = d * (1.0 + sigma * normal(rng));
    out[i] = std::clamp(noisy, kMinFieldDepth, hi);
  }
  return DepthField::from_depths(out);
}

std::uint64_t sequence_checksum(const SceneSequence& sequence) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const auto& f : sequence.frames) {
    h = fnv1a(h, f.image.data().data(), f.image.size() * sizeof(double));
    h = fnv1a(h, f.gt_depth.log_depth().data().data(), f.gt_depth.size() * sizeof(double));
    h = fnv1a(h, f.gt_pose.rotation().data(), 9 * sizeof(double));
    h = fnv1a(h, f.gt_pose.translation().data(), 3 * sizeof(double));
  }
  return h;
}

}  // namespace prgbd
