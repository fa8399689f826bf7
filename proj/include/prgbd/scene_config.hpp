#pragma once

#include <cstdint>
#include <istream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "prgbd/geometry.hpp"

namespace prgbd {

/// Procedural Lambertian texture: albedo plus a band of sinusoids whose
/// wavelengths lie in [wavelength, 3 * wavelength] meters. wavelength <= 0
/// gives a constant albedo.
struct TextureSpec {
  double albedo = 0.5;
  double contrast = 0.3;
  double wavelength = 1.0;
};

struct PlaneSpec {
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 axis_u = Vec3::UnitX();
  double half_u = std::numeric_limits<double>::infinity();
  double half_v = std::numeric_limits<double>::infinity();
};

struct SphereSpec {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

struct SurfaceSpec {
  enum class Kind { Plane, Sphere };
  Kind kind = Kind::Plane;
  PlaneSpec plane;
  SphereSpec sphere;
  TextureSpec texture;
};

struct Waypoint {
  Vec3 position = Vec3::Zero();
  Vec3 target = Vec3::UnitZ();
};

struct OrbitSpec {
  Vec3 center = Vec3::Zero();
  double radius = 10.0;
  double height = 0.0;
  double start_deg = -30.0;
  double end_deg = 30.0;
};

struct NoiseModel {
  double sigma0 = 0.2;
  double gamma = 1.0;
  std::uint64_t seed = 7;
};

/// Everything needed to synthesize a sequence. World frame: x right, y down, z forward.
struct SceneConfig {
  CameraIntrinsics intrinsics{80.0, 80.0, 47.5, 35.5, 96, 72};
  int frames = 200;
  double frame_dt = 0.1;
  std::uint64_t seed = 42;
  std::vector<SurfaceSpec> surfaces;
  /// Camera path through waypoints (Catmull-Rom); ignored when orbit is set.
  std::vector<Waypoint> waypoints;
  bool use_orbit = false;
  OrbitSpec orbit;
  NoiseModel noise;
};

/// One `key = value` entry of a config file, with its 1-based line number.
struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

/// Split a plain-text config into entries; '#' starts a comment.
std::vector<ConfigEntry> read_config_entries(std::istream& in);
std::vector<ConfigEntry> read_config_file(const std::string& path);

/// Build a SceneConfig from entries. Keys starting with "run." are skipped
/// (they belong to the run configuration); any other unknown key is an error.
SceneConfig parse_scene_config(const std::vector<ConfigEntry>& entries);

/// 160 m lateral drive past three layers of tilted billboards, two spheres and a slightly pitched far wall.
SceneConfig default_scene_config();
/// Same layout without spheres: every surface is planar.
SceneConfig planar_scene_config();
/// Orbit arc around a sphere in front of two planes.
SceneConfig orbit_scene_config();

}  // namespace prgbd
