#include "prgbd/scene_config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "prgbd/error.hpp"

namespace prgbd {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<double> numbers(const ConfigEntry& e, std::size_t expected) {
  std::vector<double> out;
  std::istringstream in(e.value);
  std::string token;
  while (in >> token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
      throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(e.line) + ": '" + token + "' is not a number");
    out.push_back(v);
  }
  if (out.size() != expected)
    throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(e.line) + ": key '" + e.key + "' expects " +
                                              std::to_string(expected) + " numbers, got " + std::to_string(out.size()));
  return out;
}

double number(const ConfigEntry& e) { return numbers(e, 1)[0]; }

int integer(const ConfigEntry& e) {
  const double v = number(e);
  if (v != std::floor(v)) throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(e.line) + ": expected integer");
  return static_cast<int>(v);
}

Vec3 vec(const std::vector<double>& v, std::size_t at) { return {v[at], v[at + 1], v[at + 2]}; }

SurfaceSpec billboard(double x, double y, double z, double half_w, double half_h, double yaw_deg, double albedo,
                      double wavelength) {
  const double yaw = yaw_deg * std::numbers::pi / 180.0;
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::Plane;
  s.plane.center = {x, y, z};
  s.plane.normal = {std::sin(yaw), 0.0, -std::cos(yaw)};
  s.plane.axis_u = {std::cos(yaw), 0.0, std::sin(yaw)};
  s.plane.half_u = half_w;
  s.plane.half_v = half_h;
  s.texture = {albedo, 0.3, wavelength};
  return s;
}

SurfaceSpec wall(double z, double albedo, double wavelength) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::Plane;
  s.plane.center = {0.0, 0.0, z};
  s.plane.normal = {0.0, 0.0, -1.0};
  s.plane.axis_u = {1.0, 0.0, 0.0};
  s.texture = {albedo, 0.3, wavelength};
  return s;
}

SurfaceSpec sphere(double x, double y, double z, double r, double albedo, double wavelength) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::Sphere;
  s.sphere.center = {x, y, z};
  s.sphere.radius = r;
  s.texture = {albedo, 0.3, wavelength};
  return s;
}

}  // namespace

std::vector<ConfigEntry> read_config_entries(std::istream& in) {
  std::vector<ConfigEntry> entries;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(line) + ": expected 'key = value'");
    ConfigEntry e{trim(text.substr(0, eq)), trim(text.substr(eq + 1)), line};
    if (e.key.empty()) throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(line) + ": empty key");
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<ConfigEntry> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config file '" + path + "'");
  return read_config_entries(in);
}

SceneConfig parse_scene_config(const std::vector<ConfigEntry>& entries) {
  SceneConfig c;
  c.surfaces.clear();
  c.waypoints.clear();
  for (const auto& e : entries) {
    if (e.key.rfind("run.", 0) == 0) continue;
    if (e.key == "width") c.intrinsics.width = integer(e);
    else if (e.key == "height") c.intrinsics.height = integer(e);
    else if (e.key == "fx") c.intrinsics.fx = number(e);
    else if (e.key == "fy") c.intrinsics.fy = number(e);
    else if (e.key == "cx") c.intrinsics.cx = number(e);
    else if (e.key == "cy") c.intrinsics.cy = number(e);
    else if (e.key == "frames") c.frames = integer(e);
    else if (e.key == "frame_dt") c.frame_dt = number(e);
    else if (e.key == "seed") c.seed = static_cast<std::uint64_t>(integer(e));
    else if (e.key == "noise.sigma0") c.noise.sigma0 = number(e);
    else if (e.key == "noise.gamma") c.noise.gamma = number(e);
    else if (e.key == "noise.seed") c.noise.seed = static_cast<std::uint64_t>(integer(e));
    else if (e.key == "plane") {
      // center(3) normal(3) axis_u(3) half_u half_v albedo contrast wavelength
      const auto v = numbers(e, 14);
      SurfaceSpec s;
      s.kind = SurfaceSpec::Kind::Plane;
      s.plane = {vec(v, 0), vec(v, 3), vec(v, 6), v[9], v[10]};
      s.texture = {v[11], v[12], v[13]};
      c.surfaces.push_back(s);
    } else if (e.key == "sphere") {
      // center(3) radius albedo contrast wavelength
      const auto v = numbers(e, 7);
      SurfaceSpec s;
      s.kind = SurfaceSpec::Kind::Sphere;
      s.sphere = {vec(v, 0), v[3]};
      s.texture = {v[4], v[5], v[6]};
      c.surfaces.push_back(s);
    } else if (e.key == "waypoint") {
      const auto v = numbers(e, 6);
      c.waypoints.push_back({vec(v, 0), vec(v, 3)});
    } else if (e.key == "orbit") {
      // center(3) radius height start_deg end_deg
      const auto v = numbers(e, 7);
      c.use_orbit = true;
      c.orbit = {vec(v, 0), v[3], v[4], v[5], v[6]};
    } else {
      throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    }
  }
  return c;
}

SceneConfig default_scene_config() {
  constexpr double length = 160.0;
  SceneConfig c;
  SurfaceSpec back = wall(70.0, 0.5, 9.0);
  back.plane.normal = Vec3(0.0, 0.1, -1.0).normalized();
  c.surfaces.push_back(back);
  struct Layer {
    double z, spacing, half_w, half_h, wavelength;
  };
  const Layer layers[] = {{10.0, 20.0, 3.5, 4.0, 1.25}, {24.0, 30.0, 8.0, 7.0, 3.0}, {45.0, 40.0, 14.0, 12.0, 5.6}};
  int i = 0;
  for (const Layer& l : layers) {
    for (double x = -10.0 + (i % 3) * 3.0; x < length + 20.0; x += l.spacing, ++i) {
      const double jitter = std::sin(1.7 * i);
      const double albedo = 0.4 + 0.2 * (0.5 + 0.5 * std::sin(1.3 * i));
      c.surfaces.push_back(billboard(x + 2.0 * jitter, 1.5 * std::cos(2.3 * i), l.z + jitter, l.half_w, l.half_h,
                                     18.0 * std::sin(0.9 * i), albedo, l.wavelength));
    }
  }
  c.surfaces.push_back(sphere(52.0, 1.0, 16.0, 2.0, 0.5, 1.3));
  c.surfaces.push_back(sphere(118.0, -1.0, 17.0, 2.5, 0.55, 2.2));
  constexpr int stops = 6;
  for (int k = 0; k < stops; ++k) {
    const double x = length * k / (stops - 1);
    c.waypoints.push_back(
        {{x, 0.4 * std::sin(1.1 * k), 0.4 * std::cos(0.7 * k)}, {x + std::sin(2.0 * k), 0.3 * std::sin(k), 30.0}});
  }
  return c;
}

SceneConfig planar_scene_config() {
  SceneConfig c = default_scene_config();
  std::erase_if(c.surfaces, [](const SurfaceSpec& s) { return s.kind == SurfaceSpec::Kind::Sphere; });
  return c;
}

SceneConfig orbit_scene_config() {
  SceneConfig c;
  c.surfaces = {
      wall(35.0, 0.5, 4.0),
      billboard(-6.0, 0.0, 26.0, 4.0, 5.0, 30.0, 0.6, 2.5),
      sphere(0.0, 0.0, 20.0, 3.0, 0.45, 1.5),
  };
  c.use_orbit = true;
  c.orbit = {{0.0, 0.0, 20.0}, 20.0, -0.5, -30.0, 30.0};
  return c;
}

}  // namespace prgbd
