#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "prgbd/depth_refiner.hpp"
#include "prgbd/error.hpp"
#include "prgbd/evaluation.hpp"
#include "prgbd/pipeline.hpp"
#include "prgbd/report_writer.hpp"
#include "prgbd/trajectory_io.hpp"

namespace {

using namespace prgbd;

constexpr int kExitConfig = 2;
constexpr int kExitLost = 3;
constexpr int kExitIO = 4;

struct Options {
  std::string config_path;
  std::string preset = "default";
  std::string out_dir = "prgbd_out";
  int loops = -1;
  long long seed = -1;
  int keyframe_stride = -1;
  int ba_window = -1;
  bool no_scale_align = false;
  bool gt_depth = false;
  bool write_images = false;
  std::string est_path;
  std::string gt_path;
};

RunConfig build_config(const Options& o) {
  RunConfig c;
  if (!o.config_path.empty()) {
    c = load_run_config(o.config_path);
  } else if (o.preset == "short") {
    c = short_run_preset();
  } else if (o.preset == "planar") {
    c.scene = planar_scene_config();
    c.scene_source = "builtin:planar";
  } else if (o.preset != "default") {
    throw Error(ErrorKind::InvalidConfig, "unknown preset '" + o.preset + "'");
  }
  if (o.loops >= 0) c.max_loops = o.loops;
  if (o.seed >= 0) c.root_seed = static_cast<std::uint64_t>(o.seed);
  if (o.keyframe_stride >= 0) c.tracking.keyframe_stride = o.keyframe_stride;
  if (o.ba_window >= 0) c.tracking.ba_window = o.ba_window;
  if (o.no_scale_align) c.scale_align = false;
  if (o.gt_depth) c.scene.noise.sigma0 = 0.0;
  c.validate();
  return c;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error(ErrorKind::IOError, "cannot create directory " + dir);
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IOError, "cannot open " + path.string());
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  for (double v : img.data()) out.put(static_cast<char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
  if (!out) throw Error(ErrorKind::IOError, "failed writing " + path.string());
}

void print_loop(const LoopReport& r) {
  std::printf("loop %d  abs_rel %.4f  sq_rel %.4f  rmse %.3f  a1 %.3f  ate %.4f  lost %.3f  (%.1f s)\n", r.loop_index,
              r.full_cap.abs_rel, r.full_cap.sq_rel, r.full_cap.rmse, r.full_cap.a1, r.ate_rmse, r.lost_fraction,
              r.wall_seconds);
}

int cmd_run(const Options& o) {
  const RunConfig c = build_config(o);
  const RunResult result = run_self_improving(c);
  for (const auto& r : result.reports) print_loop(r);
  emit_reports(c, result, o.out_dir);
  std::printf("termination: %s (%s)\n", to_string(result.termination).c_str(), result.termination_detail.c_str());
  return result.termination == Termination::LostTracking ? kExitLost : 0;
}

int cmd_refine(Options o) {
  o.loops = 1;
  return cmd_run(o);
}

int cmd_track(const Options& o) {
  const RunConfig c = build_config(o);
  const SceneConfig scene = c.effective_scene();
  const SceneSequence seq = generate_scene(scene);
  const auto fields = corrupted_depths(seq, scene.noise);
  const TrackingResult t = track_sequence(seq, fields, c.effective_tracking());
  ensure_dir(o.out_dir);
  std::vector<StampedPose> est;
  std::vector<StampedPose> gt;
  std::vector<PoseSE3> gt_poses;
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    est.push_back({seq.frames[f].timestamp, t.poses[f]});
    gt.push_back({seq.frames[f].timestamp, seq.frames[f].gt_pose});
    gt_poses.push_back(seq.frames[f].gt_pose);
  }
  const std::filesystem::path dir(o.out_dir);
  write_tum_file((dir / "trajectory.txt").string(), est);
  write_tum_file((dir / "groundtruth.txt").string(), gt);
  const double ate = ate_rmse(t.poses, gt_poses, c.scale_align ? Alignment::Sim3 : Alignment::SE3);
  std::printf("keyframes %zu  map points %zu  lost %.3f  ate %.4f  baseline %.4f\n", t.graph.keyframes().size(),
              t.graph.map_points().size(), t.lost_fraction(), ate, t.baseline);
  if (t.lost_fraction() >= 1.0 - 1.0 / static_cast<double>(seq.frames.size())) return kExitLost;
  return 0;
}

int cmd_gen(const Options& o) {
  const RunConfig c = build_config(o);
  const SceneSequence seq = generate_scene(c.effective_scene());
  ensure_dir(o.out_dir);
  const std::filesystem::path dir(o.out_dir);
  std::vector<StampedPose> gt;
  for (const auto& f : seq.frames) gt.push_back({f.timestamp, f.gt_pose});
  write_tum_file((dir / "groundtruth.txt").string(), gt);
  if (o.write_images) {
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04zu.pgm", f);
      write_pgm(dir / name, seq.frames[f].image);
    }
  }
  nlohmann::json j = {{"frames", seq.frames.size()},
                      {"width", seq.intrinsics.width},
                      {"height", seq.intrinsics.height},
                      {"d_max_gt", seq.d_max_gt},
                      {"checksum", sequence_checksum(seq)}};
  std::ofstream out(dir / "scene.json");
  if (!out) throw Error(ErrorKind::IOError, "cannot write scene.json");
  out << j.dump(2) << '\n';
  std::printf("%zu frames  d_max_gt %.3f  checksum %llu\n", seq.frames.size(), seq.d_max_gt,
              static_cast<unsigned long long>(sequence_checksum(seq)));
  return 0;
}

int cmd_eval(const Options& o) {
  const auto est = read_tum_file(o.est_path);
  const auto gt = read_tum_file(o.gt_path);
  if (est.size() != gt.size()) throw Error(ErrorKind::AssociationError, "trajectories have different lengths");
  std::vector<PoseSE3> e;
  std::vector<PoseSE3> g;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (std::abs(est[i].timestamp - gt[i].timestamp) > 1e-6)
      throw Error(ErrorKind::AssociationError, "timestamps differ at line " + std::to_string(i + 1));
    e.push_back(est[i].pose);
    g.push_back(gt[i].pose);
  }
  const Alignment alignment = o.no_scale_align ? Alignment::SE3 : Alignment::Sim3;
  nlohmann::json j;
  j["alignment"] = o.no_scale_align ? "se3" : "sim3";
  j["ate_rmse"] = ate_rmse(e, g, alignment);
  const double length = path_length(g);
  j["segment_scale"] = length / 800.0;
  try {
    const auto rel = relative_errors(apply_alignment(e, align_trajectory(e, g, alignment)), g,
                                     scaled_segment_lengths(length));
    j["rel_tr"] = rel.rel_tr;
    j["rel_rot"] = rel.rel_rot;
    j["segments"] = rel.segments;
  } catch (const Error& err) {
    if (err.kind() != ErrorKind::EmptyEvaluation) throw;
    j["rel_tr"] = nullptr;
    j["rel_rot"] = nullptr;
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-improving pseudo RGB-D SLAM on synthetic scenes"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Scene and run config file")->check(CLI::ExistingFile);
    sub->add_option("--preset", o.preset, "Built-in setup when no config is given: default, short, planar");
    sub->add_option("--out", o.out_dir, "Output directory");
    sub->add_option("--seed", o.seed, "Root seed; splits into scene, noise and tracking seeds")->check(CLI::NonNegativeNumber);
    sub->add_option("--keyframe-stride", o.keyframe_stride, "Insert a keyframe every N frames")->check(CLI::PositiveNumber);
    sub->add_option("--ba-window", o.ba_window, "Keyframes in the local BA window")->check(CLI::Range(2, 1000));
    sub->add_flag("--no-scale-align", o.no_scale_align, "Align trajectories with SE3 instead of Sim3");
  };

  auto* run = app.add_subcommand("run", "Full self-improving loop");
  common(run);
  run->add_option("--loops", o.loops, "Maximum number of refinement loops")->check(CLI::PositiveNumber);
  run->add_flag("--gt-depth", o.gt_depth, "Feed ground-truth depth instead of corrupted depth");

  auto* track = app.add_subcommand("track", "Track the corrupted-depth sequence once");
  common(track);
  track->add_flag("--gt-depth", o.gt_depth, "Feed ground-truth depth instead of corrupted depth");

  auto* refine = app.add_subcommand("refine", "One depth refinement sweep followed by re-tracking");
  common(refine);

  auto* eval = app.add_subcommand("eval", "ATE and relative errors of a TUM trajectory against ground truth");
  eval->add_option("--est", o.est_path, "Estimated trajectory (TUM)")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", o.gt_path, "Ground-truth trajectory (TUM)")->required()->check(CLI::ExistingFile);
  eval->add_flag("--no-scale-align", o.no_scale_align, "Align with SE3 instead of Sim3");

  auto* gen = app.add_subcommand("gen", "Render the scene and write ground truth");
  common(gen);
  gen->add_flag("--images", o.write_images, "Also write every frame as PGM");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(o);
    if (*track) return cmd_track(o);
    if (*refine) return cmd_refine(o);
    if (*eval) return cmd_eval(o);
    if (*gen) return cmd_gen(o);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.kind()) {
      case ErrorKind::InvalidConfig: return kExitConfig;
      case ErrorKind::IOError: return kExitIO;
      case ErrorKind::LostTracking:
      case ErrorKind::InitializationFailure: return kExitLost;
      default: return 1;
    }
  }
  return 0;
}
