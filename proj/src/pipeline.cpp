#include "prgbd/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "prgbd/error.hpp"
#include "prgbd/parallel.hpp"

namespace prgbd {
namespace {

double parse_number(const ConfigEntry& e) {
  char* end = nullptr;
  const double v = std::strtod(e.value.c_str(), &end);
  while (end && (*end == ' ' || *end == '\t')) ++end;
  if (end == e.value.c_str() || *end != '\0')
    throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(e.line) + ": '" + e.value + "' is not a number");
  return v;
}

int parse_int(const ConfigEntry& e) {
  const double v = parse_number(e);
  if (v != std::floor(v)) throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(e.line) + ": expected integer");
  return static_cast<int>(v);
}

bool parse_flag(const ConfigEntry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "on") return true;
  if (e.value == "false" || e.value == "0" || e.value == "off") return false;
  throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(e.line) + ": expected true/false");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool all_lost(const TrackingResult& t) {
  for (std::size_t f = 1; f < t.status.size(); ++f)
    if (t.status[f] == FrameStatus::Tracked) return false;
  return t.status.size() > 1;
}

}  // namespace

void RunConfig::validate() const {
  if (max_loops < 1) throw Error(ErrorKind::InvalidConfig, "max loops must be at least 1");
  if (!(epsilon_improve > 0.0)) throw Error(ErrorKind::InvalidConfig, "termination threshold must be positive");
  if (cap_fractions.empty()) throw Error(ErrorKind::InvalidConfig, "at least one depth cap is required");
  for (double f : cap_fractions)
    if (!(f > 0.0 && f <= 1.0)) throw Error(ErrorKind::InvalidConfig, "depth cap fractions must lie in (0, 1]");
  if (tracking.keyframe_stride < 1) throw Error(ErrorKind::InvalidConfig, "keyframe stride must be positive");
  if (tracking.ba_window < 2) throw Error(ErrorKind::InvalidConfig, "BA window must hold at least 2 keyframes");
  refiner.validate();
}

SceneConfig RunConfig::effective_scene() const {
  SceneConfig s = scene;
  if (root_seed) {
    s.seed = derive_seed(*root_seed, 1);
    s.noise.seed = derive_seed(*root_seed, 2);
  }
  return s;
}

TrackingParams RunConfig::effective_tracking() const {
  TrackingParams t = tracking;
  if (root_seed) t.seed = derive_seed(*root_seed, 3);
  return t;
}

void apply_run_entries(RunConfig& c, const std::vector<ConfigEntry>& entries) {
  for (const auto& e : entries) {
    if (e.key.rfind("run.", 0) != 0) continue;
    const std::string key = e.key.substr(4);
    if (key == "max_loops") c.max_loops = parse_int(e);
    else if (key == "epsilon_improve") c.epsilon_improve = parse_number(e);
    else if (key == "scale_align") c.scale_align = parse_flag(e);
    else if (key == "seed") c.root_seed = static_cast<std::uint64_t>(parse_number(e));
    else if (key == "keyframe_stride") c.tracking.keyframe_stride = parse_int(e);
    else if (key == "ba_window") c.tracking.ba_window = parse_int(e);
    else if (key == "pixel_noise") c.tracking.pixel_noise = parse_number(e);
    else if (key == "keypoint_spacing") c.tracking.keypoint_spacing = parse_int(e);
    else if (key == "min_inliers") c.tracking.min_inliers = parse_int(e);
    else if (key == "step_size") c.refiner.step_size = parse_number(e);
    else if (key == "epochs") c.refiner.epochs = parse_int(e);
    else if (key == "min_shared_points") c.refiner.min_shared_points = parse_int(e);
    else if (key == "alpha") c.refiner.weights.alpha = parse_number(e);
    else if (key == "beta") c.refiner.weights.beta = parse_number(e);
    else if (key == "gamma") c.refiner.weights.gamma = parse_number(e);
    else if (key == "mu") c.refiner.weights.mu = parse_number(e);
    else if (key == "caps") {
      std::istringstream in(e.value);
      std::vector<double> caps;
      double v = 0.0;
      while (in >> v) caps.push_back(v);
      if (!in.eof()) throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(e.line) + ": bad cap list");
      c.cap_fractions = caps;
    } else {
      throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    }
  }
}

RunConfig load_run_config(const std::string& path) {
  const auto entries = read_config_file(path);
  RunConfig c;
  c.scene = parse_scene_config(entries);
  c.scene_source = path;
  apply_run_entries(c, entries);
  c.validate();
  return c;
}

RunConfig short_run_preset() {
  RunConfig c;
  c.scene = orbit_scene_config();
  c.scene_source = "builtin:orbit";
  c.max_loops = 3;
  return c;
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::MaxLoops: return "max_loops";
    case Termination::NoImprovement: return "no_improvement";
    case Termination::LostTracking: return "lost_tracking";
  }
  return "unknown";
}

std::vector<DepthField> corrupted_depths(const SceneSequence& sequence, const NoiseModel& noise) {
  std::vector<DepthField> out(sequence.frames.size());
  parallel_for(out.size(), [&](std::size_t f) {
    out[f] = corrupt_depth(sequence.frames[f].gt_depth, noise, sequence.d_max_gt, f);
  });
  return out;
}

LoopReport evaluate_loop(const RunConfig& config, const SceneSequence& sequence, const TrackingResult& tracking,
                         std::span<const DepthField> fields, int loop_index) {
  LoopReport r;
  r.loop_index = loop_index;
  std::vector<DepthField> gt;
  gt.reserve(sequence.frames.size());
  for (const auto& f : sequence.frames) gt.push_back(f.gt_depth);

  std::vector<double> caps;
  for (double f : config.cap_fractions) caps.push_back(f * sequence.d_max_gt);
  caps.push_back(sequence.d_max_gt);
  std::vector<DepthMetrics> metrics(caps.size());
  parallel_for(caps.size(), [&](std::size_t i) { metrics[i] = mean_depth_metrics(fields, gt, caps[i], true); });
  for (std::size_t i = 0; i + 1 < caps.size(); ++i) r.caps.push_back({config.cap_fractions[i], caps[i], metrics[i]});
  r.full_cap = metrics.back();

  std::vector<PoseSE3> gt_poses;
  for (const auto& f : sequence.frames) gt_poses.push_back(f.gt_pose);
  const Alignment alignment = config.scale_align ? Alignment::Sim3 : Alignment::SE3;
  r.trajectory = tracking.poses;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    const auto aligned = apply_alignment(tracking.poses, align_trajectory(tracking.poses, gt_poses, alignment));
    r.ate_rmse = ate_rmse(tracking.poses, gt_poses, alignment);
    try {
      const RelativeErrors rel = relative_errors(aligned, gt_poses, scaled_segment_lengths(path_length(gt_poses)));
      r.rel_tr = rel.rel_tr;
      r.rel_rot = rel.rel_rot;
      r.rel_segments = rel.segments;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyEvaluation) throw;
      r.rel_tr = r.rel_rot = nan;
    }
  } catch (const Error& e) {
    // A trajectory collapsed onto a line or a point cannot be aligned.
    if (e.kind() != ErrorKind::DegenerateConfiguration) throw;
    r.ate_rmse = r.rel_tr = r.rel_rot = nan;
  }

  const auto& keyframes = tracking.graph.keyframes();
  std::vector<LossBreakdown> losses(keyframes.size());
  parallel_for(keyframes.size(), [&](std::size_t i) {
    const TripleProblem p =
        keyframe_problem(sequence, tracking, fields, keyframes[i].id, config.refiner.min_shared_points);
    losses[i] = evaluate_triple(p, config.refiner.weights, false).breakdown;
  });
  for (const auto& b : losses) {
    r.loss_sums.photometric += b.photometric;
    r.loss_sums.smoothness += b.smoothness;
    r.loss_sums.consistency += b.consistency;
    r.loss_sums.transfer_c_k1 += b.transfer_c_k1;
    r.loss_sums.transfer_c_k2 += b.transfer_c_k2;
    r.loss_sums.transfer_k1_k2 += b.transfer_k1_k2;
    r.loss_sums.total += b.total;
    r.loss_sums.photometric_present |= b.photometric_present;
    r.loss_sums.consistency_present |= b.consistency_present;
    r.loss_sums.transfer_present |= b.transfer_present;
  }

  r.lost_fraction = tracking.lost_fraction();
  r.keyframes = static_cast<int>(keyframes.size());
  r.map_points = static_cast<int>(tracking.graph.map_points().size());
  r.baseline = tracking.baseline;
  return r;
}

RunResult run_self_improving(const RunConfig& config) {
  config.validate();
  const SceneConfig scene_config = config.effective_scene();
  const TrackingParams tracking_params = config.effective_tracking();
  const SceneSequence sequence = generate_scene(scene_config);

  RunResult result;
  result.d_max_gt = sequence.d_max_gt;
  for (const auto& f : sequence.frames) {
    result.timestamps.push_back(f.timestamp);
    result.gt_trajectory.push_back(f.gt_pose);
  }
  const double path = path_length(result.gt_trajectory);
  result.segment_lengths = scaled_segment_lengths(path);
  result.segment_scale = path / 800.0;

  const auto track = [&](std::span<const DepthField> fields) -> std::optional<TrackingResult> {
    try {
      TrackingResult t = track_sequence(sequence, fields, tracking_params);
      if (all_lost(t)) {
        result.termination_detail = "every frame after the first was lost";
        return std::nullopt;
      }
      return t;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InitializationFailure && e.kind() != ErrorKind::LostTracking) throw;
      result.termination_detail = e.what();
      return std::nullopt;
    }
  };

  auto t0 = std::chrono::steady_clock::now();
  std::vector<DepthField> fields = corrupted_depths(sequence, scene_config.noise);
  auto tracking = track(fields);
  if (!tracking) {
    result.termination = Termination::LostTracking;
    result.final_fields = std::move(fields);
    return result;
  }
  result.reports.push_back(evaluate_loop(config, sequence, *tracking, fields, 0));
  result.reports.back().wall_seconds = seconds_since(t0);

  for (int loop = 1; loop <= config.max_loops; ++loop) {
    t0 = std::chrono::steady_clock::now();
    for (const auto& kf : std::vector<Keyframe>(tracking->graph.keyframes()))
      tracking->graph = filter_outliers(tracking->graph, kf.id, sequence.intrinsics);
    tracking->graph.refresh_slam_depths();

    RefineResult refined = refine_depths(sequence, *tracking, fields, config.refiner);
    fields = propagate_to_nonkeyframes(refined.fields, *tracking, sequence.intrinsics);
    tracking = track(fields);
    if (!tracking) {
      result.termination = Termination::LostTracking;
      result.final_fields = std::move(fields);
      return result;
    }
    LoopReport report = evaluate_loop(config, sequence, *tracking, fields, loop);
    report.refine = refined.report;
    report.wall_seconds = seconds_since(t0);
    result.reports.push_back(std::move(report));

    const double previous = result.reports[loop - 1].full_cap.abs_rel;
    const double current = result.reports[loop].full_cap.abs_rel;
    const double improvement = previous > 0.0 ? (previous - current) / previous : 0.0;
    if (improvement < config.epsilon_improve) {
      result.termination = Termination::NoImprovement;
      std::ostringstream msg;
      msg << "relative Abs Rel improvement " << improvement << " below " << config.epsilon_improve << " at loop "
          << loop;
      result.termination_detail = msg.str();
      result.final_fields = std::move(fields);
      return result;
    }
  }
  result.termination = Termination::MaxLoops;
  result.termination_detail = "reached " + std::to_string(config.max_loops) + " loops";
  result.final_fields = std::move(fields);
  return result;
}

}  // namespace prgbd
