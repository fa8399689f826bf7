#include "prgbd/report_writer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "prgbd/error.hpp"
#include "prgbd/trajectory_io.hpp"

namespace prgbd {
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

nlohmann::json metrics_json(const DepthMetrics& m) {
  return {{"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel}, {"rmse", m.rmse}, {"rmse_log", m.rmse_log},
          {"a1", m.a1},           {"a2", m.a2},         {"a3", m.a3}};
}

// JSON has no NaN; missing relative errors become null.
nlohmann::json real(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IOError, "cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw Error(ErrorKind::IOError, "failed writing " + path.string());
}

struct Panel {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string palette(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<LoopReport>& reports) {
  out << kMetricsCsvHeader << '\n';
  for (const auto& r : reports) {
    for (const auto& c : r.caps) {
      const DepthMetrics& m = c.metrics;
      out << r.loop_index << ',' << fmt(c.fraction) << ',' << fmt(c.cap) << ',' << fmt(m.abs_rel) << ','
          << fmt(m.sq_rel) << ',' << fmt(m.rmse) << ',' << fmt(m.rmse_log) << ',' << fmt(m.a1) << ',' << fmt(m.a2)
          << ',' << fmt(m.a3) << ',' << fmt(r.ate_rmse) << ',' << fmt(r.rel_tr) << ',' << fmt(r.rel_rot) << ','
          << fmt(r.lost_fraction) << ',' << fmt(r.loss_sums.total) << '\n';
    }
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsCsvHeader)
    throw Error(ErrorKind::InvalidConfig, "metrics.csv header mismatch");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      v.push_back(std::strtod(cell.c_str(), &end));
      if (end == cell.c_str() || *end != '\0') throw Error(ErrorKind::InvalidConfig, "bad metrics.csv cell '" + cell + "'");
    }
    if (v.size() != 15) throw Error(ErrorKind::InvalidConfig, "metrics.csv row has " + std::to_string(v.size()) + " cells");
    MetricsRow r;
    r.loop = static_cast<int>(v[0]);
    r.cap_fraction = v[1];
    r.cap = v[2];
    r.metrics = {v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
    r.ate_rmse = v[10];
    r.rel_tr = v[11];
    r.rel_rot = v[12];
    r.lost_fraction = v[13];
    r.loss_total = v[14];
    rows.push_back(r);
  }
  return rows;
}

std::string summary_json(const RunConfig& config, const RunResult& result) {
  using nlohmann::json;
  const SceneConfig scene = config.effective_scene();
  const TrackingParams tracking = config.effective_tracking();
  json j;
  j["config"] = {
      {"scene", config.scene_source},
      {"frames", scene.frames},
      {"width", scene.intrinsics.width},
      {"height", scene.intrinsics.height},
      {"scene_seed", scene.seed},
      {"noise", {{"sigma0", scene.noise.sigma0}, {"gamma", scene.noise.gamma}, {"seed", scene.noise.seed}}},
      {"keyframe_stride", tracking.keyframe_stride},
      {"ba_window", tracking.ba_window},
      {"pixel_noise", tracking.pixel_noise},
      {"keypoint_spacing", tracking.keypoint_spacing},
      {"tracking_seed", tracking.seed},
      {"weights",
       {{"alpha", config.refiner.weights.alpha},
        {"beta", config.refiner.weights.beta},
        {"gamma", config.refiner.weights.gamma},
        {"mu", config.refiner.weights.mu}}},
      {"step_size", config.refiner.step_size},
      {"epochs", config.refiner.epochs},
      {"max_loops", config.max_loops},
      {"epsilon_improve", config.epsilon_improve},
      {"alignment", config.scale_align ? "sim3" : "se3"},
      {"cap_fractions", config.cap_fractions},
  };
  if (config.root_seed) j["config"]["root_seed"] = *config.root_seed;
  j["termination"] = {{"reason", to_string(result.termination)}, {"detail", result.termination_detail}};
  j["d_max_gt"] = result.d_max_gt;
  j["segment_lengths_m"] = result.segment_lengths;
  j["segment_scale"] = result.segment_scale;
  j["loops"] = json::array();
  for (const auto& r : result.reports) {
    json l;
    l["loop"] = r.loop_index;
    l["full_cap"] = metrics_json(r.full_cap);
    l["ate_rmse"] = r.ate_rmse;
    l["rel_tr"] = real(r.rel_tr);
    l["rel_rot"] = real(r.rel_rot);
    l["rel_segments"] = r.rel_segments;
    l["lost_fraction"] = r.lost_fraction;
    l["keyframes"] = r.keyframes;
    l["map_points"] = r.map_points;
    l["baseline"] = r.baseline;
    l["loss"] = {{"photometric", r.loss_sums.photometric},       {"smoothness", r.loss_sums.smoothness},
                 {"consistency", r.loss_sums.consistency},       {"transfer_c_k1", r.loss_sums.transfer_c_k1},
                 {"transfer_c_k2", r.loss_sums.transfer_c_k2},   {"transfer_k1_k2", r.loss_sums.transfer_k1_k2},
                 {"total", r.loss_sums.total}};
    if (r.refine)
      l["refine"] = {{"loss_before", r.refine->loss_before},
                     {"loss_after", r.refine->loss_after},
                     {"keyframe_visits", r.refine->keyframe_visits},
                     {"accepted_steps", r.refine->accepted_steps},
                     {"no_descent", r.refine->no_descent}};
    l["wall_seconds"] = r.wall_seconds;
    j["loops"].push_back(l);
  }
  return j.dump(2) + "\n";
}

std::string plots_svg(const RunConfig& config, const RunResult& result) {
  const auto& reports = result.reports;
  struct Metric {
    const char* name;
    double DepthMetrics::*field;
  };
  const Metric metrics[] = {{"Abs Rel", &DepthMetrics::abs_rel},
                            {"Sq Rel", &DepthMetrics::sq_rel},
                            {"RMSE", &DepthMetrics::rmse},
                            {"a1", &DepthMetrics::a1}};
  const double pw = 300.0, ph = 200.0, margin = 40.0;
  const double width = 2 * (pw + margin) + margin;
  const double height = 3 * (ph + margin) + margin;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const auto frame = [&](const Panel& p, const std::string& title) {
    svg << "<g class=\"panel\"><rect x=\"" << p.x << "\" y=\"" << p.y << "\" width=\"" << p.w << "\" height=\""
        << p.h << "\" fill=\"none\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << p.x << "\" y=\"" << p.y - 6 << "\">" << title << "</text></g>\n";
  };

  const std::size_t n_caps = reports.empty() ? 0 : reports.front().caps.size();
  const int last_loop = reports.empty() ? 0 : reports.back().loop_index;
  for (std::size_t mi = 0; mi < std::size(metrics); ++mi) {
    const Panel p{margin + (mi % 2) * (pw + margin), margin + (mi / 2) * (ph + margin), pw, ph};
    frame(p, std::string(metrics[mi].name) + " vs loop");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : reports)
      for (const auto& c : r.caps) {
        lo = std::min(lo, c.metrics.*metrics[mi].field);
        hi = std::max(hi, c.metrics.*metrics[mi].field);
      }
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    for (std::size_t ci = 0; ci < n_caps; ++ci) {
      svg << "<polyline class=\"cap\" fill=\"none\" stroke=\"" << palette(ci) << "\" points=\"";
      for (const auto& r : reports) {
        const double x = p.x + (last_loop > 0 ? p.w * r.loop_index / last_loop : p.w / 2);
        const double y = p.y + p.h - p.h * ((r.caps[ci].metrics.*metrics[mi].field) - lo) / (hi - lo);
        svg << fmt(x) << ',' << fmt(y) << ' ';
      }
      svg << "\"/>\n";
    }
    svg << "<text x=\"" << p.x + p.w + 4 << "\" y=\"" << p.y + 10 << "\">" << fmt(hi) << "</text>\n";
    svg << "<text x=\"" << p.x + p.w + 4 << "\" y=\"" << p.y + p.h << "\">" << fmt(lo) << "</text>\n";
  }
  for (std::size_t ci = 0; ci < n_caps; ++ci) {
    const double x = margin + (ci % 3) * 90.0;
    const double y = margin + 2 * (ph + margin) + 10 + (ci / 3) * 14.0;
    svg << "<text x=\"" << x << "\" y=\"" << y << "\" fill=\"" << palette(ci) << "\">cap "
        << fmt(100.0 * reports.front().caps[ci].fraction) << "%</text>\n";
  }

  // Top-down (x, z) view of the trajectories.
  const Panel tp{margin + pw + margin, margin + 2 * (ph + margin), pw, ph};
  frame(tp, "Trajectories (top-down x-z)");
  const Alignment alignment = config.scale_align ? Alignment::Sim3 : Alignment::SE3;
  std::vector<std::vector<Vec3>> tracks;
  tracks.push_back(camera_centers(result.gt_trajectory));
  for (const auto& r : reports) {
    try {
      tracks.push_back(camera_centers(
          apply_alignment(r.trajectory, align_trajectory(r.trajectory, result.gt_trajectory, alignment))));
    } catch (const Error&) {
      tracks.push_back(camera_centers(r.trajectory));
    }
  }
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, zmin = xmin, zmax = -xmin;
  for (const auto& t : tracks)
    for (const auto& c : t) {
      xmin = std::min(xmin, c.x());
      xmax = std::max(xmax, c.x());
      zmin = std::min(zmin, c.z());
      zmax = std::max(zmax, c.z());
    }
  const double span = std::max({xmax - xmin, zmax - zmin, 1e-9});
  for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
    const bool gt = ti == 0;
    svg << "<polyline class=\"" << (gt ? "trajectory-gt" : "trajectory") << "\" fill=\"none\" stroke=\""
        << (gt ? std::string("black") : palette(ti - 1)) << "\" stroke-width=\"" << (gt ? 2 : 1) << "\" points=\"";
    for (const auto& c : tracks[ti]) {
      const double x = tp.x + 10 + (tp.w - 20) * (c.x() - xmin) / span;
      const double y = tp.y + tp.h - 10 - (tp.h - 20) * (c.z() - zmin) / span;
      svg << fmt(x) << ',' << fmt(y) << ' ';
    }
    svg << "\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_reports(const RunConfig& config, const RunResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (result.reports.empty() && result.termination != Termination::LostTracking)
    throw Error(ErrorKind::InvalidConfig, "no reports to write");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error(ErrorKind::IOError, "cannot create directory " + out_dir);
  const fs::path dir(out_dir);

  std::ostringstream csv;
  write_metrics_csv(csv, result.reports);
  write_file(dir / "metrics.csv", csv.str());
  for (const auto& r : result.reports) {
    std::vector<StampedPose> traj;
    for (std::size_t f = 0; f < r.trajectory.size(); ++f) traj.push_back({result.timestamps.at(f), r.trajectory[f]});
    std::ostringstream tum;
    write_tum(tum, traj);
    write_file(dir / ("trajectory_loop" + std::to_string(r.loop_index) + ".txt"), tum.str());
  }
  write_file(dir / "summary.json", summary_json(config, result));
  if (!result.reports.empty()) write_file(dir / "plots.svg", plots_svg(config, result));
}

}  // namespace prgbd
