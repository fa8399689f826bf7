#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "prgbd/pipeline.hpp"

namespace prgbd {

/// Header of metrics.csv; one data row per loop and depth cap.
inline constexpr const char* kMetricsCsvHeader =
    "loop,cap_fraction,cap_m,abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3,ate_rmse,rel_tr,rel_rot,lost_fraction,loss_total";

/// Reals are printed with 9 significant digits. Wall times are left out so
/// identical runs give identical bytes.
void write_metrics_csv(std::ostream& out, const std::vector<LoopReport>& reports);

struct MetricsRow {
  int loop = 0;
  double cap_fraction = 0.0;
  double cap = 0.0;
  DepthMetrics metrics;
  double ate_rmse = 0.0;
  double rel_tr = 0.0;
  double rel_rot = 0.0;
  double lost_fraction = 0.0;
  double loss_total = 0.0;
};
/// Parse what write_metrics_csv produced. Throws InvalidConfig on a bad header or row.
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

std::string summary_json(const RunConfig& config, const RunResult& result);

/// Metric-vs-loop panels (one polyline per cap, class "cap") and a top-down
/// overlay of the Sim3-aligned trajectories against ground truth.
std::string plots_svg(const RunConfig& config, const RunResult& result);

/// metrics.csv, trajectory_loopK.txt, summary.json and plots.svg in out_dir
/// (created when missing). Throws IOError.
void emit_reports(const RunConfig& config, const RunResult& result, const std::string& out_dir);

}  // namespace prgbd
