#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "doctest.h"
#include "prgbd/error.hpp"
#include "prgbd/evaluation.hpp"
#include "support.hpp"

using namespace prgbd;

namespace {

Grid<double> grid(int w, int h, std::initializer_list<double> v) {
  Grid<double> g(w, h);
  std::copy(v.begin(), v.end(), g.data().begin());
  return g;
}

std::vector<Vec3> random_points(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> d(0.0, 3.0);
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) out.emplace_back(d(rng), d(rng), d(rng));
  return out;
}

// Camera-to-world (R, c) to the library's world-to-camera pose.
PoseSE3 from_center(const Mat3& r_wc, const Vec3& c) { return {r_wc.transpose(), -(r_wc.transpose() * c)}; }

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("depth metrics hand cases") {
  const DepthMetrics same = depth_metrics(grid(2, 1, {3.0, 7.0}), grid(2, 1, {3.0, 7.0}), 80.0, false);
  CHECK(same.abs_rel == 0.0);
  CHECK(same.sq_rel == 0.0);
  CHECK(same.rmse == 0.0);
  CHECK(same.rmse_log == 0.0);
  CHECK(same.a1 == 1.0);

  const DepthMetrics one = depth_metrics(grid(1, 1, {1.3}), grid(1, 1, {1.0}), 80.0, false);
  CHECK(std::abs(one.abs_rel - 0.3) < 1e-12);
  CHECK(std::abs(one.rmse - 0.3) < 1e-12);
  CHECK(std::abs(one.sq_rel - 0.09) < 1e-12);
  CHECK(std::abs(one.rmse_log - std::log(1.3)) < 1e-12);
  CHECK(one.a1 == 0.0);
  CHECK(one.a2 == 1.0);
  CHECK(one.a3 == 1.0);

  // Two of the ratios sit exactly on the first threshold, which is strict.
  const DepthMetrics four = depth_metrics(grid(2, 2, {2, 3, 4, 10}), grid(2, 2, {2, 2, 5, 8}), 80.0, false);
  CHECK(std::abs(four.abs_rel - 0.2375) < 1e-12);
  CHECK(std::abs(four.sq_rel - 0.3) < 1e-12);
  CHECK(std::abs(four.rmse - std::sqrt(1.5)) < 1e-12);
  const double l = std::log(1.5) * std::log(1.5) + std::log(0.8) * std::log(0.8) + std::log(1.25) * std::log(1.25);
  CHECK(std::abs(four.rmse_log - std::sqrt(l / 4)) < 1e-12);
  CHECK(four.a1 == 0.25);
  CHECK(four.a2 == 1.0);
  CHECK(four.a3 == 1.0);
}

TEST_CASE("cap masks ground truth and clamps prediction") {
  const DepthMetrics m = depth_metrics(grid(3, 1, {100.0, 5.0, 1.0}), grid(3, 1, {10.0, 90.0, 0.0}), 20.0, false);
  // Only the first pixel is valid; the prediction is clamped to the cap.
  CHECK(std::abs(m.abs_rel - 1.0) < 1e-12);
  try {
    depth_metrics(grid(1, 1, {1.0}), grid(1, 1, {50.0}), 20.0, false);
    FAIL("expected EmptyEvaluation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyEvaluation);
  }
}

TEST_CASE("median scaling invariance and nested thresholds") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> d(1.0, 60.0);
  std::uniform_real_distribution<double> noise(0.6, 1.5);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  Grid<double> gt(16, 12), pred(16, 12);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt[i] = d(rng);
    pred[i] = gt[i] * noise(rng);
  }
  const DepthMetrics base = depth_metrics(pred, gt, 50.0, true);
  for (int k = 0; k < 20; ++k) {
    // Powers of two keep the rescaled values bit-exact.
    const double s = std::ldexp(1.0, static_cast<int>(std::lround(std::log2(scale(rng)))));
    Grid<double> scaled = pred;
    for (double& x : scaled.data()) x *= s;
    const DepthMetrics m = depth_metrics(scaled, gt, 50.0, true);
    CHECK(m.abs_rel == base.abs_rel);
    CHECK(m.rmse == base.rmse);
    CHECK(m.a1 == base.a1);
  }
  for (int k = 0; k < 20; ++k) {
    const double s = scale(rng);
    Grid<double> scaled = pred;
    for (double& x : scaled.data()) x *= s;
    const DepthMetrics m = depth_metrics(scaled, gt, 50.0, true);
    CHECK(std::abs(m.abs_rel - base.abs_rel) <= 1e-12);
    CHECK(std::abs(m.sq_rel - base.sq_rel) <= 1e-12);
    CHECK(std::abs(m.rmse - base.rmse) <= 1e-12);
    CHECK(m.a1 == base.a1);
  }
  for (int k = 0; k < 1000; ++k) {
    std::uniform_real_distribution<double> spread(0.01, 3.0);
    const double sp = spread(rng);
    Grid<double> p(8, 6), g(8, 6);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = d(rng);
      p[i] = g[i] * std::exp(sp * (noise(rng) - 1.0));
    }
    const DepthMetrics m = depth_metrics(p, g, 80.0, k % 2 == 0);
    CHECK(0.0 <= m.a1);
    CHECK(m.a1 <= m.a2);
    CHECK(m.a2 <= m.a3);
    CHECK(m.a3 <= 1.0);
  }
}

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  CHECK_THROWS_AS(median({}), Error);
}

TEST_CASE("umeyama recovers planted similarities") {
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> s(0.5, 2.0);
  std::normal_distribution<double> t(0.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    const auto gt = random_points(rng, 30);
    Sim3Transform planted;
    planted.scale = s(rng);
    planted.rotation = test::random_rotation(rng, 3.1);
    planted.translation = {t(rng), t(rng), t(rng)};
    std::vector<Vec3> est;
    for (const auto& x : gt) est.push_back(planted * x);
    const Sim3Transform r = umeyama_align(est, gt, true);
    const Sim3Transform inv = planted.inverse();
    CHECK(std::abs(r.scale - inv.scale) < 1e-9);
    CHECK((r.rotation - inv.rotation).norm() < 1e-9);
    CHECK((r.translation - inv.translation).norm() < 1e-9);

    // Same answer as Eigen's implementation.
    Eigen::Matrix3Xd src(3, est.size()), dst(3, gt.size());
    for (std::size_t j = 0; j < est.size(); ++j) {
      src.col(j) = est[j];
      dst.col(j) = gt[j];
    }
    const Eigen::Matrix4d e = Eigen::umeyama(src, dst, true);
    const Mat3 sr = e.topLeftCorner<3, 3>();
    CHECK((sr - r.scale * r.rotation).norm() < 1e-9);
    CHECK((e.topRightCorner<3, 1>() - r.translation).norm() < 1e-9);
  }
}

TEST_CASE("umeyama edge cases") {
  std::mt19937_64 rng(1);
  const auto pts = random_points(rng, 10);
  const Sim3Transform id = umeyama_align(pts, pts, true);
  CHECK(std::abs(id.scale - 1.0) < 1e-12);
  CHECK((id.rotation - Mat3::Identity()).norm() < 1e-12);
  CHECK(id.translation.norm() < 1e-12);
  const Sim3Transform rigid = umeyama_align(pts, pts, false);
  CHECK(rigid.scale == 1.0);
  try {
    umeyama_align({pts[0], pts[1]}, {pts[0], pts[1]}, true);
    FAIL("expected DegenerateConfiguration");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateConfiguration);
  }
  std::vector<Vec3> line;
  for (int i = 0; i < 6; ++i) line.push_back(Vec3(1, 2, 3) * i);
  CHECK_THROWS_AS(umeyama_align(line, line, true), Error);
}

TEST_CASE("absolute trajectory error") {
  std::mt19937_64 rng(7);
  std::vector<PoseSE3> gt;
  for (int i = 0; i < 40; ++i)
    gt.push_back(from_center(test::random_rotation(rng, 0.3), Vec3(0.5 * i, std::sin(0.3 * i), 0.1 * i * i / 40)));
  CHECK(ate_rmse(gt, gt, Alignment::Sim3) < 1e-12);

  std::vector<PoseSE3> shifted;
  for (const auto& p : gt) {
    const Mat3 r_wc = p.rotation().transpose();
    shifted.push_back(from_center(r_wc, -(r_wc * p.translation()) + Vec3(1, 0, 0)));
  }
  CHECK(ate_rmse(shifted, gt, Alignment::None) == doctest::Approx(1.0).epsilon(1e-12));

  Sim3Transform s;
  s.scale = 2.7;
  s.rotation = test::random_rotation(rng, 2.0);
  s.translation = {3, -1, 8};
  const auto moved = apply_alignment(gt, s);
  CHECK(ate_rmse(moved, gt, Alignment::Sim3) < 1e-9);
  CHECK(ate_rmse(moved, gt, Alignment::SE3) > 0.1);
  const auto back = apply_alignment(moved, align_trajectory(moved, gt, Alignment::Sim3));
  for (std::size_t i = 0; i < gt.size(); ++i)
    CHECK((back[i].rotation() - gt[i].rotation()).norm() < 1e-9);

  std::vector<PoseSE3> shorter(gt.begin(), gt.end() - 1);
  try {
    ate_rmse(shorter, gt, Alignment::Sim3);
    FAIL("expected AssociationError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AssociationError);
  }
}

TEST_CASE("relative errors") {
  // Straight 200 m path along z, 0.25 m per frame.
  std::vector<PoseSE3> gt, drift;
  const double theta_deg = 0.05;
  for (int i = 0; i <= 800; ++i) {
    const double s = 0.25 * i;
    gt.push_back(from_center(Mat3::Identity(), {0, 0, s}));
    drift.push_back(from_center(so3_exp({0.0, theta_deg * std::numbers::pi / 180.0 * s, 0.0}), {0, 0, s}));
  }
  const auto lengths = scaled_segment_lengths(path_length(gt));
  CHECK(lengths.front() == doctest::Approx(25.0));
  CHECK(lengths.back() == doctest::Approx(200.0));
  const std::vector<double> usable(lengths.begin(), lengths.end() - 1);
  const RelativeErrors zero = relative_errors(gt, gt, usable);
  CHECK(zero.rel_tr < 1e-12);
  CHECK(zero.rel_rot < 1e-12);
  CHECK(zero.segments > 0);
  const RelativeErrors r = relative_errors(drift, gt, usable);
  CHECK(r.rel_rot == doctest::Approx(theta_deg).epsilon(0.05));

  std::vector<PoseSE3> short_path(gt.begin(), gt.begin() + 41);
  try {
    relative_errors(short_path, short_path, {100, 200, 300, 400, 500, 600, 700, 800});
    FAIL("expected EmptyEvaluation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyEvaluation);
  }
}

}  // TEST_SUITE
