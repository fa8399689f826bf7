#include <array>
#include <random>

#include "doctest.h"
#include "prgbd/depth_refiner.hpp"
#include "prgbd/error.hpp"
#include "prgbd/losses.hpp"
#include "support.hpp"

using namespace prgbd;

namespace {

const CameraIntrinsics kCam{50.0, 50.0, 20.0, 15.0, 41, 31};

// Straightforward per-pixel error with a reflect-padded 3x3 SSIM window.
double reference_pe(const Image& a, const Image& b, int x, int y) {
  const auto at = [](const Image& im, int i, int j) {
    i = i < 0 ? -i : (i >= im.width() ? 2 * (im.width() - 1) - i : i);
    j = j < 0 ? -j : (j >= im.height() ? 2 * (im.height() - 1) - j : j);
    return im(i, j);
  };
  double ma = 0, mb = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      ma += at(a, x + dx, y + dy) / 9.0;
      mb += at(b, x + dx, y + dy) / 9.0;
    }
  double va = 0, vb = 0, cov = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const double ea = at(a, x + dx, y + dy) - ma;
      const double eb = at(b, x + dx, y + dy) - mb;
      va += ea * ea / 9.0;
      vb += eb * eb / 9.0;
      cov += ea * eb / 9.0;
    }
  const double c1 = 0.0001, c2 = 0.0009;
  const double ssim = (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  return 0.85 / 2.0 * (1.0 - ssim) + 0.15 * std::abs(a(x, y) - b(x, y));
}

Image random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image im(w, h);
  for (double& v : im.data()) v = u(rng);
  return im;
}

DepthField random_field(int w, int h, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Grid<double> g(w, h);
  for (double& v : g.data()) v = u(rng);
  return DepthField::from_depths(g);
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("symmetric transfer hand cases") {
  const Pixel center{kCam.cx, kCam.cy};
  const DepthField four(kCam.width, kCam.height, 4.0);
  const DepthField five(kCam.width, kCam.height, 5.0);
  const DepthField six(kCam.width, kCam.height, 6.0);
  const PoseSE3 same = PoseSE3::identity();
  CHECK(symmetric_transfer_pair(center, center, five, five, same, kCam).value() == 0.0);
  const PoseSE3 forward(Mat3::Identity(), {0, 0, 1});
  CHECK(symmetric_transfer_pair(center, center, four, five, forward, kCam).value() == doctest::Approx(0.0));
  const TransferPair p = symmetric_transfer_pair(center, center, four, six, forward, kCam);
  CHECK(p.forward_valid);
  CHECK(p.backward_valid);
  CHECK(p.value() == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("symmetric transfer is symmetric") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(5.0, 35.0);
  std::uniform_real_distribution<double> v(5.0, 25.0);
  std::uniform_real_distribution<double> t(-0.3, 0.3);
  const DepthField a = random_field(kCam.width, kCam.height, 8.0, 12.0, 1);
  const DepthField b = random_field(kCam.width, kCam.height, 8.0, 12.0, 2);
  for (int i = 0; i < 200; ++i) {
    const PoseSE3 tab(test::random_rotation(rng, 0.05), {t(rng), t(rng), t(rng)});
    const Pixel pa{u(rng), v(rng)};
    const Pixel pb{u(rng), v(rng)};
    const TransferPair ab = symmetric_transfer_pair(pa, pb, a, b, tab, kCam);
    const TransferPair ba = symmetric_transfer_pair(pb, pa, b, a, tab.inverse(), kCam);
    CHECK(std::abs(ab.value() - ba.value()) <= 1e-12);
    CHECK(ab.value() >= 0.0);
  }
}

TEST_CASE("transfer total of one keypoint is the mean over its patch") {
  const DepthField d1 = random_field(kCam.width, kCam.height, 9.0, 11.0, 3);
  const DepthField dc = random_field(kCam.width, kCam.height, 9.0, 11.0, 4);
  const DepthField d2 = random_field(kCam.width, kCam.height, 9.0, 11.0, 5);
  const PoseSE3 p1(Mat3::Identity(), {0.2, 0.0, 0.0});
  const PoseSE3 pc = PoseSE3::identity();
  const PoseSE3 p2(Mat3::Identity(), {-0.2, 0.0, 0.05});
  const CommonKeypoint x{0, {19.0, 15.0}, {20.0, 15.0}, {21.0, 14.0}};
  const TransferTotals t = symmetric_transfer_total({x}, d1, dc, d2, p1, pc, p2, kCam);
  CHECK(t.present);
  const auto brute = [&](const Pixel& pa, const Pixel& pb, const DepthField& da, const DepthField& db,
                         const PoseSE3& a, const PoseSE3& b) {
    double sum = 0.0;
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx)
        sum += symmetric_transfer_pair({pa.u + dx, pa.v + dy}, {pb.u + dx, pb.v + dy}, da, db, b * a.inverse(), kCam)
                   .value();
    return sum / 25.0;
  };
  CHECK(t.c_k1 == doctest::Approx(brute(x.in_c, x.in_k1, dc, d1, pc, p1)).epsilon(1e-12));
  CHECK(t.c_k2 == doctest::Approx(brute(x.in_c, x.in_k2, dc, d2, pc, p2)).epsilon(1e-12));
  CHECK(t.k1_k2 == doctest::Approx(brute(x.in_k1, x.in_k2, d1, d2, p1, p2)).epsilon(1e-12));

  const TransferTotals none = symmetric_transfer_total({}, d1, dc, d2, p1, pc, p2, kCam);
  CHECK_FALSE(none.present);
  CHECK(none.c_k1 == 0.0);
  CHECK(none.c_k2 == 0.0);
  CHECK(none.k1_k2 == 0.0);
}

TEST_CASE("depth consistency") {
  DepthField d(kCam.width, kCam.height, 5.0);
  d.set_depth(3, 4, 2.0);
  CHECK(*depth_consistency(d, {{3, 4}, {10, 10}}, {3.0, 5.0}) == doctest::Approx(0.5));
  CHECK(*depth_consistency(d, {{10, 10}}, {5.0}) == doctest::Approx(0.0));
  CHECK_FALSE(depth_consistency(d, {}, {}));
}

TEST_CASE("photometric error against an independent reference") {
  Image a(8, 8, 0.5);
  Image b(8, 8, 0.7);
  const double ssim = (2 * 0.5 * 0.7 + 0.0001) / (0.25 + 0.49 + 0.0001);
  const double expected = 0.85 / 2 * (1 - ssim) + 0.15 * 0.2;
  const Image map = photometric_error_map(a, b);
  for (double v : map.data()) CHECK(v == doctest::Approx(expected).epsilon(1e-12));

  const Image ra = random_image(8, 8, 1);
  const Image rb = random_image(8, 8, 2);
  const Image rmap = photometric_error_map(ra, rb);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) CHECK(rmap(x, y) == doctest::Approx(reference_pe(ra, rb, x, y)).epsilon(1e-12));

  // Identity warp: the loss is the mean of the map.
  const CameraIntrinsics k8{8.0, 8.0, 3.5, 3.5, 8, 8};
  const DepthField d(8, 8, 3.0);
  double mean = 0.0;
  for (double v : rmap.data()) mean += v / 64.0;
  CHECK(*photometric_loss(ra, {{&rb, PoseSE3::identity()}}, d, k8) == doctest::Approx(mean).epsilon(1e-12));
  CHECK(*photometric_loss(ra, {{&ra, PoseSE3::identity()}, {&ra, PoseSE3::identity()}}, d, k8) ==
        doctest::Approx(0.0));

  // A source that lands outside the image entirely leaves the other one.
  const PoseSE3 gone(Mat3::Identity(), {100.0, 0.0, 0.0});
  CHECK(*photometric_loss(ra, {{&rb, PoseSE3::identity()}, {&ra, gone}}, d, k8) ==
        doctest::Approx(mean).epsilon(1e-12));
  CHECK_FALSE(photometric_loss(ra, {{&ra, gone}}, d, k8));
}

TEST_CASE("edge-aware smoothness") {
  const Image flat(kCam.width, kCam.height, 0.5);
  CHECK(smoothness_loss(DepthField(kCam.width, kCam.height, 7.0), flat) == doctest::Approx(0.0));
  Grid<double> ramp(kCam.width, kCam.height);
  const double slope = 0.05;
  double mean = 0.0;
  for (int y = 0; y < kCam.height; ++y)
    for (int x = 0; x < kCam.width; ++x) {
      ramp(x, y) = 4.0 + slope * x;
      mean += ramp(x, y) / static_cast<double>(ramp.size());
    }
  const DepthField r = DepthField::from_depths(ramp);
  const double plain = smoothness_loss(r, flat);
  CHECK(plain == doctest::Approx(slope / mean).epsilon(1e-10));
  Image edged = flat;
  for (int y = 0; y < kCam.height; ++y)
    for (int x = kCam.width / 2; x < kCam.width; ++x) edged(x, y) = 1.0;
  CHECK(smoothness_loss(r, edged) < plain);
}

TEST_CASE("weighted total") {
  LossBreakdown zero;
  CHECK(total_loss(zero, {}).total == 0.0);
  LossBreakdown c;
  c.photometric = 0.1;
  c.smoothness = 2.0;
  c.consistency = 0.3;
  c.transfer_c_k1 = 0.1;
  c.transfer_c_k2 = 0.2;
  c.transfer_k1_k2 = 0.3;
  c.photometric_present = c.consistency_present = c.transfer_present = true;
  CHECK(total_loss(c, {}).total == doctest::Approx(1.002).epsilon(1e-14));
  const LossWeights w;
  CHECK(w.alpha == 1.0);
  CHECK(w.beta == 0.001);
  CHECK(w.gamma == 1.0);
  CHECK(w.mu == 1.0);
  CHECK_THROWS_AS(total_loss(c, {1.0, -0.1, 1.0, 1.0}), Error);
  // Linear in each weight with the components held fixed.
  const double base = total_loss(c, {}).total;
  CHECK(total_loss(c, {3.0, 0.001, 1.0, 1.0}).total - base == doctest::Approx(2.0 * c.photometric));
  CHECK(total_loss(c, {1.0, 0.001, 1.0, 2.5}).total - base == doctest::Approx(1.5 * 0.6));
}

TEST_CASE("photometric floor on a wall without depth edges") {
  SceneConfig wall = test::small_planar_scene(48, 36, 31);
  wall.surfaces.pop_back();
  const SceneSequence seq = generate_scene(wall);
  const TrackingResult t = test::ground_truth_tracking(seq, 5, 3);
  const auto truth = test::gt_fields(seq);
  for (const auto& kf : t.graph.keyframes()) {
    const LossBreakdown b = evaluate_triple(keyframe_problem(seq, t, truth, kf.id), {}, false).breakdown;
    CHECK(b.photometric_present);
    CHECK(b.photometric < 1e-3);
  }
}

TEST_CASE("losses on a rendered triple") {
  const SceneSequence seq = generate_scene(test::small_planar_scene(48, 36, 31));
  const TrackingResult t = test::ground_truth_tracking(seq, 5, 3);
  const auto truth = test::gt_fields(seq);
  const int c = 3;
  REQUIRE(t.graph.wide_neighbors(c));

  SUBCASE("zero at the truth") {
    const TripleProblem p = keyframe_problem(seq, t, truth, c);
    REQUIRE(!p.common.empty());
    const LossBreakdown b = evaluate_triple(p, {}, false).breakdown;
    CHECK(b.consistency < 1e-10);
    CHECK(b.transfer_c_k1 < 1e-10);
    CHECK(b.transfer_c_k2 < 1e-10);
    CHECK(b.transfer_k1_k2 < 1e-10);
    // Occluding billboard edges keep the photometric term above the floor here.
    CHECK(b.photometric < 0.05);
    CHECK(b.consistency_present);
    CHECK(b.transfer_present);
  }

  SUBCASE("analytic gradient matches central differences") {
    std::vector<DepthField> fields;
    for (std::size_t i = 0; i < truth.size(); ++i)
      fields.push_back(corrupt_depth(truth[i], {0.1, 0.0, 12}, seq.d_max_gt, i));
    const TripleProblem p = keyframe_problem(seq, t, fields, c);
    const LossEvaluation e = evaluate_triple(p, {}, true);
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::size_t> pick(0, fields[0].size() - 1);
    std::uniform_int_distribution<int> which(0, 2);
    int agree = 0;
    const int probes = 60;
    for (int i = 0; i < probes; ++i) {
      const int role = which(rng);
      DepthField* f = const_cast<DepthField*>(role == 0 ? p.d_c : (role == 1 ? p.d_k1 : p.d_k2));
      const Grid<double>& g = role == 0 ? e.gradient.c : (role == 1 ? e.gradient.k1 : e.gradient.k2);
      const std::size_t idx = pick(rng);
      const double h = 1e-5;
      const double base = f->log_depth_at(idx);
      f->set_log_depth_at(idx, base + h);
      const double up = evaluate_triple(p, {}, false).breakdown.total;
      f->set_log_depth_at(idx, base - h);
      const double down = evaluate_triple(p, {}, false).breakdown.total;
      f->set_log_depth_at(idx, base);
      const double fd = (up - down) / (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(g[idx]), 1e-8});
      if (std::abs(fd - g[idx]) / scale <= 1e-4) ++agree;
    }
    CHECK(agree >= probes - 1);
  }

  SUBCASE("doubling mu doubles the transfer part of the gradient") {
    std::vector<DepthField> fields;
    for (std::size_t i = 0; i < truth.size(); ++i)
      fields.push_back(corrupt_depth(truth[i], {0.1, 0.0, 13}, seq.d_max_gt, i));
    const TripleProblem p = keyframe_problem(seq, t, fields, c);
    const LossWeights none{0.0, 0.0, 0.0, 0.0};
    const LossWeights one{0.0, 0.0, 0.0, 1.0};
    const LossWeights two{0.0, 0.0, 0.0, 2.0};
    const Grid<double> g0 = total_loss_gradient(p, none).c;
    const Grid<double> g1 = total_loss_gradient(p, one).c;
    const Grid<double> g2 = total_loss_gradient(p, two).c;
    double biggest = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i) {
      CHECK(g0[i] == 0.0);
      CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-12));
      biggest = std::max(biggest, std::abs(g1[i]));
    }
    CHECK(biggest > 0.0);
  }
}

}  // TEST_SUITE
