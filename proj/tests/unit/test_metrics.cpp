#include <gtest/gtest.h>

#include "abhe/error.hpp"
#include "abhe/geometry.hpp"
#include "abhe/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace abhe;

using Pair = fixture::MetricPair;
using fixture::metric_pairs;

TEST(Metrics, MatchDirectFormulas) {
  for (const Pair& p : metric_pairs()) {
    const int64_t n = p.a.dim(0);
    const auto ov = oracle::overlap(oracle::values(p.a), oracle::values(p.b), n, n, p.h.m.data());
    EXPECT_NEAR(metrics::psnr(p.a, p.b, p.h), oracle::psnr(ov), 1e-6);
    EXPECT_NEAR(metrics::ssim(p.a, p.b, p.h), oracle::ssim(ov, n, n), 1e-6);
  }
}

TEST(Metrics, IdenticalPairIsPerfect) {
  const Pair p = metric_pairs()[1];
  EXPECT_DOUBLE_EQ(metrics::psnr(p.a, p.a, geometry::Homography()), metrics::kPsnrCap);
  EXPECT_NEAR(metrics::ssim(p.a, p.a, geometry::Homography()), 1.0, 1e-12);
}

TEST(Metrics, AcceptsBatchedLayouts) {
  const Pair p = metric_pairs()[0];
  const int64_t n = p.a.dim(0);
  const Tensor a4 = Tensor::from_vector({1, n, n, 1}, std::vector<float>(p.a.data().begin(), p.a.data().end()));
  const Tensor b3 = Tensor::from_vector({n, n, 1}, std::vector<float>(p.b.data().begin(), p.b.data().end()));
  EXPECT_DOUBLE_EQ(metrics::psnr(a4, b3, p.h), metrics::psnr(p.a, p.b, p.h));
  EXPECT_THROW(metrics::psnr(p.a, Tensor::zeros({n, n + 1}), p.h), ShapeError);
}

TEST(Metrics, NoOverlapThrows) {
  const Pair p = metric_pairs()[0];
  EXPECT_THROW(metrics::psnr(p.a, p.b, geometry::Homography::translation(500, 0)), NoOverlapError);
  EXPECT_THROW(metrics::ssim(p.a, p.b, geometry::Homography::translation(0, -500)), NoOverlapError);
}

TEST(Metrics, GaussianTapsAreNormalised) {
  const auto taps = metrics::gaussian_taps();
  ASSERT_EQ(taps.size(), 11u);
  double s = 0.0;
  for (double t : taps) s += t;
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(taps[0], taps[10]);
  EXPECT_GT(taps[5], taps[4]);
}

TEST(Metrics, WorseAlignmentScoresLower) {
  const Pair p = metric_pairs()[3];
  const double good = metrics::psnr(p.a, p.a, geometry::Homography::translation(0.0, 0.0));
  const double bad = metrics::psnr(p.a, p.a, geometry::Homography::translation(1.5, 0.5));
  EXPECT_GT(good, bad);
  EXPECT_GT(metrics::ssim(p.a, p.a, geometry::Homography()), metrics::ssim(p.a, p.a, geometry::Homography::translation(1.5, 0.5)));
}
