#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "vartex/error.hpp"
#include "vartex/grid.hpp"
#include "vartex/metrics.hpp"

using namespace vartex;

namespace {

struct Stacks {
  std::size_t k, h, w;
  std::vector<double> pred, truth, clim, lat;
  FieldStack p() const { return {pred, k, h, w}; }
  FieldStack t() const { return {truth, k, h, w}; }
};

Stacks random_stacks(std::uint64_t seed) {
  Rng rng(seed);
  Stacks s{2 + rng.below(4), 3 + rng.below(6), 4 + rng.below(8), {}, {}, {}, {}};
  s.pred = oracle::random_vector(s.k * s.h * s.w, seed * 3 + 1, -5, 5);
  s.truth = oracle::random_vector(s.k * s.h * s.w, seed * 3 + 2, -5, 5);
  s.clim = oracle::random_vector(s.h * s.w, seed * 3 + 3, -1, 1);
  s.lat = default_latitudes(s.h);
  return s;
}

}  // namespace

TEST(Metrics, LatitudeWeightsHaveUnitMean) {
  for (std::size_t h : {1u, 2u, 7u, 32u, 128u}) {
    const LatWeights L = latitude_weights(default_latitudes(h));
    double sum = 0.0;
    for (double x : L.weights) sum += x;
    EXPECT_NEAR(sum / static_cast<double>(h), 1.0, 1e-15);
    const auto ref = oracle::lat_weights(default_latitudes(h));
    for (std::size_t i = 0; i < h; ++i) EXPECT_NEAR(L[i], ref[i], 1e-14);
  }
  EXPECT_THROW(latitude_weights({}), Error);
}

TEST(Metrics, MatchBruteForceOracles) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Stacks s = random_stacks(seed);
    const LatWeights L = latitude_weights(s.lat);
    const auto ref_L = oracle::lat_weights(s.lat);
    EXPECT_NEAR(lat_mse(s.p(), s.t(), L), oracle::mse(s.pred, s.truth, s.k, s.h, s.w, ref_L), 1e-8);
    EXPECT_NEAR(lat_rmse(s.p(), s.t(), L), oracle::rmse(s.pred, s.truth, s.k, s.h, s.w, ref_L), 1e-8);
    EXPECT_NEAR(lat_acc(s.p(), s.t(), s.clim, L), oracle::acc(s.pred, s.truth, s.clim, s.k, s.h, s.w, ref_L), 1e-8);
  }
}

TEST(Metrics, AccExtremesAndScaleInvariance) {
  const Stacks s = random_stacks(77);
  const LatWeights L = latitude_weights(s.lat);
  EXPECT_NEAR(lat_acc(s.t(), s.t(), s.clim, L), 1.0, 1e-12);
  const std::size_t hw = s.h * s.w;
  std::vector<double> anti(s.truth.size()), scaled(s.pred.size());
  for (std::size_t i = 0; i < anti.size(); ++i) {
    anti[i] = 2 * s.clim[i % hw] - s.truth[i];
    scaled[i] = s.clim[i % hw] + 3.7 * (s.pred[i] - s.clim[i % hw]);
  }
  EXPECT_NEAR(lat_acc({anti, s.k, s.h, s.w}, s.t(), s.clim, L), -1.0, 1e-12);
  EXPECT_NEAR(lat_acc({scaled, s.k, s.h, s.w}, s.t(), s.clim, L), lat_acc(s.p(), s.t(), s.clim, L), 1e-10);
}

TEST(Metrics, PerfectForecastHasZeroError) {
  const Stacks s = random_stacks(5);
  const LatWeights L = latitude_weights(s.lat);
  EXPECT_EQ(lat_mse(s.t(), s.t(), L), 0.0);
  EXPECT_EQ(lat_rmse(s.t(), s.t(), L), 0.0);
}

TEST(Metrics, RmseTakesRootPerSample) {
  // Two planes with MSE 1 and 9: mean of roots 2, root of mean sqrt(5).
  std::vector<double> zero(2 * 2 * 2, 0.0), truth{1, 1, 1, 1, 3, 3, 3, 3};
  const LatWeights L = latitude_weights(std::vector<double>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(lat_rmse({zero, 2, 2, 2}, {truth, 2, 2, 2}, L), 2.0);
  EXPECT_DOUBLE_EQ(lat_mse({zero, 2, 2, 2}, {truth, 2, 2, 2}, L), 5.0);
}

TEST(Metrics, DegenerateAnomaliesRaise) {
  const Stacks s = random_stacks(8);
  const LatWeights L = latitude_weights(s.lat);
  std::vector<double> flat(s.pred.size());
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = s.clim[i % (s.h * s.w)];
  try {
    lat_acc({flat, s.k, s.h, s.w}, s.t(), s.clim, L);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroAnomalyVariance);
  }
  EXPECT_THROW(lat_acc(s.p(), {flat, s.k, s.h, s.w}, s.clim, L), Error);
}

TEST(Metrics, ShapeChecks) {
  const Stacks s = random_stacks(9);
  const LatWeights wrong = latitude_weights(default_latitudes(s.h + 1));
  EXPECT_THROW(lat_mse(s.p(), s.t(), wrong), Error);
}

TEST(Metrics, ClimatologyIsTimeMean) {
  const Stacks s = random_stacks(10);
  const auto c = climatology(s.t());
  const std::size_t hw = s.h * s.w;
  for (std::size_t i = 0; i < hw; ++i) {
    double m = 0.0;
    for (std::size_t k = 0; k < s.k; ++k) m += s.truth[k * hw + i];
    EXPECT_NEAR(c[i], m / static_cast<double>(s.k), 1e-12);
  }
  const std::vector<double> one(s.truth.begin(), s.truth.begin() + static_cast<std::ptrdiff_t>(hw));
  EXPECT_EQ(climatology(FieldStack{one, 1, s.h, s.w}), one);
}

TEST(Metrics, ReportSerialization) {
  MetricReport r;
  r.rows = {{"U10", "m/s", 0.5, 1.25}, {"T2m", "K", 0.75, 2.0}};
  r.lead_time_hours = 6;
  r.samples = 3;
  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "variable,units,acc,rmse");
  EXPECT_NE(csv.find("U10,m/s,"), std::string::npos);
  EXPECT_NE(r.to_json().find("\"T2m\""), std::string::npos);
  ASSERT_NE(r.find("T2m"), nullptr);
  EXPECT_EQ(r.find("Z500"), nullptr);
}
