#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vartex/error.hpp"
#include "vartex/inference.hpp"

using namespace vartex;
namespace fs = std::filesystem;

namespace {

ModelConfig eval_config() {
  ModelConfig c = fixture::tiny_config();
  c.variables = 6;
  return c;
}

}  // namespace

TEST(Predict, GlobalIsDeterministicAndShaped) {
  const ModelConfig c = fixture::tiny_config();
  Model m(c, 1);
  const Tensor x = oracle::random_tensor({4, 8, 8}, 1);
  const Tensor a = predict_global(m, x);
  EXPECT_EQ(a.shape(), (Shape{4, 8, 8}));
  EXPECT_EQ(a, predict_global(m, x));
  EXPECT_THROW(predict_global(m, Tensor({4, 8, 4})), Error);
}

TEST(Predict, SplitOneIsBitwiseGlobal) {
  Model m(fixture::tiny_config(), 2);
  const Tensor x = oracle::random_tensor({4, 8, 8}, 2);
  const SplitForecast s = predict_split(m, x, 1);
  EXPECT_EQ(s.field, predict_global(m, x));
  for (auto w : s.writes) EXPECT_EQ(w, 1u);
}

TEST(Predict, SplitWritesEveryCellOnce) {
  Model m(fixture::tiny_config(), 2);
  const Tensor x = oracle::random_tensor({4, 8, 8}, 3);
  for (std::size_t s : {2u, 4u}) {
    const SplitForecast f = predict_split(m, x, s);
    for (auto w : f.writes) EXPECT_EQ(w, 1u);
    EXPECT_TRUE(f.field.all_finite());
  }
  try {
    predict_split(m, x, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndivisibleGrid);
  }
}

TEST(Predict, TokenLocalModelSplitsExactly) {
  Model m(fixture::tiny_config(), 4);
  fixture::make_token_local(m);
  const Tensor x = oracle::random_tensor({4, 8, 8}, 4);
  const Tensor g = predict_global(m, x);
  const SplitForecast s = predict_split(m, x, 2);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(s.field[i], g[i], 1e-6);
  // The unmodified model does couple tokens, so the split differs.
  Model coupled(fixture::tiny_config(), 4);
  const Tensor gc = predict_global(coupled, x);
  const Tensor sc = predict_split(coupled, x, 2).field;
  double diff = 0.0;
  for (std::size_t i = 0; i < gc.size(); ++i) diff = std::max(diff, std::abs(gc[i] - sc[i]));
  EXPECT_GT(diff, 1e-9);
}

TEST(Evaluate, ReplayIsPerfect) {
  const GridSeries s = fixture::series_for(eval_config(), 40);
  const EvalRange r = test_range(s, 2);
  EXPECT_EQ(r.first, split_ranges(40).val_end);
  const MetricReport rep = evaluate(s, r, replay_forecaster(s, r.lead));
  ASSERT_EQ(rep.rows.size(), 4u);
  const char* order[] = {"U10", "T2m", "Z500", "T850"};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rep.rows[i].variable, order[i]);
    EXPECT_NEAR(rep.rows[i].acc, 1.0, 1e-12);
    EXPECT_EQ(rep.rows[i].rmse, 0.0);
  }
  EXPECT_EQ(rep.lead_time_hours, 2);
  EXPECT_EQ(rep.samples, r.last - r.first - r.lead);
}

TEST(Evaluate, RowsFollowReportOrderWhateverTheRequest) {
  const GridSeries s = fixture::series_for(eval_config(), 40);
  const MetricReport rep = evaluate(s, test_range(s, 1), persistence_forecaster(s), {"T850", "U10"});
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(rep.rows[0].variable, "U10");
  EXPECT_EQ(rep.rows[1].variable, "T850");
  EXPECT_THROW(evaluate(s, test_range(s, 1), persistence_forecaster(s), {"Q925"}), Error);
}

TEST(Evaluate, ClimatologyForecastHasNoAnomaly) {
  const GridSeries s = fixture::series_for(eval_config(), 40);
  const EvalRange r = test_range(s, 1);
  try {
    evaluate(s, r, climatology_forecaster(s, r.first, r.last, r.lead));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroAnomalyVariance);
  }
  // Its RMSE is the weighted norm of the truth anomalies.
  const std::size_t hw = s.height * s.width, k = r.last - r.first - r.lead;
  const std::size_t c = *s.registry.index_of("T2m");
  std::vector<double> truth;
  for (std::size_t t = r.first + r.lead; t < r.last; ++t) {
    for (std::size_t i = 0; i < hw; ++i) truth.push_back(s.stats.destandardize(c, s.samples[t].data[c * hw + i]));
  }
  std::vector<double> clim(hw, 0.0);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t i = 0; i < hw; ++i) clim[i] += truth[a * hw + i] / static_cast<double>(k);
  const auto L = oracle::lat_weights(s.latitudes);
  double expected = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    double e = 0.0;
    for (std::size_t i = 0; i < hw; ++i) e += L[i / s.width] * std::pow(truth[a * hw + i] - clim[i], 2);
    expected += std::sqrt(e / static_cast<double>(hw));
  }
  expected /= static_cast<double>(k);
  const Tensor f = to_physical(s, climatology_forecaster(s, r.first, r.last, r.lead)(r.first));
  std::vector<double> pred;
  for (std::size_t a = 0; a < k; ++a) pred.insert(pred.end(), f.data() + c * hw, f.data() + (c + 1) * hw);
  EXPECT_NEAR(oracle::rmse(pred, truth, k, s.height, s.width, L), expected, 1e-8 * (1 + expected));
}

TEST(Evaluate, RandomModelMatchesBruteForce) {
  const ModelConfig cfg = eval_config();
  const GridSeries s = fixture::series_for(cfg, 40);
  Model m(cfg, 8);
  const EvalRange r = test_range(s, 2);
  const MetricReport rep = evaluate(s, r, model_forecaster(m, s));
  const std::size_t hw = s.height * s.width, k = r.last - r.first - r.lead;
  const auto L = oracle::lat_weights(s.latitudes);
  for (const MetricRow& row : rep.rows) {
    const std::size_t c = *s.registry.index_of(row.variable);
    std::vector<double> pred, truth;
    for (std::size_t t = r.first; t + r.lead < r.last; ++t) {
      Tensor x({cfg.variables, s.height, s.width});
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = s.samples[t].data[i];
      const Tensor y = m.predict(x, Region{0, 0, s.height, s.width});
      for (std::size_t i = 0; i < hw; ++i) {
        pred.push_back(s.stats.destandardize(c, y[c * hw + i]));
        truth.push_back(s.stats.destandardize(c, s.samples[t + r.lead].data[c * hw + i]));
      }
    }
    std::vector<double> clim(hw, 0.0);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t i = 0; i < hw; ++i) clim[i] += truth[a * hw + i] / static_cast<double>(k);
    const double rmse = oracle::rmse(pred, truth, k, s.height, s.width, L);
    EXPECT_NEAR(row.rmse, rmse, 1e-8 * (1 + rmse)) << row.variable;
    EXPECT_NEAR(row.acc, oracle::acc(pred, truth, clim, k, s.height, s.width, L), 1e-8) << row.variable;
    EXPECT_EQ(row.units, units_for(row.variable));
  }
}

TEST(Evaluate, PooledAccIsOrderInvariant) {
  Rng rng(3);
  const std::size_t k = 6, h = 4, w = 5, hw = h * w;
  const auto p = oracle::random_vector(k * hw, 1), t = oracle::random_vector(k * hw, 2);
  const auto clim = oracle::random_vector(hw, 3);
  std::vector<double> pr, tr;
  for (std::size_t a = k; a-- > 0;) {
    pr.insert(pr.end(), p.begin() + static_cast<std::ptrdiff_t>(a * hw), p.begin() + static_cast<std::ptrdiff_t>((a + 1) * hw));
    tr.insert(tr.end(), t.begin() + static_cast<std::ptrdiff_t>(a * hw), t.begin() + static_cast<std::ptrdiff_t>((a + 1) * hw));
  }
  const LatWeights L = latitude_weights(default_latitudes(h));
  EXPECT_NEAR(lat_acc({p, k, h, w}, {t, k, h, w}, clim, L), lat_acc({pr, k, h, w}, {tr, k, h, w}, clim, L), 1e-12);
}

TEST(Evaluate, MeanLatMseOfPersistence) {
  const GridSeries s = fixture::series_for(eval_config(), 40);
  const EvalRange r = test_range(s, 1);
  const double got = mean_lat_mse(s, r, persistence_forecaster(s));
  const auto L = oracle::lat_weights(s.latitudes);
  const std::size_t n = s.sample_size();
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t t = r.first; t + r.lead < r.last; ++t, ++pairs) {
    std::vector<double> a(s.samples[t].data.begin(), s.samples[t].data.end());
    std::vector<double> b(s.samples[t + 1].data.begin(), s.samples[t + 1].data.end());
    total += oracle::mse(a, b, n / (s.height * s.width), s.height, s.width, L);
  }
  EXPECT_NEAR(got, total / static_cast<double>(pairs), 1e-12);
  EXPECT_EQ(mean_lat_mse(s, r, replay_forecaster(s, r.lead)), 0.0);
}

TEST(Export, FourPanelsPerTargetWithZeroBiasForReplay) {
  const GridSeries s = fixture::series_for(eval_config(), 40);
  const fs::path dir = fs::temp_directory_path() / "vartex_maps_test";
  fs::remove_all(dir);
  const auto panels = export_maps(s, 5, 2, replay_forecaster(s, 2), default_targets(), dir.string());
  EXPECT_EQ(panels.size(), 16u);
  std::ifstream bias(dir / "T2m_bias.csv");
  std::string header, line;
  std::getline(bias, header);
  EXPECT_EQ(header, "lat_deg,lon_deg,T2m_bias [K]");
  std::size_t rows = 0;
  while (std::getline(bias, line)) {
    EXPECT_EQ(std::stod(line.substr(line.rfind(',') + 1)), 0.0);
    ++rows;
  }
  EXPECT_EQ(rows, s.height * s.width);
  try {
    export_maps(s, 38, 2, replay_forecaster(s, 2), default_targets(), dir.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("0..37"), std::string::npos);
  }
  fs::remove_all(dir);
}
