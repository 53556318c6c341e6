#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vartex/grid.hpp"
#include "vartex/metrics.hpp"
#include "vartex/model.hpp"

namespace vartex {

/// Sample `t` of a series as a [V, H, W] tensor in its stored units.
Tensor sample_tensor(const GridSeries& series, std::size_t t);

/// Maps a standardized [C, H, W] forecast of the first C registry channels
/// back to physical units with the series statistics.
Tensor to_physical(const GridSeries& series, const Tensor& standardized);

/// Eval-mode full-grid forecast of a standardized [V, H, W] sample.
Tensor predict_global(Model& model, const Tensor& sample);

struct SplitForecast {
  Tensor field;                       // [V_out, H, W]
  std::vector<std::uint32_t> writes;  // [H, W], times each cell was written
};

/// Predicts each canonical crop on its own and stitches the crops back together.
SplitForecast predict_split(Model& model, const Tensor& sample, std::size_t split);

/// Forecast for the pair starting at sample `t`, in the stored units of the
/// series (standardized for prepared series); channels follow the registry.
using Forecaster = std::function<Tensor(std::size_t t)>;

Forecaster model_forecaster(Model& model, const GridSeries& series, std::size_t split = 1);
/// X_{t+lead} = X_t.
Forecaster persistence_forecaster(const GridSeries& series);
/// Returns the verifying truth itself.
Forecaster replay_forecaster(const GridSeries& series, std::size_t lead);
/// The time mean of the truths over [first + lead, last).
Forecaster climatology_forecaster(const GridSeries& series, std::size_t first, std::size_t last, std::size_t lead);

struct EvalRange {
  std::size_t first = 0;  // first input index
  std::size_t last = 0;   // one past the last verifying index
  std::size_t lead = 1;
};

/// Test split of `series` at the lead time `hours`.
EvalRange test_range(const GridSeries& series, std::int64_t hours);

/// Latitude-weighted RMSE and ACC per target after mapping forecasts and
/// truths to physical units, with the
/// climatology taken as the mean of the verifying truths. Rows follow
/// `targets` after reordering into U10, T2m, Z500, T850 order.
MetricReport evaluate(const GridSeries& series, const EvalRange& range, const Forecaster& forecaster,
                      const std::vector<std::string>& targets = default_targets());

/// Lat-MSE in stored units averaged over the forecast channels of every pair.
double mean_lat_mse(const GridSeries& series, const EvalRange& range, const Forecaster& forecaster);

struct MapPanel {
  std::string variable;
  std::string panel;  // initial, truth, prediction, bias
  std::string path;
};

/// Writes one CSV per target and panel: lat_deg,lon_deg,<key> [<units>].
std::vector<MapPanel> export_maps(const GridSeries& series, std::size_t t, std::size_t lead,
                                  const Forecaster& forecaster, const std::vector<std::string>& targets,
                                  const std::string& out_dir);

}  // namespace vartex
