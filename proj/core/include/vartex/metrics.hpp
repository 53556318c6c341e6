#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vartex/grid.hpp"

namespace vartex {

/// cos(latitude) normalized to mean 1 over rows.
struct LatWeights {
  std::vector<double> weights;
  std::size_t size() const noexcept { return weights.size(); }
  double operator[](std::size_t i) const { return weights[i]; }
};

LatWeights latitude_weights(std::span<const double> latitudes_deg);

/// A stack of K fields on an H x W grid, row-major [K, H, W].
struct FieldStack {
  std::span<const double> data;
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Mean over the K planes of (1/HW) sum_h,w L(h) (pred - truth)^2.
double lat_mse(const FieldStack& pred, const FieldStack& truth, const LatWeights& weights);

/// Mean over the K planes of the square root of each plane's weighted MSE.
double lat_rmse(const FieldStack& pred, const FieldStack& truth, const LatWeights& weights);

/// Pooled weighted anomaly correlation over all K planes and cells.
/// `climatology` is one [H, W] field. Throws ZeroAnomalyVariance when either
/// anomaly field has zero weighted energy.
double lat_acc(const FieldStack& pred, const FieldStack& truth, std::span<const double> climatology,
               const LatWeights& weights);

/// Time mean of the truth fields, per variable, in physical units.
struct Climatology {
  std::size_t variables = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> mean;  // [V, H, W]

  std::span<const double> field(std::size_t variable) const {
    return std::span<const double>(mean).subspan(variable * height * width, height * width);
  }
};

Climatology climatology(const GridSeries& reference);
/// Time mean of a [K, H, W] stack.
std::vector<double> climatology(const FieldStack& fields);

struct MetricRow {
  std::string variable;
  std::string units;
  double acc = 0.0;
  double rmse = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::int64_t lead_time_hours = 0;
  std::size_t split = 1;
  std::size_t samples = 0;

  const MetricRow* find(const std::string& variable) const;
  std::string to_json() const;
  /// variable,units,acc,rmse
  std::string to_csv() const;
};

}  // namespace vartex
