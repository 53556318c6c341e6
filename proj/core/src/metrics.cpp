#include "vartex/metrics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "vartex/error.hpp"

namespace vartex {

LatWeights latitude_weights(std::span<const double> latitudes_deg) {
  require(!latitudes_deg.empty(), ErrorCode::EmptyLatitudes, "latitude list is empty");
  LatWeights out;
  out.weights.resize(latitudes_deg.size());
  double total = 0.0;
  for (std::size_t i = 0; i < latitudes_deg.size(); ++i) {
    const double lat = latitudes_deg[i];
    require(std::abs(lat) <= 90.0, ErrorCode::InvalidArgument, "latitude " + std::to_string(lat) + " outside [-90, 90]");
    out.weights[i] = std::cos(lat * (std::numbers::pi / 180.0));
    total += out.weights[i];
  }
  const double mean = total / static_cast<double>(latitudes_deg.size());
  require(mean > 0.0, ErrorCode::InvalidArgument, "all latitudes are at the poles");
  for (double& w : out.weights) w /= mean;
  return out;
}

namespace {

void check_pair(const FieldStack& a, const FieldStack& b, const LatWeights& weights) {
  require(a.count == b.count && a.height == b.height && a.width == b.width, ErrorCode::ShapeMismatch,
          "prediction and truth stacks differ in shape");
  require(a.data.size() == a.count * a.height * a.width && b.data.size() == a.data.size(), ErrorCode::ShapeMismatch,
          "field stack data does not match its declared shape");
  require(weights.size() == a.height, ErrorCode::ShapeMismatch,
          std::to_string(weights.size()) + " latitude weights for " + std::to_string(a.height) + " rows");
  require(a.count >= 1, ErrorCode::EmptySeries, "metric over zero samples");
}

double plane_mse(const FieldStack& pred, const FieldStack& truth, const LatWeights& weights, std::size_t k) {
  const std::size_t hw = pred.height * pred.width;
  double total = 0.0;
  for (std::size_t h = 0; h < pred.height; ++h) {
    double row = 0.0;
    for (std::size_t w = 0; w < pred.width; ++w) {
      const std::size_t i = k * hw + h * pred.width + w;
      const double e = pred.data[i] - truth.data[i];
      row += e * e;
    }
    total += weights[h] * row;
  }
  return total / static_cast<double>(hw);
}

}  // namespace

double lat_mse(const FieldStack& pred, const FieldStack& truth, const LatWeights& weights) {
  check_pair(pred, truth, weights);
  double total = 0.0;
  for (std::size_t k = 0; k < pred.count; ++k) total += plane_mse(pred, truth, weights, k);
  return total / static_cast<double>(pred.count);
}

double lat_rmse(const FieldStack& pred, const FieldStack& truth, const LatWeights& weights) {
  check_pair(pred, truth, weights);
  double total = 0.0;
  for (std::size_t k = 0; k < pred.count; ++k) total += std::sqrt(plane_mse(pred, truth, weights, k));
  return total / static_cast<double>(pred.count);
}

double lat_acc(const FieldStack& pred, const FieldStack& truth, std::span<const double> clim, const LatWeights& weights) {
  check_pair(pred, truth, weights);
  const std::size_t hw = pred.height * pred.width;
  require(clim.size() == hw, ErrorCode::ShapeMismatch, "climatology must be one [H, W] field");
  double cross = 0.0, pp = 0.0, tt = 0.0, p_energy = 0.0, t_energy = 0.0;
  for (std::size_t k = 0; k < pred.count; ++k)
    for (std::size_t h = 0; h < pred.height; ++h)
      for (std::size_t w = 0; w < pred.width; ++w) {
        const std::size_t c = h * pred.width + w;
        const double pa = pred.data[k * hw + c] - clim[c];
        const double ta = truth.data[k * hw + c] - clim[c];
        cross += weights[h] * pa * ta;
        pp += weights[h] * pa * pa;
        tt += weights[h] * ta * ta;
        p_energy += weights[h] * pred.data[k * hw + c] * pred.data[k * hw + c];
        t_energy += weights[h] * truth.data[k * hw + c] * truth.data[k * hw + c];
      }
  // Anomalies at rounding level relative to the fields count as zero.
  constexpr double kRoundoff = 1e-24;
  require(pp > kRoundoff * p_energy, ErrorCode::ZeroAnomalyVariance, "forecast anomalies are identically zero");
  require(tt > kRoundoff * t_energy, ErrorCode::ZeroAnomalyVariance, "truth anomalies are identically zero");
  return cross / std::sqrt(pp * tt);
}

Climatology climatology(const GridSeries& reference) {
  require(reference.steps() >= 1, ErrorCode::EmptySeries, "climatology of an empty series");
  Climatology c{reference.variables(), reference.height, reference.width, {}};
  const std::size_t hw = reference.height * reference.width;
  c.mean.assign(reference.sample_size(), 0.0);
  for (const GridSample& s : reference.samples)
    for (std::size_t v = 0; v < c.variables; ++v)
      for (std::size_t i = 0; i < hw; ++i) c.mean[v * hw + i] += reference.stats.destandardize(v, s.data[v * hw + i]);
  for (double& m : c.mean) m /= static_cast<double>(reference.steps());
  return c;
}

std::vector<double> climatology(const FieldStack& fields) {
  require(fields.count >= 1, ErrorCode::EmptySeries, "climatology of an empty stack");
  const std::size_t hw = fields.height * fields.width;
  std::vector<double> mean(hw, 0.0);
  for (std::size_t k = 0; k < fields.count; ++k)
    for (std::size_t i = 0; i < hw; ++i) mean[i] += fields.data[k * hw + i];
  for (double& m : mean) m /= static_cast<double>(fields.count);
  return mean;
}

const MetricRow* MetricReport::find(const std::string& variable) const {
  for (const MetricRow& r : rows)
    if (r.variable == variable) return &r;
  return nullptr;
}

std::string MetricReport::to_json() const {
  nlohmann::json j{{"lead_time_hours", lead_time_hours}, {"split", split}, {"samples", samples}};
  j["rows"] = nlohmann::json::array();
  for (const MetricRow& r : rows)
    j["rows"].push_back({{"variable", r.variable}, {"units", r.units}, {"acc", r.acc}, {"rmse", r.rmse}});
  return j.dump(2);
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "variable,units,acc,rmse\n";
  for (const MetricRow& r : rows) out << r.variable << ',' << r.units << ',' << r.acc << ',' << r.rmse << '\n';
  return out.str();
}

}  // namespace vartex
