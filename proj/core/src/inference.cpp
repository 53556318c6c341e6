#include "vartex/inference.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>

#include "vartex/error.hpp"

namespace vartex {

Tensor sample_tensor(const GridSeries& series, std::size_t t) {
  require(t < series.steps(), ErrorCode::InvalidArgument,
          "time index " + std::to_string(t) + " outside [0, " + std::to_string(series.steps()) + ")");
  Tensor out({series.variables(), series.height, series.width});
  const std::vector<float>& d = series.samples[t].data;
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = d[i];
  return out;
}

Tensor to_physical(const GridSeries& series, const Tensor& standardized) {
  require(standardized.rank() == 3 && standardized.dim(0) <= series.variables() &&
              standardized.dim(1) == series.height && standardized.dim(2) == series.width,
          ErrorCode::ShapeMismatch, "forecast " + shape_str(standardized.shape()) + " does not fit the series grid");
  Tensor out = standardized;
  const std::size_t hw = series.height * series.width;
  for (std::size_t c = 0; c < out.dim(0); ++c) {
    for (std::size_t i = 0; i < hw; ++i) out[c * hw + i] = series.stats.destandardize(c, out[c * hw + i]);
  }
  return out;
}

Tensor predict_global(Model& model, const Tensor& sample) {
  const ModelConfig& cfg = model.config();
  require(sample.rank() == 3 && sample.dim(0) == cfg.variables && sample.dim(1) == cfg.image_height &&
              sample.dim(2) == cfg.image_width,
          ErrorCode::ShapeMismatch,
          "sample " + shape_str(sample.shape()) + " does not match the model grid " +
              shape_str({cfg.variables, cfg.image_height, cfg.image_width}));
  return model.predict(sample, Region{0, 0, cfg.image_height, cfg.image_width});
}

SplitForecast predict_split(Model& model, const Tensor& sample, std::size_t split) {
  const ModelConfig& cfg = model.config();
  const std::size_t height = cfg.image_height;
  const std::size_t width = cfg.image_width;
  require(sample.rank() == 3 && sample.dim(0) == cfg.variables && sample.dim(1) == height && sample.dim(2) == width,
          ErrorCode::ShapeMismatch,
          "sample " + shape_str(sample.shape()) + " does not match the model grid " +
              shape_str({cfg.variables, height, width}));
  const std::vector<Region> crops = canonical_crops(height, width, split, cfg.patch);
  const std::size_t v = cfg.variables;
  const std::size_t vo = cfg.out_variables();
  SplitForecast out{Tensor({vo, height, width}), std::vector<std::uint32_t>(height * width, 0)};
  for (const Region& r : crops) {
    Tensor crop({v, r.height, r.width});
    for (std::size_t c = 0; c < v; ++c) {
      for (std::size_t i = 0; i < r.height; ++i) {
        std::copy_n(sample.data() + (c * height + r.row_off + i) * width + r.col_off, r.width,
                    crop.data() + (c * r.height + i) * r.width);
      }
    }
    const Tensor pred = model.predict(crop, r);
    for (std::size_t c = 0; c < vo; ++c) {
      for (std::size_t i = 0; i < r.height; ++i) {
        std::copy_n(pred.data() + (c * r.height + i) * r.width, r.width,
                    out.field.data() + (c * height + r.row_off + i) * width + r.col_off);
      }
    }
    for (std::size_t i = 0; i < r.height; ++i) {
      for (std::size_t j = 0; j < r.width; ++j) ++out.writes[(r.row_off + i) * width + r.col_off + j];
    }
  }
  return out;
}

Forecaster model_forecaster(Model& model, const GridSeries& series, std::size_t split) {
  return [&model, &series, split](std::size_t t) {
    const Tensor sample = sample_tensor(series, t);
    return split == 1 ? predict_global(model, sample) : predict_split(model, sample, split).field;
  };
}

Forecaster persistence_forecaster(const GridSeries& series) {
  return [&series](std::size_t t) { return sample_tensor(series, t); };
}

Forecaster replay_forecaster(const GridSeries& series, std::size_t lead) {
  return [&series, lead](std::size_t t) { return sample_tensor(series, t + lead); };
}

Forecaster climatology_forecaster(const GridSeries& series, std::size_t first, std::size_t last, std::size_t lead) {
  require(first + lead < last && last <= series.steps(), ErrorCode::EmptySeries, "no verifying samples for climatology");
  auto mean = std::make_shared<Tensor>(Shape{series.variables(), series.height, series.width});
  for (std::size_t t = first + lead; t < last; ++t) {
    const std::vector<float>& d = series.samples[t].data;
    for (std::size_t i = 0; i < d.size(); ++i) (*mean)[i] += d[i];
  }
  const double n = static_cast<double>(last - first - lead);
  for (double& x : mean->vec()) x /= n;
  return [mean](std::size_t) { return *mean; };
}

EvalRange test_range(const GridSeries& series, std::int64_t hours) {
  const SplitRanges split = split_ranges(series.steps());
  const std::size_t lead = lead_steps(series, hours);
  require(split.total - split.val_end > lead, ErrorCode::EmptySeries,
          "test split of " + std::to_string(split.total - split.val_end) + " samples has no pairs at lead " +
              std::to_string(lead));
  return {split.val_end, split.total, lead};
}

namespace {

std::vector<std::string> report_order(const std::vector<std::string>& targets) {
  std::vector<std::string> ordered;
  for (const std::string& key : default_targets()) {
    if (std::find(targets.begin(), targets.end(), key) != targets.end()) ordered.push_back(key);
  }
  for (const std::string& key : targets) {
    if (std::find(ordered.begin(), ordered.end(), key) == ordered.end()) ordered.push_back(key);
  }
  return ordered;
}

void check_range(const GridSeries& series, const EvalRange& range) {
  require(range.lead >= 1 && range.first + range.lead < range.last && range.last <= series.steps(),
          ErrorCode::EmptySeries,
          "evaluation range [" + std::to_string(range.first) + ", " + std::to_string(range.last) + ") at lead " +
              std::to_string(range.lead) + " has no pairs");
}

Tensor checked_forecast(const GridSeries& series, const Forecaster& forecaster, std::size_t t) {
  Tensor f = forecaster(t);
  require(f.rank() == 3 && f.dim(0) >= 1 && f.dim(0) <= series.variables() && f.dim(1) == series.height &&
              f.dim(2) == series.width,
          ErrorCode::ShapeMismatch, "forecast " + shape_str(f.shape()) + " does not fit the series grid");
  return f;
}

}  // namespace

MetricReport evaluate(const GridSeries& series, const EvalRange& range, const Forecaster& forecaster,
                      const std::vector<std::string>& targets) {
  check_range(series, range);
  const std::vector<std::string> keys = report_order(targets);
  std::vector<std::size_t> channels;
  for (const std::string& key : keys) {
    const auto idx = series.registry.index_of(key);
    require(idx.has_value(), ErrorCode::InvalidArgument, "target '" + key + "' is not in the series registry");
    channels.push_back(*idx);
  }
  const std::size_t hw = series.height * series.width;
  const std::size_t pairs = range.last - range.first - range.lead;
  std::vector<std::vector<double>> pred(keys.size()), truth(keys.size());
  for (auto& p : pred) p.reserve(pairs * hw);
  for (auto& p : truth) p.reserve(pairs * hw);
  for (std::size_t t = range.first; t + range.lead < range.last; ++t) {
    const Tensor f = to_physical(series, checked_forecast(series, forecaster, t));
    const Tensor y = to_physical(series, sample_tensor(series, t + range.lead));
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const std::size_t c = channels[k];
      require(c < f.dim(0), ErrorCode::VariableCountMismatch,
              "forecast has no channel for target '" + keys[k] + "'");
      pred[k].insert(pred[k].end(), f.data() + c * hw, f.data() + (c + 1) * hw);
      truth[k].insert(truth[k].end(), y.data() + c * hw, y.data() + (c + 1) * hw);
    }
  }
  const LatWeights weights = latitude_weights(series.latitudes);
  MetricReport report;
  report.lead_time_hours = static_cast<std::int64_t>(range.lead) * series.step_hours();
  report.samples = pairs;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const FieldStack ps{pred[k], pairs, series.height, series.width};
    const FieldStack ts{truth[k], pairs, series.height, series.width};
    const std::vector<double> clim = climatology(ts);
    MetricRow row;
    row.variable = keys[k];
    row.units = units_for(keys[k]);
    row.rmse = lat_rmse(ps, ts, weights);
    row.acc = lat_acc(ps, ts, clim, weights);
    report.rows.push_back(row);
  }
  return report;
}

double mean_lat_mse(const GridSeries& series, const EvalRange& range, const Forecaster& forecaster) {
  check_range(series, range);
  const LatWeights weights = latitude_weights(series.latitudes);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t t = range.first; t + range.lead < range.last; ++t) {
    const Tensor f = checked_forecast(series, forecaster, t);
    const Tensor y = sample_tensor(series, t + range.lead);
    const std::size_t c = f.dim(0);
    const std::span<const double> truth(y.data(), c * series.height * series.width);
    total += lat_mse(FieldStack{f.span(), c, series.height, series.width},
                     FieldStack{truth, c, series.height, series.width}, weights);
    ++pairs;
  }
  return total / static_cast<double>(pairs);
}

std::vector<MapPanel> export_maps(const GridSeries& series, std::size_t t, std::size_t lead,
                                  const Forecaster& forecaster, const std::vector<std::string>& targets,
                                  const std::string& out_dir) {
  require(lead >= 1 && t + lead < series.steps(), ErrorCode::InvalidArgument,
          "time index " + std::to_string(t) + " is out of range; valid indices are 0.." +
              std::to_string(series.steps() > lead ? series.steps() - lead - 1 : 0) + " at lead " +
              std::to_string(lead));
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorCode::Io, "cannot create '" + out_dir + "': " + ec.message());
  const Tensor initial = to_physical(series, sample_tensor(series, t));
  const Tensor truth = to_physical(series, sample_tensor(series, t + lead));
  const Tensor pred = to_physical(series, checked_forecast(series, forecaster, t));
  const std::size_t hw = series.height * series.width;
  std::vector<MapPanel> panels;
  for (const std::string& key : report_order(targets)) {
    const auto idx = series.registry.index_of(key);
    require(idx.has_value(), ErrorCode::InvalidArgument, "target '" + key + "' is not in the series registry");
    const std::size_t c = *idx;
    require(c < pred.dim(0), ErrorCode::VariableCountMismatch, "forecast has no channel for target '" + key + "'");
    const std::string units = units_for(key);
    const std::pair<std::string, std::function<double(std::size_t)>> sources[] = {
        {"initial", [&](std::size_t i) { return initial[c * hw + i]; }},
        {"truth", [&](std::size_t i) { return truth[c * hw + i]; }},
        {"prediction", [&](std::size_t i) { return pred[c * hw + i]; }},
        {"bias", [&](std::size_t i) { return pred[c * hw + i] - truth[c * hw + i]; }},
    };
    for (const auto& [panel, value] : sources) {
      const std::string path = (std::filesystem::path(out_dir) / (key + "_" + panel + ".csv")).string();
      std::ofstream out(path, std::ios::trunc);
      require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
      out << "lat_deg,lon_deg," << key << "_" << panel << " [" << units << "]\n";
      out << std::setprecision(17);
      for (std::size_t i = 0; i < series.height; ++i) {
        for (std::size_t j = 0; j < series.width; ++j) {
          const double lon = 360.0 * static_cast<double>(j) / static_cast<double>(series.width);
          out << series.latitudes[i] << ',' << lon << ',' << value(i * series.width + j) << '\n';
        }
      }
      require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
      panels.push_back({key, panel, path});
    }
  }
  return panels;
}

}  // namespace vartex
