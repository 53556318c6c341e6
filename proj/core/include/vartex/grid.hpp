#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vartex {

struct VariableSpec {
  std::string name;
  std::optional<int> level;  // hPa; empty for surface fields

  /// Short key used everywhere else: "T2m", "Z500", ...
  std::string key() const { return level ? name + std::to_string(*level) : name; }
  friend bool operator==(const VariableSpec&, const VariableSpec&) = default;
};

/// Ordered variable list; position is the channel index of every tensor.
class VariableRegistry {
 public:
  VariableRegistry() = default;
  explicit VariableRegistry(std::vector<VariableSpec> entries);

  /// The WeatherBench variable table: 5 surface fields followed by six
  /// atmospheric fields at 7 pressure levels each (47 channels).
  static VariableRegistry weatherbench();
  /// `count` channels of the WeatherBench table, always including the four
  /// forecast targets, kept in table order.
  static VariableRegistry weatherbench_subset(std::size_t count);

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<VariableSpec>& entries() const noexcept { return entries_; }
  const VariableSpec& operator[](std::size_t i) const { return entries_.at(i); }
  std::optional<std::size_t> index_of(const std::string& key) const;
  std::vector<std::string> keys() const;

  friend bool operator==(const VariableRegistry&, const VariableRegistry&) = default;

 private:
  std::vector<VariableSpec> entries_;
};

/// Physical units for a variable key ("m/s", "K", "m^2/s^2", ...).
std::string units_for(const std::string& key);

/// Forecast targets in report order.
const std::vector<std::string>& default_targets();

struct GridSample {
  std::vector<float> data;  // [V, H, W]
  std::int64_t timestamp = 0;  // hours since epoch
  friend bool operator==(const GridSample&, const GridSample&) = default;
};

/// Per-variable affine map between physical units and standardized values.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  static NormStats identity(std::size_t variables);
  double standardize(std::size_t variable, double physical) const {
    return (physical - mean[variable]) / stddev[variable];
  }
  double destandardize(std::size_t variable, double standardized) const {
    return standardized * stddev[variable] + mean[variable];
  }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

struct Region {
  std::size_t row_off = 0;
  std::size_t col_off = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  friend bool operator==(const Region&, const Region&) = default;
};

/// Time-ordered samples on a fixed latitude/longitude grid. `stats` maps
/// stored values back to physical units (identity for raw series).
struct GridSeries {
  VariableRegistry registry;
  NormStats stats;
  std::vector<double> latitudes;  // degrees, one per row
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<GridSample> samples;

  std::size_t variables() const noexcept { return registry.size(); }
  std::size_t steps() const noexcept { return samples.size(); }
  std::size_t sample_size() const noexcept { return variables() * height * width; }
  /// Hours between consecutive samples (0 for a single sample).
  std::int64_t step_hours() const;

  /// Throws on any broken invariant: shapes, non-finite values, timestamps,
  /// latitude monotonicity/range, stats arity.
  void validate() const;

  friend bool operator==(const GridSeries&, const GridSeries&) = default;
};

/// Evenly spaced cell-centre latitudes, south to north: -90 + (i + 0.5) * 180 / H.
std::vector<double> default_latitudes(std::size_t height);

/// Population mean/std per variable over all samples and cells.
NormStats fit_standardizer(const GridSeries& raw);
NormStats fit_standardizer(const GridSeries& raw, std::size_t first, std::size_t last);

/// Applies `stats` to a raw series; the result carries `stats`.
GridSeries standardize(const GridSeries& raw, const NormStats& stats);
/// Inverse of standardize(); the result carries identity stats.
GridSeries destandardize(const GridSeries& series);

/// Chronological train / validation / test boundaries (10:1:2 by count).
struct SplitRanges {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t total = 0;
};
SplitRanges split_ranges(std::size_t steps);

/// Lead time in samples; the series step must divide `hours`.
std::size_t lead_steps(const GridSeries& series, std::int64_t hours);

/// Non-overlapping (H/S) x (W/S) crops in row-major order of (row_off, col_off).
std::vector<Region> canonical_crops(std::size_t height, std::size_t width, std::size_t split,
                                    std::size_t patch = 1);
/// One (H/S) x (W/S) crop with patch-aligned offsets drawn uniformly.
Region random_crop(std::size_t height, std::size_t width, std::size_t split, std::size_t patch,
                   std::uint64_t seed);
/// Copies `region` out of a [V, H, W] field.
std::vector<float> crop_field(std::span<const float> field, std::size_t variables, std::size_t height,
                              std::size_t width, const Region& region);

struct SynthConfig {
  std::size_t variables = 47;
  std::size_t height = 32;
  std::size_t width = 64;
  std::size_t steps = 512;
  std::uint64_t seed = 0;
  std::int64_t step_hours = 1;
  std::int64_t start_hour = 0;
  double advection_speed = 1.0;  // multiplier on per-mode zonal speeds
  std::size_t modes = 3;
  std::vector<double> latitudes;  // empty: default_latitudes(height)
};

/// Raw (physical-unit) series of traveling zonal waves. Every dynamic channel
/// mixes the same few modes with its own amplitudes and phase offsets, so the
/// state at t + dt is a fixed function of the state at t.
GridSeries generate_synthetic(const SynthConfig& config);

/// Raw series -> standardized series with stats fit on the training split.
GridSeries prepare_series(const GridSeries& raw);

inline constexpr char kGridMagic[4] = {'V', 'T', 'X', 'G'};
inline constexpr std::uint8_t kGridVersion = 1;

void write_grid(const std::string& path, const GridSeries& series);
GridSeries read_grid(const std::string& path);

/// JSON document with dims, registry (keys, levels, units), stats and latitudes.
std::string sidecar_json(const GridSeries& series);

}  // namespace vartex
