#include "vartex/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

#include "vartex/error.hpp"
#include "vartex/rng.hpp"

namespace vartex {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr int kLevels[] = {50, 250, 500, 600, 700, 850, 925};
constexpr const char* kSurface[] = {"LSM", "orography", "T2m", "U10", "V10"};
constexpr const char* kAtmospheric[] = {"Z", "U", "V", "T", "Q", "R"};

}  // namespace

VariableRegistry::VariableRegistry(std::vector<VariableSpec> entries) : entries_(std::move(entries)) {
  std::set<std::string> seen;
  for (const VariableSpec& e : entries_) {
    require(!e.name.empty(), ErrorCode::InvalidArgument, "variable with empty name");
    require(seen.insert(e.key()).second, ErrorCode::InvalidArgument, "duplicate variable '" + e.key() + "'");
  }
}

VariableRegistry VariableRegistry::weatherbench() {
  std::vector<VariableSpec> entries;
  for (const char* name : kSurface) entries.push_back({name, std::nullopt});
  for (const char* name : kAtmospheric)
    for (int level : kLevels) entries.push_back({name, level});
  return VariableRegistry(std::move(entries));
}

VariableRegistry VariableRegistry::weatherbench_subset(std::size_t count) {
  const VariableRegistry full = weatherbench();
  require(count >= 1 && count <= full.size(), ErrorCode::InvalidArgument,
          "variable count " + std::to_string(count) + " outside [1, " + std::to_string(full.size()) + "]");
  std::vector<bool> chosen(full.size(), false);
  std::size_t picked = 0;
  for (const std::string& key : default_targets()) {
    if (picked == count) break;
    chosen[*full.index_of(key)] = true;
    ++picked;
  }
  for (std::size_t i = 0; i < full.size() && picked < count; ++i) {
    if (!chosen[i]) {
      chosen[i] = true;
      ++picked;
    }
  }
  std::vector<VariableSpec> entries;
  for (std::size_t i = 0; i < full.size(); ++i)
    if (chosen[i]) entries.push_back(full[i]);
  return VariableRegistry(std::move(entries));
}

std::optional<std::size_t> VariableRegistry::index_of(const std::string& key) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].key() == key) return i;
  return std::nullopt;
}

std::vector<std::string> VariableRegistry::keys() const {
  std::vector<std::string> out;
  for (const VariableSpec& e : entries_) out.push_back(e.key());
  return out;
}

std::string units_for(const std::string& key) {
  if (key == "LSM") return "1";
  if (key == "orography") return "m";
  if (key == "T2m") return "K";
  if (key == "U10" || key == "V10") return "m/s";
  switch (key.empty() ? '\0' : key[0]) {
    case 'Z': return "m^2/s^2";
    case 'T': return "K";
    case 'U':
    case 'V': return "m/s";
    case 'Q': return "kg/kg";
    case 'R': return "%";
    default: return "1";
  }
}

const std::vector<std::string>& default_targets() {
  static const std::vector<std::string> targets{"U10", "T2m", "Z500", "T850"};
  return targets;
}

NormStats NormStats::identity(std::size_t variables) {
  return {std::vector<double>(variables, 0.0), std::vector<double>(variables, 1.0)};
}

std::int64_t GridSeries::step_hours() const {
  return samples.size() < 2 ? 0 : samples[1].timestamp - samples[0].timestamp;
}

void GridSeries::validate() const {
  const std::size_t v = variables();
  require(v >= 1, ErrorCode::InvalidArgument, "series has an empty registry");
  require(height >= 1 && width >= 1, ErrorCode::InvalidArgument, "series has empty grid dims");
  require(stats.mean.size() == v && stats.stddev.size() == v, ErrorCode::InvalidArgument,
          "stats cover " + std::to_string(stats.mean.size()) + " variables, registry has " + std::to_string(v));
  for (std::size_t i = 0; i < v; ++i)
    require(stats.stddev[i] > 0.0 && std::isfinite(stats.stddev[i]) && std::isfinite(stats.mean[i]),
            ErrorCode::InvalidArgument, "stats for '" + registry[i].key() + "' are not usable");
  require(latitudes.size() == height, ErrorCode::InvalidArgument,
          std::to_string(latitudes.size()) + " latitudes for " + std::to_string(height) + " rows");
  for (std::size_t r = 0; r < height; ++r) {
    require(std::abs(latitudes[r]) <= 90.0, ErrorCode::InvalidArgument,
            "latitude " + std::to_string(latitudes[r]) + " outside [-90, 90]");
  }
  if (height > 1) {
    const bool up = latitudes[1] > latitudes[0];
    for (std::size_t r = 1; r < height; ++r)
      require(up ? latitudes[r] > latitudes[r - 1] : latitudes[r] < latitudes[r - 1], ErrorCode::InvalidArgument,
              "latitudes are not strictly monotone at row " + std::to_string(r));
  }
  const std::int64_t step = step_hours();
  for (std::size_t t = 0; t < samples.size(); ++t) {
    require(samples[t].data.size() == sample_size(), ErrorCode::ShapeMismatch,
            "sample " + std::to_string(t) + " has " + std::to_string(samples[t].data.size()) + " values, expected " +
                std::to_string(sample_size()));
    for (float x : samples[t].data)
      require(std::isfinite(x), ErrorCode::NonFiniteInput, "sample " + std::to_string(t) + " contains NaN or Inf");
    if (t > 0) {
      require(step > 0 && samples[t].timestamp - samples[t - 1].timestamp == step, ErrorCode::InvalidArgument,
              "timestamps must increase with a constant step (breaks at sample " + std::to_string(t) + ")");
    }
  }
}

std::vector<double> default_latitudes(std::size_t height) {
  std::vector<double> lats(height);
  const double spacing = 180.0 / static_cast<double>(height);
  for (std::size_t i = 0; i < height; ++i) lats[i] = -90.0 + (static_cast<double>(i) + 0.5) * spacing;
  return lats;
}

NormStats fit_standardizer(const GridSeries& raw) { return fit_standardizer(raw, 0, raw.steps()); }

NormStats fit_standardizer(const GridSeries& raw, std::size_t first, std::size_t last) {
  require(last <= raw.steps() && first < last && last - first >= 2, ErrorCode::EmptySeries,
          "standardization needs at least 2 time steps, got " + std::to_string(last > first ? last - first : 0));
  const std::size_t v = raw.variables();
  const std::size_t cells = raw.height * raw.width;
  const double count = static_cast<double>((last - first) * cells);
  NormStats stats{std::vector<double>(v, 0.0), std::vector<double>(v, 0.0)};
  for (std::size_t c = 0; c < v; ++c) {
    double total = 0.0;
    for (std::size_t t = first; t < last; ++t) {
      const float* p = raw.samples[t].data.data() + c * cells;
      for (std::size_t i = 0; i < cells; ++i) total += raw.stats.destandardize(c, p[i]);
    }
    const double mean = total / count;
    double sq = 0.0;
    for (std::size_t t = first; t < last; ++t) {
      const float* p = raw.samples[t].data.data() + c * cells;
      for (std::size_t i = 0; i < cells; ++i) {
        const double d = raw.stats.destandardize(c, p[i]) - mean;
        sq += d * d;
      }
    }
    const double sd = std::sqrt(sq / count);
    require(sd >= 1e-12, ErrorCode::ConstantChannel, "variable '" + raw.registry[c].key() + "' is constant");
    stats.mean[c] = mean;
    stats.stddev[c] = sd;
  }
  return stats;
}

GridSeries standardize(const GridSeries& raw, const NormStats& stats) {
  GridSeries out = raw;
  out.stats = stats;
  const std::size_t cells = raw.height * raw.width;
  for (GridSample& s : out.samples) {
    for (std::size_t c = 0; c < raw.variables(); ++c) {
      float* p = s.data.data() + c * cells;
      for (std::size_t i = 0; i < cells; ++i)
        p[i] = static_cast<float>(stats.standardize(c, raw.stats.destandardize(c, p[i])));
    }
  }
  return out;
}

GridSeries destandardize(const GridSeries& series) {
  GridSeries out = series;
  out.stats = NormStats::identity(series.variables());
  const std::size_t cells = series.height * series.width;
  for (GridSample& s : out.samples) {
    for (std::size_t c = 0; c < series.variables(); ++c) {
      float* p = s.data.data() + c * cells;
      for (std::size_t i = 0; i < cells; ++i) p[i] = static_cast<float>(series.stats.destandardize(c, p[i]));
    }
  }
  return out;
}

SplitRanges split_ranges(std::size_t steps) {
  return {steps * 10 / 13, steps * 11 / 13, steps};
}

std::size_t lead_steps(const GridSeries& series, std::int64_t hours) {
  const std::int64_t step = series.step_hours();
  require(step > 0, ErrorCode::InvalidArgument, "series needs at least 2 samples to define a lead time");
  require(hours > 0 && hours % step == 0, ErrorCode::InvalidArgument,
          "lead time " + std::to_string(hours) + "h is not a positive multiple of the " + std::to_string(step) +
              "h series step");
  return static_cast<std::size_t>(hours / step);
}

namespace {

void check_split(std::size_t height, std::size_t width, std::size_t split, std::size_t patch) {
  require(split >= 1, ErrorCode::IndivisibleGrid, "split factor must be >= 1");
  require(patch >= 1, ErrorCode::IndivisibleGrid, "patch size must be >= 1");
  require(height % split == 0 && width % split == 0, ErrorCode::IndivisibleGrid,
          "split " + std::to_string(split) + " does not divide the " + std::to_string(height) + "x" +
              std::to_string(width) + " grid");
  require((height / split) % patch == 0 && (width / split) % patch == 0, ErrorCode::IndivisibleGrid,
          "crop " + std::to_string(height / split) + "x" + std::to_string(width / split) +
              " is not a multiple of patch size " + std::to_string(patch));
}

}  // namespace

std::vector<Region> canonical_crops(std::size_t height, std::size_t width, std::size_t split, std::size_t patch) {
  check_split(height, width, split, patch);
  const std::size_t h = height / split;
  const std::size_t w = width / split;
  std::vector<Region> out;
  out.reserve(split * split);
  for (std::size_t i = 0; i < split; ++i)
    for (std::size_t j = 0; j < split; ++j) out.push_back({i * h, j * w, h, w});
  return out;
}

Region random_crop(std::size_t height, std::size_t width, std::size_t split, std::size_t patch, std::uint64_t seed) {
  check_split(height, width, split, patch);
  const std::size_t h = height / split;
  const std::size_t w = width / split;
  Rng rng(mix_seed(seed, 0xC4));
  const std::size_t rows = (height - h) / patch + 1;
  const std::size_t cols = (width - w) / patch + 1;
  const std::size_t r = rng.below(rows);
  const std::size_t c = rng.below(cols);
  return {r * patch, c * patch, h, w};
}

std::vector<float> crop_field(std::span<const float> field, std::size_t variables, std::size_t height,
                              std::size_t width, const Region& region) {
  require(field.size() == variables * height * width, ErrorCode::ShapeMismatch, "crop_field: field size mismatch");
  require(region.row_off + region.height <= height && region.col_off + region.width <= width, ErrorCode::ShapeMismatch,
          "crop region exceeds the grid");
  std::vector<float> out(variables * region.height * region.width);
  for (std::size_t v = 0; v < variables; ++v)
    for (std::size_t r = 0; r < region.height; ++r)
      std::copy_n(field.data() + (v * height + region.row_off + r) * width + region.col_off, region.width,
                  out.data() + (v * region.height + r) * region.width);
  return out;
}

namespace {

struct PhysicalScale {
  double mean;
  double scale;
};

PhysicalScale physical_scale(const VariableSpec& spec) {
  const double level = spec.level ? static_cast<double>(*spec.level) : 1000.0;
  const std::string& n = spec.name;
  if (n == "LSM") return {0.33, 0.4};
  if (n == "orography") return {380.0, 600.0};
  if (n == "T2m") return {278.0, 12.0};
  if (n == "U10") return {0.0, 5.0};
  if (n == "V10") return {0.0, 4.0};
  // Rough standard-atmosphere magnitudes per pressure level.
  if (n == "Z") return {9.80665 * 44330.8 * (1.0 - std::pow(level / 1013.25, 0.190263)), 600.0 + 2.0 * (1000.0 - level)};
  if (n == "T") return {288.15 * std::pow(level / 1013.25, 0.190263), 8.0};
  if (n == "U") return {5.0 + 10.0 * (1.0 - level / 1000.0), 8.0};
  if (n == "V") return {0.0, 6.0};
  if (n == "Q") return {0.008 * level / 1000.0, 0.003 * level / 1000.0 + 1e-5};
  if (n == "R") return {60.0, 18.0};
  return {0.0, 1.0};
}

bool is_static(const VariableSpec& spec) { return spec.name == "LSM" || spec.name == "orography"; }

}  // namespace

GridSeries generate_synthetic(const SynthConfig& config) {
  require(config.variables >= 1, ErrorCode::InvalidConfig, "variables must be >= 1");
  require(config.height >= 1 && config.width >= 1, ErrorCode::InvalidConfig, "grid dims must be >= 1");
  require(config.steps >= 1, ErrorCode::InvalidConfig, "steps must be >= 1");
  require(config.step_hours >= 1, ErrorCode::InvalidConfig, "step_hours must be >= 1");
  require(config.modes >= 1, ErrorCode::InvalidConfig, "modes must be >= 1");

  GridSeries series;
  series.registry = VariableRegistry::weatherbench_subset(config.variables);
  series.height = config.height;
  series.width = config.width;
  series.latitudes = config.latitudes.empty() ? default_latitudes(config.height) : config.latitudes;
  series.stats = NormStats::identity(config.variables);

  const std::size_t v_count = config.variables;
  const std::size_t h = config.height;
  const std::size_t w = config.width;
  const double two_pi = 2.0 * std::numbers::pi;

  struct Mode {
    double kx, ky, speed, lat_phase, phase;
  };
  Rng rng(mix_seed(config.seed, 0x5E));
  std::vector<Mode> modes(config.modes);
  for (Mode& m : modes) {
    m.kx = static_cast<double>(1 + rng.below(2));
    m.ky = static_cast<double>(1 + rng.below(3));
    m.speed = rng.uniform(0.5, 1.0);  // cells per hour, eastward
    m.lat_phase = rng.uniform(0.0, two_pi);
    m.phase = rng.uniform(0.0, two_pi);
  }
  std::vector<double> amp(v_count * config.modes), shift(v_count * config.modes), lat_trend(v_count);
  for (std::size_t v = 0; v < v_count; ++v) {
    lat_trend[v] = rng.uniform(-0.6, 0.6);
    for (std::size_t m = 0; m < config.modes; ++m) {
      amp[v * config.modes + m] = rng.uniform(0.3, 1.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
      shift[v * config.modes + m] = rng.uniform(0.0, two_pi);
    }
  }
  // Static channels: fixed smooth patterns.
  std::vector<double> statics(v_count * h * w, 0.0);
  for (std::size_t v = 0; v < v_count; ++v) {
    if (!is_static(series.registry[v])) continue;
    for (int term = 0; term < 3; ++term) {
      const double kx = static_cast<double>(1 + rng.below(4));
      const double ky = static_cast<double>(1 + rng.below(4));
      const double a = rng.uniform(0.3, 1.0);
      const double p1 = rng.uniform(0.0, two_pi);
      const double p2 = rng.uniform(0.0, two_pi);
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c)
          statics[(v * h + r) * w + c] += a * std::cos(two_pi * kx * static_cast<double>(c) / static_cast<double>(w) + p1) *
                                          std::cos(std::numbers::pi * ky * (static_cast<double>(r) + 0.5) / static_cast<double>(h) + p2);
    }
  }

  series.samples.resize(config.steps);
  for (std::size_t t = 0; t < config.steps; ++t) {
    GridSample& s = series.samples[t];
    s.timestamp = config.start_hour + static_cast<std::int64_t>(t) * config.step_hours;
    s.data.resize(v_count * h * w);
    const double hours = static_cast<double>(t) * static_cast<double>(config.step_hours);
    for (std::size_t v = 0; v < v_count; ++v) {
      const VariableSpec& spec = series.registry[v];
      const PhysicalScale ps = physical_scale(spec);
      for (std::size_t r = 0; r < h; ++r) {
        const double lat = series.latitudes[r] * std::numbers::pi / 180.0;
        for (std::size_t c = 0; c < w; ++c) {
          double x = 0.0;
          if (is_static(spec)) {
            x = statics[(v * h + r) * w + c];
          } else {
            x = lat_trend[v] * std::cos(lat);
            for (std::size_t m = 0; m < config.modes; ++m) {
              const Mode& mode = modes[m];
              const double travel = static_cast<double>(c) - config.advection_speed * mode.speed * hours;
              const double zonal = two_pi * mode.kx * travel / static_cast<double>(w) + mode.phase + shift[v * config.modes + m];
              const double meridional =
                  std::cos(std::numbers::pi * mode.ky * (static_cast<double>(r) + 0.5) / static_cast<double>(h) + mode.lat_phase);
              x += amp[v * config.modes + m] * meridional * std::cos(zonal);
            }
          }
          s.data[(v * h + r) * w + c] = static_cast<float>(ps.mean + ps.scale * x);
        }
      }
    }
  }
  series.validate();
  return series;
}

GridSeries prepare_series(const GridSeries& raw) {
  const SplitRanges split = split_ranges(raw.steps());
  return standardize(raw, fit_standardizer(raw, 0, std::max<std::size_t>(split.train_end, std::min<std::size_t>(2, raw.steps()))));
}

namespace {

using nlohmann::json;

json header_json(const GridSeries& series) {
  json reg = json::array();
  for (const VariableSpec& e : series.registry.entries()) {
    json entry{{"name", e.name}};
    entry["level"] = e.level ? json(*e.level) : json(nullptr);
    reg.push_back(entry);
  }
  std::vector<std::int64_t> ts;
  for (const GridSample& s : series.samples) ts.push_back(s.timestamp);
  return json{{"dims", {{"T", series.steps()}, {"V", series.variables()}, {"H", series.height}, {"W", series.width}}},
              {"registry", reg},
              {"stats", {{"mean", series.stats.mean}, {"std", series.stats.stddev}}},
              {"latitudes", series.latitudes},
              {"timestamps", ts}};
}

template <typename T>
T field(const json& j, const char* path, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::HeaderCorrupt, std::string("header field '") + path + "' is missing or has the wrong type");
  }
}

}  // namespace

void write_grid(const std::string& path, const GridSeries& series) {
  series.validate();
  const std::string header = header_json(series).dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out.write(kGridMagic, 4);
  out.put(static_cast<char>(kGridVersion));
  const auto len = static_cast<std::uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const GridSample& s : series.samples)
    out.write(reinterpret_cast<const char*>(s.data.data()), static_cast<std::streamsize>(s.data.size() * sizeof(float)));
  require(out.good(), ErrorCode::Io, "write to '" + path + "' failed");
}

GridSeries read_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open '" + path + "': file not found or unreadable");
  char magic[4] = {};
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, kGridMagic, 4) == 0, ErrorCode::BadMagic,
          "'" + path + "' does not start with VTXG");
  const int version = in.get();
  require(version == kGridVersion, ErrorCode::VersionMismatch,
          "format version " + std::to_string(version) + ", expected " + std::to_string(kGridVersion));
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  require(in.gcount() == sizeof len, ErrorCode::HeaderCorrupt, "header length field is truncated");
  std::string header(len, '\0');
  in.read(header.data(), len);
  require(static_cast<std::uint32_t>(in.gcount()) == len, ErrorCode::HeaderCorrupt,
          "header declares " + std::to_string(len) + " bytes, file has " + std::to_string(in.gcount()));
  json j;
  try {
    j = json::parse(header);
  } catch (const json::exception& e) {
    fail(ErrorCode::HeaderCorrupt, std::string("header is not valid JSON: ") + e.what());
  }
  GridSeries series;
  const json dims = field<json>(j, "dims", "dims");
  const auto steps = field<std::size_t>(dims, "dims.T", "T");
  const auto variables = field<std::size_t>(dims, "dims.V", "V");
  series.height = field<std::size_t>(dims, "dims.H", "H");
  series.width = field<std::size_t>(dims, "dims.W", "W");
  std::vector<VariableSpec> entries;
  for (const json& e : field<json>(j, "registry", "registry")) {
    VariableSpec spec{field<std::string>(e, "registry[].name", "name"), std::nullopt};
    if (e.contains("level") && !e.at("level").is_null()) spec.level = field<int>(e, "registry[].level", "level");
    entries.push_back(spec);
  }
  require(entries.size() == variables, ErrorCode::HeaderCorrupt,
          "registry lists " + std::to_string(entries.size()) + " variables, dims.V is " + std::to_string(variables));
  try {
    series.registry = VariableRegistry(std::move(entries));
  } catch (const Error& e) {
    fail(ErrorCode::HeaderCorrupt, std::string("registry: ") + e.what());
  }
  const json stats = field<json>(j, "stats", "stats");
  series.stats.mean = field<std::vector<double>>(stats, "stats.mean", "mean");
  series.stats.stddev = field<std::vector<double>>(stats, "stats.std", "std");
  require(series.stats.mean.size() == variables && series.stats.stddev.size() == variables, ErrorCode::HeaderCorrupt,
          "stats.mean/stats.std must have dims.V entries");
  series.latitudes = field<std::vector<double>>(j, "latitudes", "latitudes");
  require(series.latitudes.size() == series.height, ErrorCode::HeaderCorrupt, "latitudes must have dims.H entries");
  const auto ts = field<std::vector<std::int64_t>>(j, "timestamps", "timestamps");
  require(ts.size() == steps, ErrorCode::HeaderCorrupt, "timestamps must have dims.T entries");

  const std::size_t per_sample = variables * series.height * series.width;
  const std::uint64_t expected = static_cast<std::uint64_t>(steps) * per_sample * sizeof(float);
  const std::streampos payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  const std::uint64_t actual = static_cast<std::uint64_t>(in.tellg() - payload_start);
  require(actual >= expected, ErrorCode::PayloadTruncated,
          "payload has " + std::to_string(actual) + " bytes, header implies " + std::to_string(expected));
  require(actual == expected, ErrorCode::HeaderCorrupt,
          "payload has " + std::to_string(actual - expected) + " trailing bytes beyond dims");
  in.seekg(payload_start);
  series.samples.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    series.samples[t].timestamp = ts[t];
    series.samples[t].data.resize(per_sample);
    in.read(reinterpret_cast<char*>(series.samples[t].data.data()), static_cast<std::streamsize>(per_sample * sizeof(float)));
  }
  try {
    series.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NonFiniteInput) throw;
    fail(ErrorCode::HeaderCorrupt, e.what());
  }
  return series;
}

std::string sidecar_json(const GridSeries& series) {
  json j = header_json(series);
  j.erase("timestamps");
  for (std::size_t i = 0; i < series.variables(); ++i) {
    j["registry"][i]["key"] = series.registry[i].key();
    j["registry"][i]["units"] = units_for(series.registry[i].key());
  }
  if (!series.samples.empty()) {
    j["time"] = {{"first_hour", series.samples.front().timestamp},
                 {"step_hours", series.step_hours()},
                 {"steps", series.steps()}};
  }
  const SplitRanges split = split_ranges(series.steps());
  j["splits"] = {{"train", {0, split.train_end}}, {"validation", {split.train_end, split.val_end}},
                 {"test", {split.val_end, split.total}}};
  return j.dump(2);
}

}  // namespace vartex
