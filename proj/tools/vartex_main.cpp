#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vartex/config.hpp"
#include "vartex/error.hpp"
#include "vartex/grid.hpp"
#include "vartex/inference.hpp"
#include "vartex/model.hpp"
#include "vartex/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vartex;

namespace {

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("VARTEX_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  require(end != nullptr && *end == '\0', ErrorCode::InvalidArgument,
          std::string("VARTEX_SEED must be an unsigned integer, got '") + s + "'");
  return v;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open '" + path + "': file not found or unreadable");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out << text;
  require(out.good(), ErrorCode::Io, "write to '" + path.string() + "' failed");
}

struct ConfigSource {
  std::string file;
  std::string preset;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "JSON run config (may name a preset)");
    cmd->add_option("--preset", preset, "Preset name")->check(CLI::IsMember(preset_names()));
  }

  RunConfig resolve() const {
    RunConfig rc;
    if (!file.empty()) {
      rc = run_config_from_json(slurp(file));
    } else if (!preset.empty()) {
      rc = vartex::preset(preset);
    } else {
      fail(ErrorCode::InvalidConfig, "pass --config FILE or --preset NAME");
    }
    if (auto s = env_seed()) rc.plan.seed = *s;
    rc.model.validate();
    rc.plan.validate();
    return rc;
  }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

GridSeries load_series(const std::string& path) { return prepare_series(read_grid(path)); }

// ---- gen-data -----------------------------------------------------------------

struct GenData {
  std::string out;
  SynthConfig synth;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("gen-data", "Write a synthetic VTXG series and a JSON manifest");
    cmd->add_option("--out", out, "Output .vtxg path")->required();
    cmd->add_option("--variables", synth.variables, "Channels taken from the variable table")->capture_default_str();
    cmd->add_option("--height", synth.height)->capture_default_str();
    cmd->add_option("--width", synth.width)->capture_default_str();
    cmd->add_option("--steps", synth.steps)->capture_default_str();
    cmd->add_option("--seed", synth.seed)->capture_default_str();
    cmd->add_option("--step-hours", synth.step_hours)->capture_default_str();
    cmd->add_option("--advection", synth.advection_speed, "Wave speed multiplier")->capture_default_str();
    cmd->callback([this] { run(); });
  }

  void run() {
    if (auto s = env_seed()) synth.seed = *s;
    require(synth.steps >= 2, ErrorCode::EmptySeries,
            "--steps " + std::to_string(synth.steps) + ": standardization needs at least 2 samples");
    const GridSeries series = generate_synthetic(synth);
    const fs::path path(out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_grid(out, series);
    fs::path manifest = path;
    manifest += ".json";
    write_text(manifest, sidecar_json(series));
    std::cout << "wrote " << out << " (" << series.steps() << " x " << series.variables() << " x " << series.height
              << " x " << series.width << ") and " << manifest.string() << "\n";
  }
};

// ---- train --------------------------------------------------------------------

json ledger_json(const CostLedger& l, const ModelConfig& cfg, const TrainPlan& plan, TrainMode mode) {
  const std::vector<Region> crops = mode == TrainMode::Regional
                                        ? canonical_crops(cfg.image_height, cfg.image_width, plan.split, cfg.patch)
                                        : std::vector<Region>{Region{0, 0, cfg.image_height, cfg.image_width}};
  std::uint32_t lo = UINT32_MAX, hi = 0;
  for (std::uint32_t v : l.cell_visits) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {{"parameters", l.parameters},
          {"optimizer_steps", l.optimizer_steps},
          {"forward_passes", l.forward_passes},
          {"tokens", l.tokens},
          {"attention_entries_per_layer", l.attention_entries},
          {"spatial_layers", l.spatial_layers},
          {"attention_entries_total", l.total_attention_entries()},
          {"mixing_entries", l.mixing_entries},
          {"tokens_per_example", l.tokens_per_example},
          {"split", plan.split},
          {"crop_mode", to_string(plan.crop_mode)},
          {"crops", crops.size()},
          {"crop_height", crops[0].height},
          {"crop_width", crops[0].width},
          {"cell_visits_min", lo},
          {"cell_visits_max", hi}};
}

struct Train {
  ConfigSource config;
  std::string data;
  std::string out;
  std::optional<std::size_t> split;
  std::optional<std::string> crop_mode;
  std::optional<std::int64_t> lead_time;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> max_steps;
  std::string resume;
  bool global = false;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("train", "Train a model and write a checkpoint, log and cost ledger");
    config.attach(cmd);
    cmd->add_option("--data", data, "VTXG series")->required();
    cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_option("--split", split, "Regional split factor S");
    cmd->add_option("--crop-mode", crop_mode, "canonical or random")->check(CLI::IsMember({"canonical", "random"}));
    cmd->add_option("--lead-time", lead_time, "Lead time in hours");
    cmd->add_option("--epochs", epochs, "Override the epoch count");
    cmd->add_option("--max-steps", max_steps, "Stop after this many optimizer steps");
    cmd->add_option("--resume", resume, "Checkpoint to resume from");
    cmd->add_flag("--global", global, "Train on the full grid, ignoring --split");
    cmd->callback([this] { run(); });
  }

  void run() {
    RunConfig rc = config.resolve();
    if (split) rc.plan.split = *split;
    if (crop_mode) rc.plan.crop_mode = crop_mode_from_string(*crop_mode);
    if (lead_time) rc.plan.lead_time_hours = *lead_time;
    if (epochs) rc.plan.epochs = *epochs;
    rc.plan.validate();
    const TrainMode mode = global ? TrainMode::Global : TrainMode::Regional;
    if (mode == TrainMode::Regional) {
      canonical_crops(rc.model.image_height, rc.model.image_width, rc.plan.split, rc.model.patch);
    }
    const GridSeries series = load_series(data);
    const SplitRanges ranges = split_ranges(series.steps());
    Model model(rc.model, rc.plan.seed);
    Trainer trainer(model, rc.plan, series, 0, ranges.train_end, mode);
    if (!resume.empty()) {
      OptimState opt;
      const CheckpointInfo info = load_checkpoint(resume, model, &opt);
      require(info.plan == rc.plan, ErrorCode::ConfigMismatch, "resume: training plan differs from the checkpoint");
      trainer.restore(info.state, std::move(opt));
    }
    fs::create_directories(out);
    const fs::path dir(out);
    std::ofstream log(dir / "train_log.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
    require(log.good(), ErrorCode::Io, "cannot open '" + (dir / "train_log.jsonl").string() + "' for writing");
    trainer.set_log(&log);
    write_text(dir / "config.json", to_json(rc) + "\n");
    std::cout << "training " << model.params().total_count() << " parameters for " << trainer.total_steps()
              << " steps (" << trainer.steps_per_epoch() << " per epoch)\n";
    const std::size_t budget = max_steps.value_or(SIZE_MAX);
    std::size_t done = 0;
    double last = 0.0;
    while (!trainer.finished() && done < budget) {
      const std::size_t epoch = trainer.state().epoch;
      last = trainer.step();
      ++done;
      if (trainer.state().epoch != epoch || trainer.finished()) {
        std::cout << "epoch " << epoch << " last loss " << last << "\n";
      }
    }
    const std::string ckpt = (dir / "checkpoint.vtxc").string();
    save_checkpoint(ckpt, model, rc.plan, trainer.state(), &trainer.optimizer());
    const json ledger = ledger_json(trainer.ledger(), rc.model, rc.plan, mode);
    write_text(dir / "ledger.json", ledger.dump(2) + "\n");
    std::cout << "ledger: " << ledger["crops"] << " crops of " << ledger["crop_height"] << "x" << ledger["crop_width"]
              << ", " << ledger["tokens_per_example"] << " tokens per example, "
              << ledger["attention_entries_total"] << " attention entries\n";
    std::cout << "wrote " << ckpt << "\n";
  }
};

// ---- eval / predict / export --------------------------------------------------

struct ForecastSource {
  std::string checkpoint;
  std::string forecaster = "model";
  std::optional<std::size_t> split;
  std::optional<std::int64_t> lead_time;

  void attach(CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint, "Model checkpoint");
    cmd->add_option("--forecaster", forecaster, "model, persistence, replay or climatology")
        ->check(CLI::IsMember({"model", "persistence", "replay", "climatology"}))
        ->capture_default_str();
    cmd->add_option("--split", split, "Split-and-reconstruct factor (default: training split)");
    cmd->add_option("--lead-time", lead_time, "Lead time in hours (default: from the checkpoint, else 6)");
  }

  struct Resolved {
    std::optional<Model> model;
    std::int64_t lead_hours = 6;
    std::size_t split = 1;
  };

  Resolved resolve() const {
    Resolved r;
    if (!checkpoint.empty()) {
      r.model.emplace(load_model(checkpoint));
      const CheckpointInfo info = read_checkpoint_info(checkpoint);
      r.lead_hours = info.plan.lead_time_hours;
      r.split = info.plan.split;
    } else {
      require(forecaster != "model", ErrorCode::InvalidArgument, "--forecaster model needs --checkpoint");
    }
    if (lead_time) r.lead_hours = *lead_time;
    if (split) r.split = *split;
    return r;
  }

  Forecaster make(Resolved& r, const GridSeries& series, const EvalRange& range) const {
    if (forecaster == "persistence") return persistence_forecaster(series);
    if (forecaster == "replay") return replay_forecaster(series, range.lead);
    if (forecaster == "climatology") return climatology_forecaster(series, range.first, range.last, range.lead);
    const ModelConfig& cfg = r.model->config();
    require(cfg.variables == series.variables(), ErrorCode::VariableCountMismatch,
            "checkpoint expects " + std::to_string(cfg.variables) + " variables, data has " +
                std::to_string(series.variables()));
    return model_forecaster(*r.model, series, r.split);
  }
};

struct Eval {
  ForecastSource source;
  std::string data;
  std::string targets;
  std::string report;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("eval", "Latitude-weighted ACC and RMSE on the test split");
    source.attach(cmd);
    cmd->add_option("--data", data, "VTXG series")->required();
    cmd->add_option("--targets", targets, "Comma-separated target keys (default U10,T2m,Z500,T850)");
    cmd->add_option("--report", report, "Write the report to this path (.json or .csv)");
    cmd->callback([this] { run(); });
  }

  void run() {
    auto resolved = source.resolve();
    const GridSeries series = load_series(data);
    const EvalRange range = test_range(series, resolved.lead_hours);
    const Forecaster f = source.make(resolved, series, range);
    const std::vector<std::string> keys = targets.empty() ? default_targets() : split_list(targets);
    MetricReport rep = evaluate(series, range, f, keys);
    rep.split = source.forecaster == "model" ? resolved.split : 1;
    std::cout << rep.to_csv();
    if (!report.empty()) {
      const bool as_json = fs::path(report).extension() == ".json";
      write_text(report, as_json ? rep.to_json() + "\n" : rep.to_csv());
      std::cout << "wrote " << report << "\n";
    }
  }
};

struct Predict {
  ForecastSource source;
  std::string data;
  std::size_t time_index = 0;
  std::string out;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("predict", "Forecast one sample and write it as VTXG in physical units");
    source.attach(cmd);
    cmd->add_option("--data", data, "VTXG series")->required();
    cmd->add_option("--time-index", time_index, "Input sample index")->required();
    cmd->add_option("--out", out, "Output .vtxg path")->required();
    cmd->callback([this] { run(); });
  }

  void run() {
    auto resolved = source.resolve();
    const GridSeries series = load_series(data);
    const std::size_t lead = lead_steps(series, resolved.lead_hours);
    require(time_index + lead < series.steps(), ErrorCode::InvalidArgument,
            "--time-index " + std::to_string(time_index) + " is out of range; valid indices are 0.." +
                std::to_string(series.steps() > lead ? series.steps() - lead - 1 : 0));
    const EvalRange range{time_index, series.steps(), lead};
    const Tensor forecast = to_physical(series, source.make(resolved, series, range)(time_index));
    GridSeries result;
    std::vector<VariableSpec> entries(series.registry.entries().begin(),
                                      series.registry.entries().begin() + static_cast<std::ptrdiff_t>(forecast.dim(0)));
    result.registry = VariableRegistry(std::move(entries));
    result.stats = NormStats::identity(forecast.dim(0));
    result.latitudes = series.latitudes;
    result.height = series.height;
    result.width = series.width;
    GridSample sample;
    sample.timestamp = series.samples[time_index + lead].timestamp;
    sample.data.assign(forecast.vec().begin(), forecast.vec().end());
    result.samples.push_back(std::move(sample));
    write_grid(out, result);
    std::cout << "wrote " << out << "\n";
  }
};

struct ExportMaps {
  ForecastSource source;
  std::string data;
  std::size_t time_index = 0;
  std::string out;
  std::string targets;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("export-maps", "Write initial, truth, prediction and bias CSV grids per target");
    source.attach(cmd);
    cmd->add_option("--data", data, "VTXG series")->required();
    cmd->add_option("--time-index", time_index, "Input sample index")->required();
    cmd->add_option("--out", out, "Output directory")->required();
    cmd->add_option("--targets", targets, "Comma-separated target keys");
    cmd->callback([this] { run(); });
  }

  void run() {
    auto resolved = source.resolve();
    const GridSeries series = load_series(data);
    const std::size_t lead = lead_steps(series, resolved.lead_hours);
    require(time_index + lead < series.steps(), ErrorCode::InvalidArgument,
            "--time-index " + std::to_string(time_index) + " is out of range; valid indices are 0.." +
                std::to_string(series.steps() > lead ? series.steps() - lead - 1 : 0));
    const EvalRange range{0, series.steps(), lead};
    const Forecaster f = source.make(resolved, series, range);
    const auto keys = targets.empty() ? default_targets() : split_list(targets);
    for (const MapPanel& p : export_maps(series, time_index, lead, f, keys, out)) std::cout << p.path << "\n";
  }
};

// ---- accounting ---------------------------------------------------------------

struct CountParams {
  ConfigSource config;
  bool as_json = false;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("count-params", "Per-group parameter census");
    config.attach(cmd);
    cmd->add_flag("--json", as_json, "Print JSON");
    cmd->callback([this] { run(); });
  }

  void run() {
    const RunConfig rc = config.resolve();
    const ParameterCensus census = count_parameters(rc.model);
    const double reference = reference_parameters_millions(rc.preset);
    const double millions = static_cast<double>(census.total) / 1e6;
    const double deviation = reference > 0 ? (millions - reference) / reference : 0.0;
    if (as_json) {
      json j{{"groups", census.groups}, {"total", census.total}, {"millions", millions}};
      j["mixing_interval"] = rc.model.mixing_interval;
      j["use_mixing"] = rc.model.use_mixing;
      j["share_spatial_weights"] = rc.model.share_spatial_weights;
      if (reference > 0) {
        j["reference_millions"] = reference;
        j["relative_deviation"] = deviation;
      }
      std::cout << j.dump(2) << "\n";
      return;
    }
    std::cout << std::left;
    for (const auto& [group, count] : census.groups) std::cout << std::setw(12) << group << count << "\n";
    std::cout << std::setw(12) << "total" << census.total << " (" << std::fixed << std::setprecision(2) << millions
              << "M)\n";
    std::cout << "mixing_interval " << rc.model.mixing_interval << ", mixing " << (rc.model.use_mixing ? "on" : "off")
              << ", spatial weights " << (rc.model.share_spatial_weights ? "shared" : "per stream") << "\n";
    if (reference > 0) {
      std::cout << "reference " << reference << "M, deviation " << std::showpos << std::setprecision(2)
                << 100.0 * deviation << std::noshowpos << "%\n";
    }
  }
};

struct BenchAttention {
  ConfigSource config;
  std::vector<std::size_t> splits{1, 2, 4, 8};
  bool as_json = false;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("bench-attention", "Token and attention-entry counts, global vs split");
    config.attach(cmd);
    cmd->add_option("--split", splits, "Split factors")->capture_default_str();
    cmd->add_flag("--json", as_json, "Print JSON");
    cmd->callback([this] { run(); });
  }

  void run() {
    const RunConfig rc = config.resolve();
    json rows = json::array();
    if (!as_json) std::cout << "split,crops,crop_h,crop_w,tokens_per_crop,entries_per_crop,entries_total,entries_global,crop_ratio,total_ratio\n";
    for (std::size_t s : splits) {
      const AttentionCost c = attention_cost(rc.model, s);
      const double crop_ratio = static_cast<double>(c.entries_per_crop) / static_cast<double>(c.entries_global);
      const double total_ratio = static_cast<double>(c.entries_total) / static_cast<double>(c.entries_global);
      const std::size_t ch = rc.model.image_height / s, cw = rc.model.image_width / s;
      if (as_json) {
        rows.push_back({{"split", s},
                        {"crops", c.crops},
                        {"crop_height", ch},
                        {"crop_width", cw},
                        {"tokens_global", c.tokens_global},
                        {"tokens_per_crop", c.tokens_per_crop},
                        {"entries_global", c.entries_global},
                        {"entries_per_crop", c.entries_per_crop},
                        {"entries_total", c.entries_total},
                        {"spatial_layers", c.spatial_layers},
                        {"crop_ratio", crop_ratio},
                        {"total_ratio", total_ratio}});
      } else {
        std::cout << s << ',' << c.crops << ',' << ch << ',' << cw << ',' << c.tokens_per_crop << ','
                  << c.entries_per_crop << ',' << c.entries_total << ',' << c.entries_global << ',' << crop_ratio
                  << ',' << total_ratio << '\n';
      }
    }
    if (as_json) std::cout << rows.dump(2) << "\n";
  }
};

struct EchoConfig {
  ConfigSource config;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("echo-config", "Print the fully expanded run config");
    config.attach(cmd);
    cmd->callback([this] { std::cout << to_json(config.resolve()) << "\n"; });
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VarteX weather-forecasting toolkit"};
  app.require_subcommand(1);
  GenData gen;
  Train train;
  Eval eval;
  Predict predict;
  ExportMaps maps;
  CountParams count;
  BenchAttention bench;
  EchoConfig echo;
  gen.attach(app);
  train.attach(app);
  eval.attach(app);
  predict.attach(app);
  maps.attach(app);
  count.attach(app);
  bench.attach(app);
  echo.attach(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
