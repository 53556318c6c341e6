#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vartex {

/// Architecture description. `stream_dim` 0 means embed_dim / representatives;
/// `output_variables` 0 means "predict every input variable".
struct ModelConfig {
  std::size_t image_height = 32;
  std::size_t image_width = 64;
  std::size_t patch = 2;
  std::size_t embed_dim = 1024;
  std::size_t representatives = 2;
  std::size_t stream_dim = 0;
  std::size_t blocks = 8;
  std::size_t heads = 16;
  std::size_t mlp_ratio = 4;
  std::size_t mixing_interval = 4;
  bool use_mixing = true;
  bool share_spatial_weights = false;
  std::size_t head_depth = 2;  // hidden Linear+GELU layers before the output projection
  std::size_t head_hidden = 1024;
  double drop_rate = 0.1;
  double drop_path = 0.1;
  std::size_t variables = 47;
  std::size_t output_variables = 0;
  /// Zero-initialize the output projections of every residual branch.
  bool zero_init_residual = false;

  std::size_t stream_width() const { return stream_dim ? stream_dim : embed_dim / representatives; }
  /// Width of the per-variable token embedding before the split.
  std::size_t token_width() const { return stream_width() * representatives; }
  std::size_t out_variables() const { return output_variables ? output_variables : variables; }
  std::size_t grid_tokens() const { return (image_height / patch) * (image_width / patch); }
  std::size_t mixing_blocks() const { return use_mixing ? blocks / mixing_interval : 0; }

  /// Throws InvalidConfig / HeadDivisibility naming the offending field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class CropMode { Canonical, Random };

std::string to_string(CropMode mode);
CropMode crop_mode_from_string(const std::string& s);

struct TrainPlan {
  std::size_t epochs = 50;
  std::size_t warmup_epochs = 5;
  std::size_t batch_size = 128;
  std::size_t accumulation_steps = 4;
  std::size_t split = 1;
  CropMode crop_mode = CropMode::Canonical;
  std::int64_t lead_time_hours = 6;
  std::uint64_t seed = 0;
  double lr_peak = 5e-7;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  friend bool operator==(const TrainPlan&, const TrainPlan&) = default;
};

struct RunConfig {
  std::string preset;
  ModelConfig model;
  TrainPlan plan;
};

/// paper-r1, paper-r2, paper-r4, paper-r4-wide, desk-tiny, desk-tiny-r1
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Published parameter totals for the full-scale presets, in millions.
double reference_parameters_millions(const std::string& preset_name);

std::string to_json(const ModelConfig& config);
std::string to_json(const TrainPlan& plan);
std::string to_json(const RunConfig& config);

/// Parses {"model": {...}, "train": {...}}; unknown keys are rejected.
ModelConfig model_config_from_json(const std::string& text);
TrainPlan train_plan_from_json(const std::string& text);
/// Parses a run config. A "preset" key expands first; "model"/"train" objects
/// then override individual fields.
RunConfig run_config_from_json(const std::string& text);

}  // namespace vartex
