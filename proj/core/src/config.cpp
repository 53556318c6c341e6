#include "vartex/config.hpp"

#include <json.hpp>

#include "vartex/error.hpp"

namespace vartex {

using nlohmann::json;

void ModelConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) { fail(ErrorCode::InvalidConfig, field + ": " + why); };
  if (patch == 0) bad("patch", "must be >= 1");
  if (image_height == 0 || image_height % patch) bad("image_height", "must be a positive multiple of patch");
  if (image_width == 0 || image_width % patch) bad("image_width", "must be a positive multiple of patch");
  if (representatives == 0) bad("representatives", "must be >= 1");
  if (stream_dim == 0 && (embed_dim == 0 || embed_dim % representatives))
    bad("embed_dim", "must be divisible by representatives when stream_dim is defaulted");
  if (stream_width() == 0) bad("stream_dim", "must be >= 1");
  if (heads == 0) bad("heads", "must be >= 1");
  if (stream_width() % heads)
    fail(ErrorCode::HeadDivisibility, "heads: " + std::to_string(heads) + " does not divide stream width " +
                                          std::to_string(stream_width()));
  if (blocks == 0) bad("blocks", "must be >= 1");
  if (mixing_interval == 0 || mixing_interval > blocks) bad("mixing_interval", "must be in [1, blocks]");
  if (mlp_ratio == 0) bad("mlp_ratio", "must be >= 1");
  if (head_depth > 0 && head_hidden == 0) bad("head_hidden", "must be >= 1");
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) bad("drop_rate", "must be in [0, 1)");
  if (!(drop_path >= 0.0 && drop_path < 1.0)) bad("drop_path", "must be in [0, 1)");
  if (variables == 0) bad("variables", "must be >= 1");
  if (output_variables > variables) bad("output_variables", "cannot exceed variables");
}

std::string to_string(CropMode mode) { return mode == CropMode::Canonical ? "canonical" : "random"; }

CropMode crop_mode_from_string(const std::string& s) {
  if (s == "canonical") return CropMode::Canonical;
  if (s == "random") return CropMode::Random;
  fail(ErrorCode::InvalidConfig, "crop_mode: '" + s + "' is not canonical|random");
}

void TrainPlan::validate() const {
  auto bad = [](const std::string& field, const std::string& why) { fail(ErrorCode::InvalidConfig, field + ": " + why); };
  if (epochs == 0) bad("epochs", "must be >= 1");
  if (warmup_epochs >= epochs) bad("warmup_epochs", "must be smaller than epochs");
  if (batch_size == 0) bad("batch_size", "must be >= 1");
  if (accumulation_steps == 0) bad("accumulation_steps", "must be >= 1");
  if (accumulation_steps > batch_size) bad("accumulation_steps", "cannot exceed batch_size");
  if (split == 0) bad("split", "must be >= 1");
  if (lead_time_hours <= 0) bad("lead_time_hours", "must be positive");
  if (!(lr_peak >= 0.0)) bad("lr_peak", "must be >= 0");
  if (!(weight_decay >= 0.0)) bad("weight_decay", "must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) bad("beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) bad("beta2", "must be in [0, 1)");
  if (!(adam_eps > 0.0)) bad("adam_eps", "must be positive");
}

namespace {

template <class C, class F>
void model_fields(C& c, F&& f) {
  f("image_height", c.image_height);
  f("image_width", c.image_width);
  f("patch", c.patch);
  f("embed_dim", c.embed_dim);
  f("representatives", c.representatives);
  f("stream_dim", c.stream_dim);
  f("blocks", c.blocks);
  f("heads", c.heads);
  f("mlp_ratio", c.mlp_ratio);
  f("mixing_interval", c.mixing_interval);
  f("use_mixing", c.use_mixing);
  f("share_spatial_weights", c.share_spatial_weights);
  f("head_depth", c.head_depth);
  f("head_hidden", c.head_hidden);
  f("drop_rate", c.drop_rate);
  f("drop_path", c.drop_path);
  f("variables", c.variables);
  f("output_variables", c.output_variables);
  f("zero_init_residual", c.zero_init_residual);
}

template <class C, class F>
void plan_fields(C& p, F&& f) {
  f("epochs", p.epochs);
  f("warmup_epochs", p.warmup_epochs);
  f("batch_size", p.batch_size);
  f("accumulation_steps", p.accumulation_steps);
  f("split", p.split);
  f("lead_time_hours", p.lead_time_hours);
  f("seed", p.seed);
  f("lr_peak", p.lr_peak);
  f("weight_decay", p.weight_decay);
  f("beta1", p.beta1);
  f("beta2", p.beta2);
  f("adam_eps", p.adam_eps);
}

json model_json(const ModelConfig& c) {
  json j = json::object();
  model_fields(c, [&](const char* key, const auto& v) { j[key] = v; });
  return j;
}

json plan_json(const TrainPlan& p) {
  json j = json::object();
  plan_fields(p, [&](const char* key, const auto& v) { j[key] = v; });
  j["crop_mode"] = to_string(p.crop_mode);
  return j;
}

template <class T>
void read_into(const json& j, const std::string& section, const char* key, T& target) {
  try {
    target = j.get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::InvalidConfig, section + "." + key + ": wrong type");
  }
}

void apply_model(const json& j, ModelConfig& c) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "model: must be an object");
  std::size_t matched = 0;
  model_fields(c, [&](const char* key, auto& v) {
    if (j.contains(key)) {
      read_into(j.at(key), "model", key, v);
      ++matched;
    }
  });
  if (matched != j.size()) {
    for (const auto& [key, _] : j.items()) {
      bool known = false;
      model_fields(c, [&](const char* k, auto&) { known = known || key == k; });
      if (!known) fail(ErrorCode::InvalidConfig, "model." + key + ": unknown field");
    }
  }
}

void apply_plan(const json& j, TrainPlan& p) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "train: must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "crop_mode") {
      std::string s;
      read_into(value, "train", "crop_mode", s);
      p.crop_mode = crop_mode_from_string(s);
      continue;
    }
    bool known = false;
    plan_fields(p, [&](const char* k, auto& v) {
      if (key == k) {
        read_into(value, "train", k, v);
        known = true;
      }
    });
    if (!known) fail(ErrorCode::InvalidConfig, "train." + key + ": unknown field");
  }
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
}

ModelConfig full_scale_model() {
  ModelConfig c;
  return c;
}

TrainPlan desk_plan() {
  TrainPlan p;
  p.epochs = 40;
  p.warmup_epochs = 1;
  p.batch_size = 8;
  p.accumulation_steps = 1;
  p.lr_peak = 3e-3;
  p.weight_decay = 1e-5;
  return p;
}

}  // namespace

RunConfig preset(const std::string& name) {
  RunConfig rc;
  rc.preset = name;
  if (name == "paper-r1") {
    rc.model = full_scale_model();
    rc.model.representatives = 1;
    rc.model.use_mixing = false;
  } else if (name == "paper-r2") {
    rc.model = full_scale_model();
  } else if (name == "paper-r4") {
    rc.model = full_scale_model();
    rc.model.representatives = 4;
  } else if (name == "paper-r4-wide") {
    rc.model = full_scale_model();
    rc.model.representatives = 4;
    rc.model.stream_dim = 2 * rc.model.embed_dim / 4;
  } else if (name == "desk-tiny" || name == "desk-tiny-r1") {
    ModelConfig& m = rc.model;
    m.image_height = 32;
    m.image_width = 64;
    m.patch = 4;
    m.embed_dim = 32;
    m.representatives = name == "desk-tiny" ? 2 : 1;
    m.use_mixing = name == "desk-tiny";
    m.blocks = 2;
    m.heads = 2;
    m.mlp_ratio = 4;
    m.mixing_interval = 1;
    m.head_depth = 1;
    m.head_hidden = 64;
    m.drop_rate = 0.0;
    m.drop_path = 0.0;
    m.variables = 8;
    rc.plan = desk_plan();
  } else {
    fail(ErrorCode::InvalidConfig, "preset: unknown preset '" + name + "'");
  }
  return rc;
}

std::vector<std::string> preset_names() {
  return {"paper-r1", "paper-r2", "paper-r4", "paper-r4-wide", "desk-tiny", "desk-tiny-r1"};
}

double reference_parameters_millions(const std::string& preset_name) {
  if (preset_name == "paper-r1") return 108.08;
  if (preset_name == "paper-r2") return 59.86;
  if (preset_name == "paper-r4") return 20.76;
  if (preset_name == "paper-r4-wide") return 80.47;
  return 0.0;
}

std::string to_json(const ModelConfig& config) { return model_json(config).dump(2); }
std::string to_json(const TrainPlan& plan) { return plan_json(plan).dump(2); }

std::string to_json(const RunConfig& config) {
  json j{{"model", model_json(config.model)}, {"train", plan_json(config.plan)}};
  if (!config.preset.empty()) j["preset"] = config.preset;
  return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig c;
  apply_model(parse(text), c);
  return c;
}

TrainPlan train_plan_from_json(const std::string& text) {
  TrainPlan p;
  apply_plan(parse(text), p);
  return p;
}

RunConfig run_config_from_json(const std::string& text) {
  const json j = parse(text);
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "config: must be a JSON object");
  RunConfig rc;
  if (j.contains("preset")) {
    std::string name;
    read_into(j.at("preset"), "config", "preset", name);
    rc = preset(name);
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "preset") continue;
    if (key == "model") apply_model(value, rc.model);
    else if (key == "train") apply_plan(value, rc.plan);
    else fail(ErrorCode::InvalidConfig, key + ": unknown top-level field");
  }
  return rc;
}

}  // namespace vartex
