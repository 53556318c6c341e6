#include "vartex/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <ostream>

#include <json.hpp>

#include "vartex/error.hpp"
#include "vartex/rng.hpp"

namespace vartex {

using nlohmann::json;

// ---- schedule -----------------------------------------------------------------

double lr_at(std::size_t step, const LrSchedule& s) {
  if (s.total_steps == 0 || step >= s.total_steps) return 0.0;
  if (step < s.warmup_steps) return s.peak * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  const std::size_t span = s.total_steps - s.warmup_steps;
  const double progress = static_cast<double>(step - s.warmup_steps) / static_cast<double>(span);
  return 0.5 * s.peak * (1.0 + std::cos(std::numbers::pi * progress));
}

LrSchedule make_schedule(const TrainPlan& plan, std::size_t steps_per_epoch) {
  LrSchedule s;
  s.peak = plan.lr_peak;
  s.total_steps = std::max<std::size_t>(1, plan.epochs * steps_per_epoch);
  s.warmup_steps = std::min(plan.warmup_epochs * steps_per_epoch, s.total_steps - 1);
  return s;
}

// ---- optimizer ----------------------------------------------------------------

OptimState OptimState::for_store(const ParameterStore& store) {
  OptimState s;
  for (const Parameter& p : store.all()) {
    s.first.emplace_back(p.shape);
    s.second.emplace_back(p.shape);
  }
  return s;
}

void adamw_step(ParameterStore& store, OptimState& state, const AdamW& hyper, double lr) {
  auto& params = store.all();
  require(state.first.size() == params.size() && state.second.size() == params.size(), ErrorCode::ShapeMismatch,
          "optimizer state holds " + std::to_string(state.first.size()) + " tensors for " +
              std::to_string(params.size()) + " parameters");
  for (const Parameter& p : params) {
    if (p.grad.size() == 0) continue;
    require(p.grad.all_finite(), ErrorCode::NonFiniteGradient, "gradient of '" + p.name + "' is not finite");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  const double decay = 1.0 - lr * hyper.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    Tensor& m = state.first[i];
    Tensor& v = state.second[i];
    require(m.shape() == p.shape && v.shape() == p.shape, ErrorCode::ShapeMismatch,
            "optimizer moment shape differs for '" + p.name + "'");
    const bool has_grad = p.grad.size() == p.count();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = has_grad ? p.grad[k] : 0.0;
      m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g;
      v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p.value[k] = p.value[k] * decay - lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
  }
}

// ---- cost accounting ----------------------------------------------------------

void CostLedger::reset_grid(std::size_t height, std::size_t width) {
  grid_height = height;
  grid_width = width;
  cell_visits.assign(height * width, 0);
}

void CostLedger::record(const Region& region, const ModelConfig& config) {
  if (cell_visits.size() != config.image_height * config.image_width) {
    reset_grid(config.image_height, config.image_width);
  }
  const std::uint64_t n = (region.height / config.patch) * (region.width / config.patch);
  const std::uint64_t r = config.representatives;
  ++forward_passes;
  tokens += n;
  attention_entries += n * n;
  spatial_layers = static_cast<std::uint64_t>(config.blocks) * r;
  mixing_entries += n * r * r * config.mixing_blocks();
  tokens_per_example = n;
  entries_per_example = n * n;
  for (std::size_t i = 0; i < region.height; ++i) {
    for (std::size_t j = 0; j < region.width; ++j) {
      ++cell_visits[(region.row_off + i) * grid_width + region.col_off + j];
    }
  }
}

AttentionCost attention_cost(const ModelConfig& config, std::size_t split) {
  const std::vector<Region> crops =
      canonical_crops(config.image_height, config.image_width, split, config.patch);
  AttentionCost c;
  c.split = split;
  c.crops = crops.size();
  c.tokens_global = config.grid_tokens();
  c.tokens_per_crop = (crops[0].height / config.patch) * (crops[0].width / config.patch);
  c.entries_global = c.tokens_global * c.tokens_global;
  c.entries_per_crop = c.tokens_per_crop * c.tokens_per_crop;
  c.entries_total = c.entries_per_crop * c.crops;
  c.spatial_layers = static_cast<std::uint64_t>(config.blocks) * config.representatives;
  return c;
}

// ---- batches ------------------------------------------------------------------

Batch assemble_batch(const GridSeries& series, std::span<const Example> examples, std::size_t lead,
                     const ModelConfig& config, const LatWeights& weights) {
  require(!examples.empty(), ErrorCode::InvalidArgument, "empty batch");
  require(series.variables() == config.variables, ErrorCode::VariableCountMismatch,
          "series has " + std::to_string(series.variables()) + " variables, model expects " +
              std::to_string(config.variables));
  require(weights.size() == series.height, ErrorCode::ShapeMismatch, "latitude weights do not match the grid");
  const std::size_t b = examples.size();
  const std::size_t v = series.variables();
  const std::size_t vo = config.out_variables();
  const std::size_t h = examples[0].region.height;
  const std::size_t w = examples[0].region.width;
  Batch batch;
  batch.inputs = Tensor({b, v, h, w});
  batch.targets = Tensor({b, vo, h, w});
  batch.row_weights.reserve(b * h);
  for (std::size_t s = 0; s < b; ++s) {
    const Example& e = examples[s];
    require(e.region.height == h && e.region.width == w, ErrorCode::ShapeMismatch, "batch mixes crop sizes");
    require(e.input_index + lead < series.steps(), ErrorCode::InvalidArgument,
            "example at " + std::to_string(e.input_index) + " has no target " + std::to_string(lead) + " steps ahead");
    const std::vector<float>& in = series.samples[e.input_index].data;
    const std::vector<float>& out = series.samples[e.input_index + lead].data;
    for (std::size_t c = 0; c < v; ++c) {
      for (std::size_t i = 0; i < h; ++i) {
        const std::size_t src = (c * series.height + e.region.row_off + i) * series.width + e.region.col_off;
        double* dst_in = batch.inputs.data() + ((s * v + c) * h + i) * w;
        for (std::size_t j = 0; j < w; ++j) dst_in[j] = in[src + j];
        if (c < vo) {
          double* dst_out = batch.targets.data() + ((s * vo + c) * h + i) * w;
          for (std::size_t j = 0; j < w; ++j) dst_out[j] = out[src + j];
        }
      }
    }
    for (std::size_t i = 0; i < h; ++i) batch.row_weights.push_back(weights[e.region.row_off + i]);
    batch.regions.push_back(e.region);
  }
  return batch;
}

namespace {

Tensor slice_samples(const Tensor& t, std::size_t begin, std::size_t count) {
  Shape shape = t.shape();
  const std::size_t per = t.size() / shape[0];
  shape[0] = count;
  Tensor out(shape);
  std::copy_n(t.data() + begin * per, count * per, out.data());
  return out;
}

}  // namespace

double train_step(Model& model, OptimState& opt, const TrainPlan& plan, const Batch& batch, double lr,
                  std::uint64_t step_seed) {
  const std::size_t b = batch.inputs.dim(0);
  const std::size_t h = batch.inputs.dim(2);
  const std::size_t micro = std::clamp<std::size_t>(plan.accumulation_steps, 1, b);
  ParameterStore& store = model.params();
  store.zero_grad();
  double loss = 0.0;
  std::size_t begin = 0;
  for (std::size_t m = 0; m < micro; ++m) {
    const std::size_t count = b / micro + (m < b % micro ? 1 : 0);
    const double share = static_cast<double>(count) / static_cast<double>(b);
    nn::Graph graph(true);
    nn::ForwardContext ctx = nn::ForwardContext::training(mix_seed(step_seed, m));
    const Tensor inputs = slice_samples(batch.inputs, begin, count);
    const Tensor targets = slice_samples(batch.targets, begin, count);
    const std::span<const Region> regions(batch.regions.data() + begin, count);
    const std::span<const double> weights(batch.row_weights.data() + begin * h, count * h);
    nn::Var pred = model.forward(graph, inputs, regions, ctx);
    nn::Var l = nn::weighted_mse(pred, targets, weights);
    const double value = l.value().item();
    require(std::isfinite(value), ErrorCode::NonFiniteLoss, "training loss is not finite");
    graph.backward(l, share);
    loss += share * value;
    begin += count;
  }
  adamw_step(store, opt, AdamW::from(plan), lr);
  return loss;
}

// ---- trainer ------------------------------------------------------------------

Trainer::Trainer(Model& model, TrainPlan plan, const GridSeries& series, std::size_t first, std::size_t last,
                 TrainMode mode)
    : model_(model), plan_(std::move(plan)), series_(series), first_(first), last_(last), mode_(mode) {
  plan_.validate();
  const ModelConfig& cfg = model_.config();
  require(series_.height == cfg.image_height && series_.width == cfg.image_width, ErrorCode::ShapeMismatch,
          "series grid " + std::to_string(series_.height) + "x" + std::to_string(series_.width) +
              " differs from the model grid " + std::to_string(cfg.image_height) + "x" +
              std::to_string(cfg.image_width));
  require(series_.variables() == cfg.variables, ErrorCode::VariableCountMismatch,
          "series has " + std::to_string(series_.variables()) + " variables, model expects " +
              std::to_string(cfg.variables));
  require(first_ < last_ && last_ <= series_.steps(), ErrorCode::InvalidArgument, "invalid training range");
  lead_ = lead_steps(series_, plan_.lead_time_hours);
  require(last_ - first_ > lead_, ErrorCode::EmptySeries,
          "training range of " + std::to_string(last_ - first_) + " samples has no pairs at lead " +
              std::to_string(lead_));
  pairs_ = last_ - first_ - lead_;
  if (mode_ == TrainMode::Regional) {
    canonical_crops(cfg.image_height, cfg.image_width, plan_.split, cfg.patch);
  }
  const std::size_t crops = mode_ == TrainMode::Regional ? plan_.split * plan_.split : 1;
  examples_per_epoch_ = pairs_ * crops;
  steps_per_epoch_ = (examples_per_epoch_ + plan_.batch_size - 1) / plan_.batch_size;
  weights_ = latitude_weights(series_.latitudes);
  schedule_ = make_schedule(plan_, steps_per_epoch_);
  opt_ = OptimState::for_store(model_.params());
  ledger_.parameters = model_.params().total_count();
  ledger_.reset_grid(cfg.image_height, cfg.image_width);
}

std::vector<Example> Trainer::epoch_examples(std::size_t epoch) const {
  const ModelConfig& cfg = model_.config();
  const Region full{0, 0, cfg.image_height, cfg.image_width};
  std::vector<Example> out;
  out.reserve(examples_per_epoch_);
  if (mode_ == TrainMode::Global) {
    for (std::size_t t = 0; t < pairs_; ++t) out.push_back({first_ + t, full});
  } else if (plan_.crop_mode == CropMode::Canonical) {
    const auto crops = canonical_crops(cfg.image_height, cfg.image_width, plan_.split, cfg.patch);
    for (std::size_t t = 0; t < pairs_; ++t) {
      for (const Region& r : crops) out.push_back({first_ + t, r});
    }
  } else {
    const std::uint64_t base = mix_seed(mix_seed(plan_.seed, epoch), 0x63726f70ULL);
    const std::size_t per_pair = plan_.split * plan_.split;
    for (std::size_t t = 0; t < pairs_; ++t) {
      for (std::size_t k = 0; k < per_pair; ++k) {
        const Region r = random_crop(cfg.image_height, cfg.image_width, plan_.split, cfg.patch,
                                     mix_seed(base, t * per_pair + k));
        out.push_back({first_ + t, r});
      }
    }
  }
  Rng rng(mix_seed(plan_.seed, epoch));
  for (std::size_t i = out.size(); i > 1; --i) {
    std::swap(out[i - 1], out[rng.below(i)]);
  }
  return out;
}

double Trainer::step() {
  require(!finished(), ErrorCode::InvalidArgument, "training already finished");
  if (current_epoch_ != state_.epoch) {
    current_ = epoch_examples(state_.epoch);
    current_epoch_ = state_.epoch;
  }
  const std::size_t begin = state_.batch * plan_.batch_size;
  const std::size_t count = std::min(plan_.batch_size, current_.size() - begin);
  const std::span<const Example> examples(current_.data() + begin, count);
  const Batch batch = assemble_batch(series_, examples, lead_, model_.config(), weights_);
  const double lr = lr_at(state_.global_step, schedule_);
  const double loss = train_step(model_, opt_, plan_, batch, lr, mix_seed(plan_.seed ^ 0x5354455053ULL, state_.global_step));
  for (const Example& e : examples) ledger_.record(e.region, model_.config());
  ++ledger_.optimizer_steps;
  if (log_ != nullptr) {
    json line{{"step", state_.global_step}, {"epoch", state_.epoch}, {"batch", state_.batch},
              {"lr", lr},                   {"loss", loss},          {"examples", count}};
    *log_ << line.dump() << '\n';
  }
  ++state_.global_step;
  if (++state_.batch >= steps_per_epoch_) {
    state_.batch = 0;
    ++state_.epoch;
  }
  return loss;
}

EpochStats Trainer::run_epoch() {
  EpochStats stats;
  stats.epoch = state_.epoch;
  const CostLedger before = ledger_;
  double total = 0.0;
  const std::size_t epoch = state_.epoch;
  while (!finished() && state_.epoch == epoch) {
    total += step();
    ++stats.steps;
  }
  stats.mean_loss = stats.steps ? total / static_cast<double>(stats.steps) : 0.0;
  stats.ledger = ledger_;
  stats.ledger.optimizer_steps -= before.optimizer_steps;
  stats.ledger.forward_passes -= before.forward_passes;
  stats.ledger.tokens -= before.tokens;
  stats.ledger.attention_entries -= before.attention_entries;
  stats.ledger.mixing_entries -= before.mixing_entries;
  for (std::size_t i = 0; i < stats.ledger.cell_visits.size(); ++i) {
    stats.ledger.cell_visits[i] -= before.cell_visits[i];
  }
  return stats;
}

std::vector<double> Trainer::run(std::size_t max_steps) {
  std::vector<double> losses;
  while (!finished() && losses.size() < max_steps) losses.push_back(step());
  return losses;
}

void Trainer::restore(const TrainerState& state, OptimState opt) {
  require(state.batch < steps_per_epoch_ || state.batch == 0, ErrorCode::ConfigMismatch,
          "checkpoint batch index " + std::to_string(state.batch) + " exceeds " + std::to_string(steps_per_epoch_) +
              " steps per epoch");
  require(opt.first.size() == model_.params().size(), ErrorCode::ConfigMismatch,
          "optimizer state does not match the model parameters");
  state_ = state;
  opt_ = std::move(opt);
}

namespace {

EpochStats one_epoch(Model& model, OptimState& opt, const TrainPlan& plan, const GridSeries& series,
                     std::size_t first, std::size_t last, std::size_t epoch, TrainMode mode) {
  Trainer trainer(model, plan, series, first, last, mode);
  trainer.restore({epoch, 0, epoch * trainer.steps_per_epoch()}, std::move(opt));
  EpochStats stats = trainer.run_epoch();
  opt = trainer.optimizer();
  return stats;
}

}  // namespace

EpochStats global_train_epoch(Model& model, OptimState& opt, const TrainPlan& plan, const GridSeries& series,
                              std::size_t first, std::size_t last, std::size_t epoch) {
  return one_epoch(model, opt, plan, series, first, last, epoch, TrainMode::Global);
}

EpochStats regional_train_epoch(Model& model, OptimState& opt, const TrainPlan& plan, const GridSeries& series,
                                std::size_t first, std::size_t last, std::size_t epoch) {
  return one_epoch(model, opt, plan, series, first, last, epoch, TrainMode::Regional);
}

// ---- checkpoints --------------------------------------------------------------

namespace {

void write_blob(std::ostream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

void read_blob(std::istream& in, Tensor& t, const std::string& what) {
  in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  require(static_cast<std::size_t>(in.gcount()) == t.size() * sizeof(double), ErrorCode::PayloadTruncated,
          what + ": expected " + std::to_string(t.size() * sizeof(double)) + " bytes, got " +
              std::to_string(in.gcount()));
}

json read_header(std::istream& in, const std::string& path) {
  char magic[4] = {};
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, kCheckpointMagic, 4) == 0, ErrorCode::BadMagic,
          "'" + path + "' does not start with VTXC");
  const int version = in.get();
  require(version == kCheckpointVersion, ErrorCode::VersionMismatch,
          "checkpoint version " + std::to_string(version) + ", expected " + std::to_string(kCheckpointVersion));
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  require(in.gcount() == sizeof len, ErrorCode::HeaderCorrupt, "header length field is truncated");
  std::string text(len, '\0');
  in.read(text.data(), len);
  require(static_cast<std::uint32_t>(in.gcount()) == len, ErrorCode::HeaderCorrupt,
          "header declares " + std::to_string(len) + " bytes, file has " + std::to_string(in.gcount()));
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::HeaderCorrupt, std::string("checkpoint header is not valid JSON: ") + e.what());
  }
}

CheckpointInfo info_from(const json& j) {
  try {
    CheckpointInfo info;
    info.model = model_config_from_json(j.at("model").dump());
    info.plan = train_plan_from_json(j.at("train").dump());
    const json& s = j.at("state");
    info.state = {s.at("epoch").get<std::size_t>(), s.at("batch").get<std::size_t>(),
                  s.at("global_step").get<std::uint64_t>()};
    info.has_optimizer = j.at("has_optimizer").get<bool>();
    return info;
  } catch (const json::exception& e) {
    fail(ErrorCode::HeaderCorrupt, std::string("checkpoint header: ") + e.what());
  }
}

std::ifstream open_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot open '" + path + "': file not found or unreadable");
  return in;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const TrainPlan& plan, const TrainerState& state,
                     const OptimState* opt) {
  const ParameterStore& store = model.params();
  json params = json::array();
  for (const Parameter& p : store.all()) {
    require(p.materialized(), ErrorCode::InvalidArgument, "parameter '" + p.name + "' is not materialized");
    params.push_back({{"name", p.name}, {"shape", p.shape}});
  }
  json header{{"model", json::parse(to_json(model.config()))},
              {"train", json::parse(to_json(plan))},
              {"state", {{"epoch", state.epoch}, {"batch", state.batch}, {"global_step", state.global_step}}},
              {"has_optimizer", opt != nullptr},
              {"optimizer_step", opt ? opt->step : 0},
              {"parameters", params}};
  const std::string text = header.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::Io, "cannot open '" + tmp + "' for writing");
    out.write(kCheckpointMagic, 4);
    out.put(static_cast<char>(kCheckpointVersion));
    const auto len = static_cast<std::uint32_t>(text.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const Parameter& p : store.all()) write_blob(out, p.value);
    if (opt != nullptr) {
      require(opt->first.size() == store.size(), ErrorCode::ShapeMismatch, "optimizer state does not match the model");
      for (const Tensor& t : opt->first) write_blob(out, t);
      for (const Tensor& t : opt->second) write_blob(out, t);
    }
    require(out.good(), ErrorCode::Io, "write to '" + tmp + "' failed");
  }
  require(std::rename(tmp.c_str(), path.c_str()) == 0, ErrorCode::Io, "cannot move checkpoint into '" + path + "'");
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream in = open_checkpoint(path);
  return info_from(read_header(in, path));
}

CheckpointInfo load_checkpoint(const std::string& path, Model& model, OptimState* opt) {
  std::ifstream in = open_checkpoint(path);
  const json header = read_header(in, path);
  CheckpointInfo info = info_from(header);
  const json stored = json::parse(to_json(info.model));
  const json current = json::parse(to_json(model.config()));
  for (auto it = current.begin(); it != current.end(); ++it) {
    require(stored.contains(it.key()) && stored.at(it.key()) == it.value(), ErrorCode::ConfigMismatch,
            "checkpoint model." + it.key() + " = " + (stored.contains(it.key()) ? stored.at(it.key()).dump() : "?") +
                ", current model has " + it.value().dump());
  }
  ParameterStore& store = model.params();
  const json& params = header.at("parameters");
  require(params.size() == store.size(), ErrorCode::ConfigMismatch,
          "checkpoint has " + std::to_string(params.size()) + " parameters, model has " + std::to_string(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    Parameter& p = store.all()[i];
    const auto name = params[i].at("name").get<std::string>();
    const auto shape = params[i].at("shape").get<Shape>();
    require(name == p.name && shape == p.shape, ErrorCode::ConfigMismatch,
            "checkpoint parameter " + name + " " + shape_str(shape) + " vs model " + p.name + " " + shape_str(p.shape));
  }
  for (Parameter& p : store.all()) {
    Tensor value(p.shape);
    read_blob(in, value, "parameter '" + p.name + "'");
    p.value = std::move(value);
  }
  if (opt != nullptr) {
    require(info.has_optimizer, ErrorCode::ConfigMismatch, "checkpoint carries no optimizer state");
    OptimState s = OptimState::for_store(store);
    for (std::size_t i = 0; i < store.size(); ++i) read_blob(in, s.first[i], "first moment " + store.all()[i].name);
    for (std::size_t i = 0; i < store.size(); ++i) read_blob(in, s.second[i], "second moment " + store.all()[i].name);
    s.step = header.at("optimizer_step").get<std::uint64_t>();
    *opt = std::move(s);
  }
  return info;
}

Model load_model(const std::string& path) {
  const CheckpointInfo info = read_checkpoint_info(path);
  Model model(info.model, 0);
  load_checkpoint(path, model);
  return model;
}

}  // namespace vartex
