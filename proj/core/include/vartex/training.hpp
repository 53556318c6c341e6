#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "vartex/config.hpp"
#include "vartex/grid.hpp"
#include "vartex/metrics.hpp"
#include "vartex/model.hpp"

namespace vartex {

// ---- schedule -----------------------------------------------------------------

/// Linear warmup from 0 to `peak`, then cosine annealing to 0 at `total_steps`.
struct LrSchedule {
  double peak = 0.0;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;
};

double lr_at(std::size_t step, const LrSchedule& schedule);
LrSchedule make_schedule(const TrainPlan& plan, std::size_t steps_per_epoch);

// ---- optimizer ----------------------------------------------------------------

struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;

  static AdamW from(const TrainPlan& plan) { return {plan.beta1, plan.beta2, plan.adam_eps, plan.weight_decay}; }
};

/// First/second moments in parameter declaration order.
struct OptimState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::uint64_t step = 0;

  static OptimState for_store(const ParameterStore& store);
  friend bool operator==(const OptimState&, const OptimState&) = default;
};

/// One decoupled-weight-decay Adam update from the gradients held in `store`.
void adamw_step(ParameterStore& store, OptimState& state, const AdamW& hyper, double lr);

// ---- cost accounting ----------------------------------------------------------

/// Exact integer bookkeeping of the work done by training.
struct CostLedger {
  std::uint64_t parameters = 0;
  std::uint64_t optimizer_steps = 0;
  std::uint64_t forward_passes = 0;  // one per example
  std::uint64_t tokens = 0;
  /// Sum over examples of n_tokens^2: attention-score entries of one spatial layer.
  std::uint64_t attention_entries = 0;
  std::uint64_t spatial_layers = 0;  // spatial attention layers per forward
  std::uint64_t mixing_entries = 0;  // n_tokens * R^2 per example per mixing layer
  std::uint64_t tokens_per_example = 0;
  std::uint64_t entries_per_example = 0;
  std::size_t grid_height = 0;
  std::size_t grid_width = 0;
  std::vector<std::uint32_t> cell_visits;  // [H, W]

  void reset_grid(std::size_t height, std::size_t width);
  void record(const Region& region, const ModelConfig& config);
  /// attention_entries summed over all spatial layers.
  std::uint64_t total_attention_entries() const { return attention_entries * spatial_layers; }
};

struct AttentionCost {
  std::size_t split = 1;
  std::uint64_t crops = 1;
  std::uint64_t tokens_global = 0;
  std::uint64_t tokens_per_crop = 0;
  std::uint64_t entries_global = 0;  // per spatial layer, full grid
  std::uint64_t entries_per_crop = 0;
  std::uint64_t entries_total = 0;  // per spatial layer, summed over crops
  std::uint64_t spatial_layers = 0;
};

/// Analytic attention-score accounting for canonical split training.
AttentionCost attention_cost(const ModelConfig& config, std::size_t split);

// ---- training -----------------------------------------------------------------

struct Example {
  std::size_t input_index = 0;  // target is input_index + lead
  Region region;
};

/// Inputs/targets of one (micro-)batch in standardized units.
struct Batch {
  Tensor inputs;   // [B, V, h, w]
  Tensor targets;  // [B, V_out, h, w]
  std::vector<Region> regions;
  std::vector<double> row_weights;  // [B, h]
};

Batch assemble_batch(const GridSeries& series, std::span<const Example> examples, std::size_t lead,
                     const ModelConfig& config, const LatWeights& weights);

/// Forward + latitude-weighted MSE + backward for one batch, split into
/// `accumulation_steps` micro-batches whose gradients are combined by size
/// before a single AdamW update. Returns the batch loss.
double train_step(Model& model, OptimState& opt, const TrainPlan& plan, const Batch& batch, double lr,
                  std::uint64_t step_seed);

enum class TrainMode { Global, Regional };

struct TrainerState {
  std::size_t epoch = 0;
  std::size_t batch = 0;  // next batch within the epoch
  std::uint64_t global_step = 0;
  friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double mean_loss = 0.0;
  CostLedger ledger;
};

/// Owns the optimization loop over the training pairs (t, t + lead) with both
/// t and t + lead inside [first, last).
class Trainer {
 public:
  Trainer(Model& model, TrainPlan plan, const GridSeries& series, std::size_t first, std::size_t last,
          TrainMode mode = TrainMode::Regional);

  /// Deterministic example order of `epoch`.
  std::vector<Example> epoch_examples(std::size_t epoch) const;
  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  std::size_t total_steps() const { return steps_per_epoch_ * plan_.epochs; }
  bool finished() const { return state_.epoch >= plan_.epochs; }

  /// One optimizer step on the next batch.
  double step();
  /// Runs the rest of the current epoch.
  EpochStats run_epoch();
  /// Runs until `max_steps` more steps were taken or training finished.
  std::vector<double> run(std::size_t max_steps);

  const TrainPlan& plan() const { return plan_; }
  const TrainerState& state() const { return state_; }
  const OptimState& optimizer() const { return opt_; }
  const LrSchedule& schedule() const { return schedule_; }
  const CostLedger& ledger() const { return ledger_; }
  std::size_t lead() const { return lead_; }
  void restore(const TrainerState& state, OptimState opt);
  /// Line-delimited JSON log: one object per optimizer step.
  void set_log(std::ostream* log) { log_ = log; }

 private:
  Model& model_;
  TrainPlan plan_;
  const GridSeries& series_;
  std::size_t first_;
  std::size_t last_;
  TrainMode mode_;
  std::size_t lead_;
  std::size_t pairs_;
  std::size_t examples_per_epoch_;
  std::size_t steps_per_epoch_;
  LatWeights weights_;
  LrSchedule schedule_;
  OptimState opt_;
  TrainerState state_;
  CostLedger ledger_;
  std::vector<Example> current_;
  std::size_t current_epoch_ = static_cast<std::size_t>(-1);
  std::ostream* log_ = nullptr;
};

/// Convenience wrappers over Trainer for a single epoch from a fresh state.
EpochStats global_train_epoch(Model& model, OptimState& opt, const TrainPlan& plan, const GridSeries& series,
                              std::size_t first, std::size_t last, std::size_t epoch = 0);
EpochStats regional_train_epoch(Model& model, OptimState& opt, const TrainPlan& plan, const GridSeries& series,
                                std::size_t first, std::size_t last, std::size_t epoch = 0);

// ---- checkpoints --------------------------------------------------------------

inline constexpr char kCheckpointMagic[4] = {'V', 'T', 'X', 'C'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct CheckpointInfo {
  ModelConfig model;
  TrainPlan plan;
  TrainerState state;
  bool has_optimizer = false;
};

void save_checkpoint(const std::string& path, const Model& model, const TrainPlan& plan, const TrainerState& state,
                     const OptimState* opt);
/// Loads into an existing model; throws ConfigMismatch naming the first
/// differing config field or parameter.
CheckpointInfo load_checkpoint(const std::string& path, Model& model, OptimState* opt = nullptr);
/// Reads only the header.
CheckpointInfo read_checkpoint_info(const std::string& path);
/// Builds a model from the stored config and loads its parameters.
Model load_model(const std::string& path);

}  // namespace vartex
