#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vartex/autodiff.hpp"
#include "vartex/config.hpp"
#include "vartex/grid.hpp"
#include "vartex/parameters.hpp"

namespace vartex {

// ---- token layout --------------------------------------------------------------

/// [B, V, H, W] -> [B, N, V, p*p] with row-major patches and row-major pixels.
Tensor patchify(const Tensor& fields, std::size_t patch);
/// Inverse of patchify: [B, N, V, p*p] -> [B, V, H, W].
Tensor unpatchify(const Tensor& patches, std::size_t height, std::size_t width, std::size_t patch);
/// Differentiable [B, N, C*p*p] -> [B, C, H, W] used by the prediction head.
nn::Var unpatchify(nn::Var tokens, std::size_t channels, std::size_t height, std::size_t width, std::size_t patch);

/// Absolute token index of every token of `region` on a grid `grid_width` cells wide.
std::vector<std::size_t> token_indices(const Region& region, std::size_t grid_width, std::size_t patch);

// ---- parameters ----------------------------------------------------------------

/// Declares every parameter of the architecture, in a fixed order.
void declare_parameters(const ModelConfig& config, ParameterStore& store);

struct ParameterCensus {
  std::map<std::string, std::uint64_t> groups;  // embedding, aggregation, spatial, mixing, head
  std::uint64_t total = 0;
};

/// Closed-form parameter count from the config alone.
ParameterCensus count_parameters(const ModelConfig& config);
/// Independent census: walks the declared store and buckets names by group.
ParameterCensus census_of(const ParameterStore& store);

/// Binds store parameters into one graph, once each.
class Binder {
 public:
  Binder(nn::Graph& graph, ParameterStore& store) : graph_(graph), store_(store) {}
  nn::Var operator()(const std::string& name);
  nn::Graph& graph() { return graph_; }

 private:
  nn::Graph& graph_;
  ParameterStore& store_;
  std::unordered_map<std::string, nn::Var> bound_;
};

struct EncoderLayerParams {
  nn::Var norm1_gain, norm1_bias, qkv_weight, qkv_bias, proj_weight, proj_bias;
  nn::Var norm2_gain, norm2_bias, fc1_weight, fc1_bias, fc2_weight, fc2_bias;

  static EncoderLayerParams bind(Binder& bind, const std::string& prefix);
};

struct AggregationParams {
  nn::Var query, key_weight, value_weight;
  static AggregationParams bind(Binder& bind, const std::string& prefix);
};

// ---- forward stages --------------------------------------------------------------

/// Per-variable patch embedding + variable embedding + absolute positional
/// embedding. patches [B, n, V, p*p], token_index [B*n] -> [B, n, V, width].
nn::Var embed_variables(Binder& bind, const Tensor& patches, std::span<const std::size_t> token_index,
                        const ModelConfig& config);

/// Contiguous equal slices of the trailing axis.
std::vector<nn::Var> split_streams(nn::Var tokens, std::size_t representatives);

/// Cross attention with a trainable query over the variable axis at every
/// token: stream [..., V, d] -> [..., d]. Scale is 1/sqrt(d).
nn::Var aggregate_variables(nn::Var stream, const AggregationParams& params, Tensor* weights_out = nullptr);

/// Pre-norm transformer layer; attention runs over axis -2 within every
/// leading index, drop_path drops leading-axis samples.
nn::Var encoder_layer(nn::Var x, const EncoderLayerParams& p, std::size_t heads, double drop_rate,
                      double drop_path_rate, nn::ForwardContext& ctx);

/// Self-attention over the N tokens of one stream [B, N, d].
nn::Var spatial_block(nn::Var stream, const EncoderLayerParams& p, std::size_t heads, double drop_rate,
                      double drop_path_rate, nn::ForwardContext& ctx);

/// At every token position, attention across the R stream vectors.
std::vector<nn::Var> mixing_block(std::span<const nn::Var> streams, const EncoderLayerParams& p, std::size_t heads,
                                  double drop_rate, double drop_path_rate, nn::ForwardContext& ctx);

struct EncoderTrace {
  std::size_t spatial_passes = 0;
  std::size_t mixing_passes = 0;
};

std::vector<nn::Var> encoder_forward(Binder& bind, std::vector<nn::Var> streams, const ModelConfig& config,
                                     nn::ForwardContext& ctx, EncoderTrace* trace = nullptr);

/// Final per-stream norm, concatenation, MLP head and unpatchify: -> [B, V_out, h, w].
nn::Var prediction_head(Binder& bind, std::span<const nn::Var> streams, const ModelConfig& config, std::size_t height,
                        std::size_t width, nn::ForwardContext& ctx);

std::string spatial_prefix(const ModelConfig& config, std::size_t block, std::size_t stream);
std::string mixing_prefix(std::size_t index);

/// The network plus its parameters.
class Model {
 public:
  /// Declares and initializes all parameters from `seed`.
  Model(ModelConfig config, std::uint64_t seed);
  /// Declares shapes only (no allocation); usable for counting.
  static Model declared(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore& params() noexcept { return store_; }
  const ParameterStore& params() const noexcept { return store_; }

  /// fields [B, V, h, w] (standardized), one region per sample giving the
  /// absolute placement used for positional embeddings. Returns [B, V_out, h, w].
  nn::Var forward(nn::Graph& graph, const Tensor& fields, std::span<const Region> regions, nn::ForwardContext& ctx);

  /// Eval-mode forecast for one [V, h, w] field placed at `region`.
  Tensor predict(const Tensor& field, const Region& region);

 private:
  explicit Model(ModelConfig config);
  ModelConfig config_;
  ParameterStore store_;
};

}  // namespace vartex
