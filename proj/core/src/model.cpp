#include "vartex/model.hpp"

#include <cmath>

#include "vartex/error.hpp"

namespace vartex {

using nn::Var;

Tensor patchify(const Tensor& fields, std::size_t patch) {
  require(fields.rank() == 4, ErrorCode::ShapeMismatch, "patchify expects [B, V, H, W], got " + shape_str(fields.shape()));
  const std::size_t b = fields.dim(0), v = fields.dim(1), h = fields.dim(2), w = fields.dim(3);
  require(patch >= 1 && h % patch == 0 && w % patch == 0, ErrorCode::IndivisibleGrid,
          std::to_string(h) + "x" + std::to_string(w) + " grid is not divisible by patch " + std::to_string(patch));
  const std::size_t th = h / patch, tw = w / patch, pp = patch * patch;
  Tensor out({b, th * tw, v, pp});
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t ti = 0; ti < th; ++ti)
      for (std::size_t tj = 0; tj < tw; ++tj)
        for (std::size_t c = 0; c < v; ++c)
          for (std::size_t pi = 0; pi < patch; ++pi)
            for (std::size_t pj = 0; pj < patch; ++pj)
              out[(((s * th * tw) + ti * tw + tj) * v + c) * pp + pi * patch + pj] =
                  fields[((s * v + c) * h + ti * patch + pi) * w + tj * patch + pj];
  return out;
}

Tensor unpatchify(const Tensor& patches, std::size_t height, std::size_t width, std::size_t patch) {
  require(patches.rank() == 4 && patch >= 1 && height % patch == 0 && width % patch == 0, ErrorCode::ShapeMismatch,
          "unpatchify: bad shape " + shape_str(patches.shape()));
  const std::size_t b = patches.dim(0), n = patches.dim(1), v = patches.dim(2), pp = patches.dim(3);
  const std::size_t th = height / patch, tw = width / patch;
  require(n == th * tw && pp == patch * patch, ErrorCode::ShapeMismatch,
          "unpatchify: " + shape_str(patches.shape()) + " does not tile " + std::to_string(height) + "x" + std::to_string(width));
  Tensor out({b, v, height, width});
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t ti = 0; ti < th; ++ti)
      for (std::size_t tj = 0; tj < tw; ++tj)
        for (std::size_t c = 0; c < v; ++c)
          for (std::size_t pi = 0; pi < patch; ++pi)
            for (std::size_t pj = 0; pj < patch; ++pj)
              out[((s * v + c) * height + ti * patch + pi) * width + tj * patch + pj] =
                  patches[(((s * n) + ti * tw + tj) * v + c) * pp + pi * patch + pj];
  return out;
}

Var unpatchify(Var tokens, std::size_t channels, std::size_t height, std::size_t width, std::size_t patch) {
  const Shape& s = tokens.shape();
  const std::size_t th = height / patch, tw = width / patch, pp = patch * patch;
  require(s.size() == 3 && s[1] == th * tw && s[2] == channels * pp && height % patch == 0 && width % patch == 0,
          ErrorCode::ShapeMismatch, "head output " + shape_str(s) + " does not tile a " + std::to_string(channels) + "x" +
                                        std::to_string(height) + "x" + std::to_string(width) + " field");
  const std::size_t b = s[0];
  std::vector<std::size_t> index(b * channels * height * width);
  for (std::size_t sb = 0; sb < b; ++sb)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t r = 0; r < height; ++r)
        for (std::size_t col = 0; col < width; ++col) {
          const std::size_t token = (r / patch) * tw + col / patch;
          const std::size_t inner = c * pp + (r % patch) * patch + col % patch;
          index[((sb * channels + c) * height + r) * width + col] = (sb * th * tw + token) * channels * pp + inner;
        }
  return nn::gather(tokens, std::move(index), {b, channels, height, width});
}

std::vector<std::size_t> token_indices(const Region& region, std::size_t grid_width, std::size_t patch) {
  require(region.row_off % patch == 0 && region.col_off % patch == 0 && region.height % patch == 0 &&
              region.width % patch == 0,
          ErrorCode::IndivisibleGrid, "region is not aligned to patch size " + std::to_string(patch));
  const std::size_t tw = grid_width / patch;
  std::vector<std::size_t> out;
  out.reserve((region.height / patch) * (region.width / patch));
  for (std::size_t i = 0; i < region.height / patch; ++i)
    for (std::size_t j = 0; j < region.width / patch; ++j)
      out.push_back((region.row_off / patch + i) * tw + region.col_off / patch + j);
  return out;
}

namespace {

void declare_layer(ParameterStore& store, const std::string& prefix, std::size_t d, std::size_t mlp_ratio,
                   bool zero_init_residual) {
  const std::size_t hidden = d * mlp_ratio;
  const Init out_init = zero_init_residual ? Init::Zeros : Init::TruncatedNormal;
  store.declare(prefix + ".norm1.gain", {d}, Init::Ones);
  store.declare(prefix + ".norm1.bias", {d}, Init::Zeros);
  store.declare(prefix + ".qkv.weight", {d, 3 * d}, Init::TruncatedNormal);
  store.declare(prefix + ".qkv.bias", {3 * d}, Init::Zeros);
  store.declare(prefix + ".proj.weight", {d, d}, out_init);
  store.declare(prefix + ".proj.bias", {d}, Init::Zeros);
  store.declare(prefix + ".norm2.gain", {d}, Init::Ones);
  store.declare(prefix + ".norm2.bias", {d}, Init::Zeros);
  store.declare(prefix + ".fc1.weight", {d, hidden}, Init::TruncatedNormal);
  store.declare(prefix + ".fc1.bias", {hidden}, Init::Zeros);
  store.declare(prefix + ".fc2.weight", {hidden, d}, out_init);
  store.declare(prefix + ".fc2.bias", {d}, Init::Zeros);
}

std::uint64_t layer_count(std::uint64_t d, std::uint64_t mlp_ratio) {
  const std::uint64_t hidden = d * mlp_ratio;
  return 2 * d + (3 * d * d + 3 * d) + (d * d + d) + 2 * d + (d * hidden + hidden) + (hidden * d + d);
}

std::string group_of(const std::string& name) {
  const std::string prefix = name.substr(0, name.find('.'));
  if (prefix == "embed") return "embedding";
  if (prefix == "agg") return "aggregation";
  if (prefix == "spatial") return "spatial";
  if (prefix == "mixing") return "mixing";
  if (prefix == "head") return "head";
  return prefix;
}

}  // namespace

std::string spatial_prefix(const ModelConfig& config, std::size_t block, std::size_t stream) {
  return "spatial." + std::to_string(block) + "." + (config.share_spatial_weights ? std::string("shared") : std::to_string(stream));
}

std::string mixing_prefix(std::size_t index) { return "mixing." + std::to_string(index); }

void declare_parameters(const ModelConfig& config, ParameterStore& store) {
  config.validate();
  const std::size_t v = config.variables;
  const std::size_t pp = config.patch * config.patch;
  const std::size_t width = config.token_width();
  const std::size_t d = config.stream_width();
  const std::size_t r = config.representatives;

  store.declare("embed.patch_weight", {v, pp, width}, Init::TruncatedNormal);
  store.declare("embed.patch_bias", {v, width}, Init::Zeros);
  store.declare("embed.var_embed", {v, width}, Init::TruncatedNormal);
  store.declare("embed.pos_embed", {config.grid_tokens(), width}, Init::TruncatedNormal);

  for (std::size_t k = 0; k < r; ++k) {
    const std::string p = "agg." + std::to_string(k);
    store.declare(p + ".query", {d}, Init::TruncatedNormal);
    store.declare(p + ".key_weight", {d, d}, Init::TruncatedNormal);
    store.declare(p + ".value_weight", {d, d}, Init::TruncatedNormal);
  }

  for (std::size_t b = 0; b < config.blocks; ++b) {
    const std::size_t copies = config.share_spatial_weights ? 1 : r;
    for (std::size_t k = 0; k < copies; ++k)
      declare_layer(store, spatial_prefix(config, b, k), d, config.mlp_ratio, config.zero_init_residual);
  }
  for (std::size_t m = 0; m < config.mixing_blocks(); ++m)
    declare_layer(store, mixing_prefix(m), d, config.mlp_ratio, config.zero_init_residual);

  for (std::size_t k = 0; k < r; ++k) {
    store.declare("head.norm." + std::to_string(k) + ".gain", {d}, Init::Ones);
    store.declare("head.norm." + std::to_string(k) + ".bias", {d}, Init::Zeros);
  }
  std::size_t in = width;
  for (std::size_t i = 0; i < config.head_depth; ++i) {
    store.declare("head.hidden." + std::to_string(i) + ".weight", {in, config.head_hidden}, Init::TruncatedNormal);
    store.declare("head.hidden." + std::to_string(i) + ".bias", {config.head_hidden}, Init::Zeros);
    in = config.head_hidden;
  }
  const std::size_t out = config.out_variables() * pp;
  store.declare("head.out.weight", {in, out}, Init::TruncatedNormal);
  store.declare("head.out.bias", {out}, Init::Zeros);
}

ParameterCensus count_parameters(const ModelConfig& config) {
  config.validate();
  const std::uint64_t v = config.variables;
  const std::uint64_t pp = config.patch * config.patch;
  const std::uint64_t width = config.token_width();
  const std::uint64_t d = config.stream_width();
  const std::uint64_t r = config.representatives;

  ParameterCensus c;
  c.groups["embedding"] = v * pp * width + v * width + v * width + config.grid_tokens() * width;
  c.groups["aggregation"] = r * (d + 2 * d * d);
  c.groups["spatial"] = config.blocks * (config.share_spatial_weights ? 1 : r) * layer_count(d, config.mlp_ratio);
  c.groups["mixing"] = config.mixing_blocks() * layer_count(d, config.mlp_ratio);
  std::uint64_t head = r * 2 * d;
  std::uint64_t in = width;
  for (std::size_t i = 0; i < config.head_depth; ++i) {
    head += in * config.head_hidden + config.head_hidden;
    in = config.head_hidden;
  }
  const std::uint64_t out = config.out_variables() * pp;
  head += in * out + out;
  c.groups["head"] = head;
  for (const auto& [_, n] : c.groups) c.total += n;
  return c;
}

ParameterCensus census_of(const ParameterStore& store) {
  ParameterCensus c;
  for (const char* g : {"embedding", "aggregation", "spatial", "mixing", "head"}) c.groups[g] = 0;
  for (const Parameter& p : store.all()) {
    c.groups[group_of(p.name)] += p.count();
    c.total += p.count();
  }
  return c;
}

Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = graph_.param(store_.at(name));
  bound_.emplace(name, v);
  return v;
}

EncoderLayerParams EncoderLayerParams::bind(Binder& b, const std::string& prefix) {
  return {b(prefix + ".norm1.gain"), b(prefix + ".norm1.bias"), b(prefix + ".qkv.weight"), b(prefix + ".qkv.bias"),
          b(prefix + ".proj.weight"), b(prefix + ".proj.bias"), b(prefix + ".norm2.gain"), b(prefix + ".norm2.bias"),
          b(prefix + ".fc1.weight"),  b(prefix + ".fc1.bias"),  b(prefix + ".fc2.weight"),  b(prefix + ".fc2.bias")};
}

AggregationParams AggregationParams::bind(Binder& b, const std::string& prefix) {
  return {b(prefix + ".query"), b(prefix + ".key_weight"), b(prefix + ".value_weight")};
}

Var embed_variables(Binder& bind, const Tensor& patches, std::span<const std::size_t> token_index,
                    const ModelConfig& config) {
  require(patches.rank() == 4, ErrorCode::ShapeMismatch, "patches must be [B, n, V, p*p]");
  const std::size_t b = patches.dim(0), n = patches.dim(1), v = patches.dim(2), pp = patches.dim(3);
  require(v == config.variables, ErrorCode::VariableCountMismatch,
          "input has " + std::to_string(v) + " variables, model expects " + std::to_string(config.variables));
  require(pp == config.patch * config.patch, ErrorCode::ShapeMismatch, "patch length mismatch");
  require(token_index.size() == b * n, ErrorCode::ShapeMismatch, "one token index per token is required");
  const std::size_t width = config.token_width();
  const std::size_t grid_tokens = config.grid_tokens();
  for (std::size_t t : token_index)
    require(t < grid_tokens, ErrorCode::ShapeMismatch, "token index " + std::to_string(t) + " outside the grid");

  Var weight = bind("embed.patch_weight");
  Var bias = bind("embed.patch_bias");
  Var var_embed = bind("embed.var_embed");
  Var pos = bind("embed.pos_embed");
  const double* wp = weight.value().data();
  const double* bp = bias.value().data();
  const double* ep = var_embed.value().data();
  const double* posp = pos.value().data();

  Tensor out({b, n, v, width});
  for (std::size_t t = 0; t < b * n; ++t) {
    const double* prow = posp + token_index[t] * width;
    for (std::size_t c = 0; c < v; ++c) {
      double* y = out.data() + (t * v + c) * width;
      const double* x = patches.data() + (t * v + c) * pp;
      for (std::size_t o = 0; o < width; ++o) y[o] = bp[c * width + o] + ep[c * width + o] + prow[o];
      for (std::size_t i = 0; i < pp; ++i) {
        const double xi = x[i];
        const double* wr = wp + (c * pp + i) * width;
        for (std::size_t o = 0; o < width; ++o) y[o] += xi * wr[o];
      }
    }
  }
  std::vector<std::size_t> index(token_index.begin(), token_index.end());
  return bind.graph().make(std::move(out), {weight, bias, var_embed, pos},
                           [weight, bias, var_embed, pos, patches, index = std::move(index), v, pp, width](nn::Graph& g, std::size_t self) {
    const double* dy = g.grad(self).data();
    const std::size_t tokens = index.size();
    if (weight.requires_grad()) {
      double* dw = g.grad_buffer(weight.id()).data();
      for (std::size_t t = 0; t < tokens; ++t)
        for (std::size_t c = 0; c < v; ++c) {
          const double* x = patches.data() + (t * v + c) * pp;
          const double* dyr = dy + (t * v + c) * width;
          for (std::size_t i = 0; i < pp; ++i) {
            double* dwr = dw + (c * pp + i) * width;
            for (std::size_t o = 0; o < width; ++o) dwr[o] += x[i] * dyr[o];
          }
        }
    }
    auto per_variable = [&](Var target) {
      if (!target.requires_grad()) return;
      double* dt = g.grad_buffer(target.id()).data();
      for (std::size_t t = 0; t < tokens; ++t)
        for (std::size_t c = 0; c < v; ++c)
          for (std::size_t o = 0; o < width; ++o) dt[c * width + o] += dy[(t * v + c) * width + o];
    };
    per_variable(bias);
    per_variable(var_embed);
    if (pos.requires_grad()) {
      double* dp = g.grad_buffer(pos.id()).data();
      for (std::size_t t = 0; t < tokens; ++t)
        for (std::size_t c = 0; c < v; ++c)
          for (std::size_t o = 0; o < width; ++o) dp[index[t] * width + o] += dy[(t * v + c) * width + o];
    }
  });
}

std::vector<Var> split_streams(Var tokens, std::size_t representatives) {
  const std::size_t width = tokens.value().last_dim();
  require(representatives >= 1 && width % representatives == 0, ErrorCode::ShapeMismatch,
          "width " + std::to_string(width) + " is not divisible into " + std::to_string(representatives) + " streams");
  if (representatives == 1) return {tokens};
  const std::size_t d = width / representatives;
  std::vector<Var> out;
  for (std::size_t k = 0; k < representatives; ++k) out.push_back(nn::slice_last(tokens, k * d, d));
  return out;
}

Var aggregate_variables(Var stream, const AggregationParams& p, Tensor* weights_out) {
  const std::size_t d = stream.value().last_dim();
  require(p.key_weight.shape() == Shape{d, d} && p.value_weight.shape() == Shape{d, d}, ErrorCode::ShapeMismatch,
          "aggregation weights must be [" + std::to_string(d) + ", " + std::to_string(d) + "]");
  Var keys = nn::linear(stream, p.key_weight);
  Var values = nn::linear(stream, p.value_weight);
  return nn::query_pool(p.query, keys, values, 1.0 / std::sqrt(static_cast<double>(d)), weights_out);
}

Var encoder_layer(Var x, const EncoderLayerParams& p, std::size_t heads, double drop_rate, double drop_path_rate,
                  nn::ForwardContext& ctx) {
  const std::size_t d = x.value().last_dim();
  Var y = nn::layer_norm(x, p.norm1_gain, p.norm1_bias);
  Var qkv = nn::linear(y, p.qkv_weight, p.qkv_bias);
  Var att = nn::attention(nn::slice_last(qkv, 0, d), nn::slice_last(qkv, d, d), nn::slice_last(qkv, 2 * d, d), heads);
  att = nn::dropout(nn::linear(att, p.proj_weight, p.proj_bias), drop_rate, ctx);
  x = nn::add(x, nn::drop_path(att, drop_path_rate, ctx));

  y = nn::layer_norm(x, p.norm2_gain, p.norm2_bias);
  Var m = nn::dropout(nn::gelu(nn::linear(y, p.fc1_weight, p.fc1_bias)), drop_rate, ctx);
  m = nn::dropout(nn::linear(m, p.fc2_weight, p.fc2_bias), drop_rate, ctx);
  return nn::add(x, nn::drop_path(m, drop_path_rate, ctx));
}

Var spatial_block(Var stream, const EncoderLayerParams& p, std::size_t heads, double drop_rate, double drop_path_rate,
                  nn::ForwardContext& ctx) {
  require(stream.value().rank() == 3, ErrorCode::ShapeMismatch, "spatial block expects [B, N, d]");
  return encoder_layer(stream, p, heads, drop_rate, drop_path_rate, ctx);
}

std::vector<Var> mixing_block(std::span<const Var> streams, const EncoderLayerParams& p, std::size_t heads,
                              double drop_rate, double drop_path_rate, nn::ForwardContext& ctx) {
  require(!streams.empty(), ErrorCode::ShapeMismatch, "mixing block needs at least one stream");
  const Shape s = streams[0].shape();
  require(s.size() == 3, ErrorCode::ShapeMismatch, "mixing block expects streams of shape [B, N, d]");
  const std::size_t r = streams.size();
  const std::size_t d = s[2];
  // [B, N, R*d] has the same layout as [B, N, R, d].
  Var stacked = nn::reshape(nn::concat_last(streams), {s[0], s[1], r, d});
  Var mixed = encoder_layer(stacked, p, heads, drop_rate, drop_path_rate, ctx);
  return split_streams(nn::reshape(mixed, {s[0], s[1], r * d}), r);
}

std::vector<Var> encoder_forward(Binder& bind, std::vector<Var> streams, const ModelConfig& config,
                                 nn::ForwardContext& ctx, EncoderTrace* trace) {
  require(streams.size() == config.representatives, ErrorCode::ShapeMismatch,
          std::to_string(streams.size()) + " streams for " + std::to_string(config.representatives) + " representatives");
  std::size_t mixing_index = 0;
  for (std::size_t b = 0; b < config.blocks; ++b) {
    for (std::size_t k = 0; k < streams.size(); ++k) {
      const EncoderLayerParams p = EncoderLayerParams::bind(bind, spatial_prefix(config, b, k));
      streams[k] = spatial_block(streams[k], p, config.heads, config.drop_rate, config.drop_path, ctx);
      if (trace) ++trace->spatial_passes;
    }
    if (config.use_mixing && (b + 1) % config.mixing_interval == 0) {
      const EncoderLayerParams p = EncoderLayerParams::bind(bind, mixing_prefix(mixing_index++));
      streams = mixing_block(streams, p, config.heads, config.drop_rate, config.drop_path, ctx);
      if (trace) ++trace->mixing_passes;
    }
  }
  return streams;
}

Var prediction_head(Binder& bind, std::span<const Var> streams, const ModelConfig& config, std::size_t height,
                    std::size_t width, nn::ForwardContext& ctx) {
  require(streams.size() == config.representatives, ErrorCode::ShapeMismatch, "prediction head: stream count mismatch");
  std::vector<Var> normed;
  for (std::size_t k = 0; k < streams.size(); ++k) {
    const std::string p = "head.norm." + std::to_string(k);
    normed.push_back(nn::layer_norm(streams[k], bind(p + ".gain"), bind(p + ".bias")));
  }
  Var x = normed.size() == 1 ? normed[0] : nn::concat_last(normed);
  for (std::size_t i = 0; i < config.head_depth; ++i) {
    const std::string p = "head.hidden." + std::to_string(i);
    x = nn::dropout(nn::gelu(nn::linear(x, bind(p + ".weight"), bind(p + ".bias"))), config.drop_rate, ctx);
  }
  x = nn::linear(x, bind("head.out.weight"), bind("head.out.bias"));
  return unpatchify(x, config.out_variables(), height, width, config.patch);
}

Model::Model(ModelConfig config) : config_(std::move(config)) { declare_parameters(config_, store_); }

Model::Model(ModelConfig config, std::uint64_t seed) : Model(std::move(config)) { store_.materialize(seed); }

Model Model::declared(ModelConfig config) { return Model(std::move(config)); }

Var Model::forward(nn::Graph& graph, const Tensor& fields, std::span<const Region> regions, nn::ForwardContext& ctx) {
  require(fields.rank() == 4, ErrorCode::ShapeMismatch, "forward expects [B, V, h, w], got " + shape_str(fields.shape()));
  const std::size_t b = fields.dim(0), h = fields.dim(2), w = fields.dim(3);
  require(fields.dim(1) == config_.variables, ErrorCode::VariableCountMismatch,
          "input has " + std::to_string(fields.dim(1)) + " variables, model expects " + std::to_string(config_.variables));
  require(regions.size() == b, ErrorCode::ShapeMismatch, "one region per sample is required");
  std::vector<std::size_t> index;
  for (const Region& r : regions) {
    require(r.height == h && r.width == w, ErrorCode::ShapeMismatch, "region size differs from the input field");
    require(r.row_off + r.height <= config_.image_height && r.col_off + r.width <= config_.image_width,
            ErrorCode::ShapeMismatch, "region exceeds the model grid");
    const auto t = token_indices(r, config_.image_width, config_.patch);
    index.insert(index.end(), t.begin(), t.end());
  }
  Binder bind(graph, store_);
  Var tokens = embed_variables(bind, patchify(fields, config_.patch), index, config_);
  std::vector<Var> parts = split_streams(tokens, config_.representatives);
  std::vector<Var> streams;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const AggregationParams p = AggregationParams::bind(bind, "agg." + std::to_string(k));
    streams.push_back(nn::dropout(aggregate_variables(parts[k], p), config_.drop_rate, ctx));
  }
  streams = encoder_forward(bind, std::move(streams), config_, ctx);
  return prediction_head(bind, streams, config_, h, w, ctx);
}

Tensor Model::predict(const Tensor& field, const Region& region) {
  require(field.rank() == 3, ErrorCode::ShapeMismatch, "predict expects [V, h, w], got " + shape_str(field.shape()));
  nn::Graph graph(false);
  nn::ForwardContext ctx = nn::ForwardContext::eval();
  const Region regions[] = {region};
  Var out = forward(graph, field.reshaped({1, field.dim(0), field.dim(1), field.dim(2)}), regions, ctx);
  const Shape& s = out.shape();
  return out.value().reshaped({s[1], s[2], s[3]});
}

}  // namespace vartex
