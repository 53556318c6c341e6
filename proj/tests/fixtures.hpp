#pragma once

#include "vartex/config.hpp"
#include "vartex/grid.hpp"
#include "vartex/model.hpp"

namespace fixture {

/// V=4, 8x8 grid, patch 2, D=16, R=2, two blocks, mixing after every block.
inline vartex::ModelConfig tiny_config() {
  vartex::ModelConfig c;
  c.image_height = 8;
  c.image_width = 8;
  c.patch = 2;
  c.embed_dim = 16;
  c.representatives = 2;
  c.blocks = 2;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.mixing_interval = 1;
  c.head_depth = 1;
  c.head_hidden = 12;
  c.drop_rate = 0.0;
  c.drop_path = 0.0;
  c.variables = 4;
  return c;
}

/// A small standardized synthetic series matching `config`.
inline vartex::GridSeries series_for(const vartex::ModelConfig& config, std::size_t steps, std::uint64_t seed = 3) {
  vartex::SynthConfig s;
  s.variables = config.variables;
  s.height = config.image_height;
  s.width = config.image_width;
  s.steps = steps;
  s.seed = seed;
  return vartex::prepare_series(vartex::generate_synthetic(s));
}

/// Plan with short epochs used by training tests.
inline vartex::TrainPlan quick_plan() {
  vartex::TrainPlan p;
  p.epochs = 2;
  p.warmup_epochs = 1;
  p.batch_size = 4;
  p.accumulation_steps = 2;
  p.lead_time_hours = 2;
  p.seed = 11;
  p.lr_peak = 1e-3;
  return p;
}

/// Removes every source of cross-token coupling and absolute position:
/// positional embeddings and spatial attention output projections are zeroed,
/// so each token's forecast depends only on its own patch.
inline void make_token_local(vartex::Model& model) {
  for (vartex::Parameter& p : model.params().all()) {
    const bool spatial_proj = p.name.rfind("spatial.", 0) == 0 && p.name.find(".proj.") != std::string::npos;
    if (p.name == "embed.pos_embed" || spatial_proj) p.value.fill(0.0);
  }
}

}  // namespace fixture
