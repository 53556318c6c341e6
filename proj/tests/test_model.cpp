#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vartex/error.hpp"
#include "vartex/grad_check.hpp"
#include "vartex/model.hpp"

using namespace vartex;
using namespace vartex::nn;

namespace {

/// Independent parameter formula for the architecture, written from the
/// layer list rather than from the library's group tables.
std::uint64_t expected_total(const ModelConfig& c) {
  const std::uint64_t d = c.stream_width(), r = c.representatives, width = d * r;
  const std::uint64_t pp = c.patch * c.patch;
  const std::uint64_t n = (c.image_height / c.patch) * (c.image_width / c.patch);
  const std::uint64_t vout = c.output_variables ? c.output_variables : c.variables;
  std::uint64_t total = c.variables * pp * width + c.variables * width  // patch linear per variable
                        + c.variables * width                           // variable embedding
                        + n * width;                                    // positional embedding
  total += r * (d + d * d + d * d);                                     // query, W_K, W_V
  const std::uint64_t hidden = c.mlp_ratio * d;
  const std::uint64_t layer = 2 * d + (3 * d * d + 3 * d) + (d * d + d) + 2 * d + (d * hidden + hidden) + (hidden * d + d);
  total += c.blocks * (c.share_spatial_weights ? 1 : r) * layer;
  if (c.use_mixing) total += (c.blocks / c.mixing_interval) * layer;
  total += r * 2 * d;
  std::uint64_t in = width;
  for (std::size_t i = 0; i < c.head_depth; ++i) {
    total += in * c.head_hidden + c.head_hidden;
    in = c.head_hidden;
  }
  total += in * vout * pp + vout * pp;
  return total;
}

}  // namespace

TEST(Layout, PatchifyRoundTrip) {
  const Tensor f = oracle::random_tensor({2, 3, 4, 6}, 1);
  const Tensor p = patchify(f, 2);
  EXPECT_EQ(p.shape(), (Shape{2, 6, 3, 4}));
  // token (1, 2) of sample 1, variable 2, pixel (1, 0).
  EXPECT_EQ(p[((1 * 6 + 1 * 3 + 2) * 3 + 2) * 4 + 2], f[((1 * 3 + 2) * 4 + 3) * 6 + 4]);
  EXPECT_EQ(unpatchify(p, 4, 6, 2), f);
  EXPECT_THROW(patchify(f, 4), Error);
}

TEST(Layout, DifferentiableUnpatchifyMatchesTensorVersion) {
  const std::size_t c = 3, h = 4, w = 6, p = 2;
  const Tensor tokens = oracle::random_tensor({2, 6, c * p * p}, 2);
  Graph g(false);
  const Tensor a = unpatchify(g.input(tokens), c, h, w, p).value();
  const Tensor b = unpatchify(tokens.reshaped({2, 6, c, p * p}), h, w, p);
  EXPECT_EQ(a, b);
}

TEST(Layout, TokenIndicesAreAbsolute) {
  const auto idx = token_indices(Region{4, 8, 4, 4}, 16, 2);
  EXPECT_EQ(idx, (std::vector<std::size_t>{2 * 8 + 4, 2 * 8 + 5, 3 * 8 + 4, 3 * 8 + 5}));
  EXPECT_THROW(token_indices(Region{1, 0, 4, 4}, 16, 2), Error);
}

TEST(Parameters, ClosedFormMatchesStoreAndIndependentFormula) {
  std::vector<ModelConfig> configs{fixture::tiny_config()};
  for (const std::string& name : preset_names()) configs.push_back(preset(name).model);
  ModelConfig shared = fixture::tiny_config();
  shared.share_spatial_weights = true;
  shared.output_variables = 2;
  configs.push_back(shared);
  for (const ModelConfig& c : configs) {
    const ParameterCensus closed = count_parameters(c);
    const ParameterCensus walked = census_of(Model::declared(c).params());
    EXPECT_EQ(closed.total, walked.total);
    EXPECT_EQ(closed.groups, walked.groups);
    EXPECT_EQ(closed.total, expected_total(c));
  }
}

TEST(Parameters, PaperPresetsNearReportedTotals) {
  for (const char* name : {"paper-r1", "paper-r2"}) {
    const double got = static_cast<double>(count_parameters(preset(name).model).total) / 1e6;
    const double ref = reference_parameters_millions(name);
    EXPECT_LT(std::abs(got - ref) / ref, 0.05) << name << " " << got << "M vs " << ref << "M";
  }
}

TEST(Parameters, SingleRepresentativeHasNoMixingGroup) {
  const ParameterCensus c = count_parameters(preset("paper-r1").model);
  EXPECT_EQ(c.groups.at("mixing"), 0u);
  // One aggregation query with full-width keys and values.
  EXPECT_EQ(c.groups.at("aggregation"), 1024u + 2u * 1024u * 1024u);
}

TEST(Parameters, InitializationIsSeededAndPerParameter) {
  const ModelConfig c = fixture::tiny_config();
  Model a(c, 5), b(c, 5), other(c, 6);
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params().all()[i].value, b.params().all()[i].value);
  }
  EXPECT_NE(a.params().at("agg.0.query").value, other.params().at("agg.0.query").value);
  for (double v : a.params().at("embed.patch_weight").value.vec()) EXPECT_LE(std::abs(v), 0.04 + 1e-12);
  for (double v : a.params().at("head.norm.0.gain").value.vec()) EXPECT_EQ(v, 1.0);
  EXPECT_THROW(a.params().declare("agg.0.query", {1}, Init::Zeros), Error);
}

TEST(Parameters, ConfigValidationNamesFields) {
  ModelConfig c = fixture::tiny_config();
  c.heads = 3;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::HeadDivisibility);
  }
  c = fixture::tiny_config();
  c.image_width = 9;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("image_width"), std::string::npos);
  }
}

TEST(Aggregation, MatchesPositionByPositionOracle) {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng(trial);
    const std::size_t v = 1 + rng.below(8), d = 1 + rng.below(16), tokens = 1 + rng.below(5);
    const Tensor stream = oracle::random_tensor({2, tokens, v, d}, 100 + trial);
    const Tensor q = oracle::random_tensor({d}, 200 + trial, -2, 2);
    const Tensor wk = oracle::random_tensor({d, d}, 300 + trial);
    const Tensor wv = oracle::random_tensor({d, d}, 400 + trial);
    Graph g(false);
    AggregationParams p{g.input(q), g.input(wk), g.input(wv)};
    Tensor weights;
    const Tensor out = aggregate_variables(g.input(stream), p, &weights).value();
    ASSERT_EQ(out.shape(), (Shape{2, tokens, d}));
    for (std::size_t pos = 0; pos < 2 * tokens; ++pos) {
      std::vector<std::vector<double>> e(v);
      for (std::size_t a = 0; a < v; ++a) e[a].assign(stream.data() + (pos * v + a) * d, stream.data() + (pos * v + a + 1) * d);
      const auto ref = oracle::aggregate(e, q.vec(), wk.vec(), wv.vec(), d);
      double wsum = 0.0;
      for (std::size_t a = 0; a < v; ++a) {
        EXPECT_NEAR(weights[pos * v + a], ref.weights[a], 1e-10);
        wsum += weights[pos * v + a];
      }
      EXPECT_NEAR(wsum, 1.0, 1e-6);
      for (std::size_t o = 0; o < d; ++o) EXPECT_NEAR(out[pos * d + o], ref.out[o], 1e-10);
    }
  }
}

TEST(Aggregation, GradientCheck) {
  const GradCheckReport r = grad_check(
      [](Graph&, std::span<const Var> x) { return aggregate_variables(x[0], AggregationParams{x[1], x[2], x[3]}); },
      {oracle::random_tensor({2, 3, 5, 4}, 1), oracle::random_tensor({4}, 2), oracle::random_tensor({4, 4}, 3),
       oracle::random_tensor({4, 4}, 4)});
  EXPECT_TRUE(r.passed()) << r.worst;
}

TEST(Forward, ShapesAndEvalDeterminism) {
  const ModelConfig c = fixture::tiny_config();
  Model m(c, 1);
  const Tensor x = oracle::random_tensor({4, 8, 8}, 9);
  const Tensor y1 = m.predict(x, Region{0, 0, 8, 8});
  const Tensor y2 = m.predict(x, Region{0, 0, 8, 8});
  EXPECT_EQ(y1.shape(), (Shape{4, 8, 8}));
  EXPECT_EQ(y1, y2);
  EXPECT_TRUE(y1.all_finite());
  const Tensor crop = m.predict(oracle::random_tensor({4, 4, 4}, 10), Region{4, 4, 4, 4});
  EXPECT_EQ(crop.shape(), (Shape{4, 4, 4}));
}

TEST(Forward, InputErrorsAreTyped) {
  Model m(fixture::tiny_config(), 1);
  try {
    m.predict(Tensor({3, 8, 8}), Region{0, 0, 8, 8});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::VariableCountMismatch);
  }
  EXPECT_THROW(m.predict(Tensor({4, 4, 4}), Region{6, 0, 4, 4}), Error);
}

TEST(Forward, EncoderTraceCountsBlocks) {
  ModelConfig c = fixture::tiny_config();
  c.blocks = 4;
  c.mixing_interval = 2;
  Model m(c, 1);
  Graph g(false);
  Binder bind(g, m.params());
  ForwardContext ctx;
  std::vector<Var> streams{g.input(oracle::random_tensor({1, 16, 8}, 1)), g.input(oracle::random_tensor({1, 16, 8}, 2))};
  EncoderTrace trace;
  encoder_forward(bind, streams, c, ctx, &trace);
  EXPECT_EQ(trace.spatial_passes, 8u);
  EXPECT_EQ(trace.mixing_passes, 2u);
}

TEST(Forward, MixingCouplesStreamsOnlyAtTheSameToken) {
  ModelConfig c = fixture::tiny_config();
  Model m(c, 1);
  Graph g(false);
  Binder bind(g, m.params());
  ForwardContext ctx;
  const EncoderLayerParams p = EncoderLayerParams::bind(bind, mixing_prefix(0));
  Tensor a = oracle::random_tensor({1, 16, 8}, 3), b = oracle::random_tensor({1, 16, 8}, 4);
  const std::vector<Var> base{g.input(a), g.input(b)};
  const auto out1 = mixing_block(base, p, c.heads, 0, 0, ctx);
  b[5 * 8 + 1] += 1.0;  // token 5 of stream 1
  const std::vector<Var> bumped{g.input(a), g.input(b)};
  const auto out2 = mixing_block(bumped, p, c.heads, 0, 0, ctx);
  for (std::size_t t = 0; t < 16; ++t) {
    bool changed = false;
    for (std::size_t j = 0; j < 8; ++j) changed |= out1[0].value()[t * 8 + j] != out2[0].value()[t * 8 + j];
    EXPECT_EQ(changed, t == 5) << "token " << t;
  }
}

TEST(Forward, EndToEndGradientCheck) {
  const ModelConfig c = fixture::tiny_config();
  Model m(c, 2);
  const Tensor x = oracle::random_tensor({2, 4, 8, 8}, 5);
  const Tensor y = oracle::random_tensor({2, 4, 8, 8}, 6);
  const std::vector<double> L = oracle::lat_weights(default_latitudes(8));
  const Region regions[] = {Region{0, 0, 8, 8}, Region{0, 0, 8, 8}};
  const ParameterCheckReport r = grad_check_parameters(
      m.params(),
      [&](Graph& g) {
        ForwardContext ctx;
        return weighted_mse(m.forward(g, x, regions, ctx), y, L);
      },
      60, 7, 1e-6);
  EXPECT_EQ(r.probes.size(), 60u);
  EXPECT_TRUE(r.passed()) << r.worst;
}
