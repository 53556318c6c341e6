#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "vartex/autodiff.hpp"
#include "vartex/error.hpp"
#include "vartex/grad_check.hpp"
#include "vartex/parameters.hpp"

using namespace vartex;
using namespace vartex::nn;
using oracle::random_tensor;

namespace {

void expect_passes(const GradCheckReport& r) {
  EXPECT_TRUE(r.passed()) << "worst relative error " << r.worst;
  EXPECT_GT(r.checked, 0u);
}

}  // namespace

TEST(Autodiff, AddBroadcastsSuffix) {
  Graph g;
  Var a = g.leaf(random_tensor({2, 3}, 1));
  Var b = g.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
  Var c = add(a, b);
  EXPECT_DOUBLE_EQ(c.value()[4], a.value()[4] + 2.0);
  g.backward(sum(c));
  EXPECT_DOUBLE_EQ(b.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(a.grad()[5], 1.0);
}

TEST(Autodiff, AddRejectsNonSuffix) {
  Graph g;
  Var a = g.leaf(Tensor({2, 3}));
  Var b = g.leaf(Tensor({2}));
  EXPECT_THROW(add(a, b), Error);
}

TEST(Autodiff, GradientsOfStructuralOps) {
  expect_passes(grad_check([](Graph&, std::span<const Var> x) { return scale(x[0], -1.7); },
                           {random_tensor({3, 4}, 2)}));
  expect_passes(grad_check([](Graph&, std::span<const Var> x) { return slice_last(x[0], 1, 2); },
                           {random_tensor({3, 4}, 3)}));
  expect_passes(grad_check(
      [](Graph&, std::span<const Var> x) {
        const Var parts[] = {x[0], x[1]};
        return concat_last(parts);
      },
      {random_tensor({2, 3}, 4), random_tensor({2, 5}, 5)}));
  expect_passes(grad_check([](Graph&, std::span<const Var> x) { return gather(x[0], {3, 0, 0, 5}, {2, 2}); },
                           {random_tensor({6}, 6)}));
}

TEST(Autodiff, LinearMatchesHandComputation) {
  Graph g;
  Var x = g.leaf(Tensor({1, 2}, {1.0, 2.0}));
  Var w = g.leaf(Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0}));
  Var b = g.leaf(Tensor({2}, {0.5, -0.5}));
  Var y = linear(x, w, b);
  EXPECT_DOUBLE_EQ(y.value()[0], 1.0 * 1.0 + 2.0 * 3.0 + 0.5);
  EXPECT_DOUBLE_EQ(y.value()[1], 1.0 * 2.0 + 2.0 * 4.0 - 0.5);
}

TEST(Autodiff, GradientsOfDenseOps) {
  expect_passes(grad_check([](Graph&, std::span<const Var> x) { return linear(x[0], x[1], x[2]); },
                           {random_tensor({2, 3, 4}, 7), random_tensor({4, 5}, 8), random_tensor({5}, 9)}));
  expect_passes(grad_check([](Graph&, std::span<const Var> x) { return softmax(x[0]); }, {random_tensor({3, 5}, 10)}));
  expect_passes(grad_check([](Graph&, std::span<const Var> x) { return layer_norm(x[0], x[1], x[2]); },
                           {random_tensor({4, 6}, 11), random_tensor({6}, 12), random_tensor({6}, 13)}));
  expect_passes(grad_check([](Graph&, std::span<const Var> x) { return gelu(x[0]); }, {random_tensor({10}, 14, -3, 3)}));
}

TEST(Autodiff, GeluUsesExactErf) {
  for (double x : {-2.0, -0.3, 0.0, 0.7, 3.1}) {
    EXPECT_NEAR(gelu_value(x), 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))), 1e-15);
  }
}

TEST(Autodiff, SoftmaxRowsSumToOneAndRejectNonFinite) {
  Graph g(false);
  Var s = softmax(g.input(random_tensor({4, 7}, 15, -30, 30)));
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) total += s.value()[r * 7 + c];
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  Tensor bad({3}, {0.0, std::nan(""), 1.0});
  try {
    softmax(g.input(bad));
    FAIL() << "expected NonFiniteInput";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteInput);
  }
}

TEST(Autodiff, AttentionGradientAndGrouping) {
  expect_passes(grad_check([](Graph&, std::span<const Var> x) { return attention(x[0], x[1], x[2], 2); },
                           {random_tensor({2, 3, 4}, 16), random_tensor({2, 3, 4}, 17), random_tensor({2, 3, 4}, 18)}));
  // Groups are independent: perturbing group 1 leaves group 0 unchanged.
  Graph g(false);
  Tensor q = random_tensor({2, 3, 4}, 19), k = random_tensor({2, 3, 4}, 20), v = random_tensor({2, 3, 4}, 21);
  Tensor out1 = attention(g.input(q), g.input(k), g.input(v), 1).value();
  k[12] += 5.0;
  Tensor out2 = attention(g.input(q), g.input(k), g.input(v), 1).value();
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(out1[i], out2[i]);
}

TEST(Autodiff, AttentionHeadDivisibility) {
  Graph g(false);
  Tensor t({1, 2, 6});
  try {
    attention(g.input(t), g.input(t), g.input(t), 4);
    FAIL() << "expected HeadDivisibility";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::HeadDivisibility);
  }
}

TEST(Autodiff, QueryPoolGradient) {
  expect_passes(grad_check(
      [](Graph&, std::span<const Var> x) { return query_pool(x[0], x[1], x[2], 0.4); },
      {random_tensor({4}, 22), random_tensor({3, 5, 4}, 23), random_tensor({3, 5, 4}, 24)}));
}

TEST(Autodiff, WeightedMseGradientSharedAndPerSample) {
  const Tensor truth = random_tensor({2, 3, 4, 5}, 25);
  const std::vector<double> shared = oracle::random_vector(4, 26, 0.1, 2.0);
  const std::vector<double> per_sample = oracle::random_vector(8, 27, 0.1, 2.0);
  expect_passes(grad_check([&](Graph&, std::span<const Var> x) { return weighted_mse(x[0], truth, shared); },
                           {random_tensor({2, 3, 4, 5}, 28)}));
  expect_passes(grad_check([&](Graph&, std::span<const Var> x) { return weighted_mse(x[0], truth, per_sample); },
                           {random_tensor({2, 3, 4, 5}, 29)}));
}

TEST(Autodiff, WeightedMseMatchesOracle) {
  const Tensor pred = random_tensor({1, 2, 4, 3}, 30);
  const Tensor truth = random_tensor({1, 2, 4, 3}, 31);
  const std::vector<double> L = oracle::lat_weights({-60, -20, 20, 60});
  Graph g(false);
  const double got = weighted_mse(g.input(pred), truth, L).value().item();
  EXPECT_NEAR(got, oracle::mse(pred.vec(), truth.vec(), 2, 4, 3, L), 1e-14);
}

TEST(Autodiff, DropoutIsIdentityInEvalAndRejectsBadRate) {
  Graph g(false);
  const Tensor x = random_tensor({4, 4}, 32);
  ForwardContext eval = ForwardContext::eval();
  EXPECT_EQ(dropout(g.input(x), 0.9, eval).value(), x);
  EXPECT_EQ(drop_path(g.input(x), 0.9, eval).value(), x);
  ForwardContext train = ForwardContext::training(3);
  EXPECT_EQ(dropout(g.input(x), 0.0, train).value(), x);
  for (double bad : {-0.1, 1.0, 1.5}) {
    try {
      dropout(g.input(x), bad, train);
      FAIL() << "expected RateOutOfRange";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::RateOutOfRange);
    }
  }
}

TEST(Autodiff, DropoutScalesKeptUnitsAndIsSeeded) {
  Graph g(false);
  const Tensor x({1000}, 1.0);
  ForwardContext a = ForwardContext::training(9), b = ForwardContext::training(9);
  const Tensor ya = dropout(g.input(x), 0.25, a).value();
  const Tensor yb = dropout(g.input(x), 0.25, b).value();
  EXPECT_EQ(ya, yb);
  std::size_t zeros = 0;
  for (double v : ya.vec()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
    }
  }
  EXPECT_GT(zeros, 180u);
  EXPECT_LT(zeros, 320u);
}

TEST(Autodiff, DropPathZeroesWholeSamples) {
  Graph g(false);
  const Tensor x({64, 5}, 1.0);
  ForwardContext ctx = ForwardContext::training(4);
  const Tensor y = drop_path(g.input(x), 0.5, ctx).value();
  for (std::size_t s = 0; s < 64; ++s) {
    for (std::size_t j = 1; j < 5; ++j) EXPECT_EQ(y[s * 5 + j], y[s * 5]);
  }
}

TEST(Autodiff, GradCheckCatchesWrongBackward) {
  // Negative control: an op whose backward is off by a factor of two.
  const OpFn broken = [](Graph& g, std::span<const Var> x) {
    Tensor out = x[0].value();
    for (double& v : out.vec()) v *= 3.0;
    Var in = x[0];
    return g.make(std::move(out), {in}, [in](Graph& gg, std::size_t self) {
      const Tensor& dy = gg.grad(self);
      Tensor& dx = gg.grad_buffer(in.id());
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += 6.0 * dy[i];
    });
  };
  EXPECT_FALSE(grad_check(broken, {random_tensor({5}, 33)}).passed());
}

TEST(Autodiff, ParametersReceiveGradients) {
  ParameterStore store;
  store.declare("w", {3, 2}, Init::TruncatedNormal);
  store.materialize(1);
  Graph g;
  Var w = g.param(store.at("w"));
  Var y = linear(g.input(Tensor({1, 3}, {1.0, 2.0, 3.0})), w);
  g.backward(sum(y));
  const Tensor& grad = store.at("w").grad;
  EXPECT_DOUBLE_EQ(grad[0], 1.0);
  EXPECT_DOUBLE_EQ(grad[5], 3.0);
}
