#include "vartex/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "vartex/error.hpp"
#include "vartex/rng.hpp"

namespace vartex::nn {

namespace {

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

// Scalar objective: sum(out * cotangent).
double contract(const Tensor& out, const Tensor& cotangent) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * cotangent[i];
  return s;
}

double evaluate(const OpFn& op, const std::vector<Tensor>& inputs, const Tensor& cotangent) {
  Graph g(false);
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.input(t));
  return contract(op(g, vars).value(), cotangent);
}

}  // namespace

GradCheckReport grad_check(const OpFn& op, const std::vector<Tensor>& inputs, double eps, double tolerance,
                           std::size_t max_elements, std::uint64_t seed) {
  GradCheckReport report;
  report.tolerance = tolerance;
  Graph g;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.leaf(t));
  Var out = op(g, vars);
  Rng rng(mix_seed(seed, 0xC0));
  Tensor cotangent(out.shape());
  for (double& c : cotangent.vec()) c = rng.uniform(-1.0, 1.0);
  Graph& graph = g;
  Var loss = graph.make(Tensor::scalar(contract(out.value(), cotangent)), {out}, [out, cotangent](Graph& gg, std::size_t self) {
    const double dy = gg.grad(self)[0];
    Tensor& dx = gg.grad_buffer(out.id());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy * cotangent[i];
  });
  graph.backward(loss);

  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = vars[k].grad();
    std::vector<std::size_t> idx(inputs[k].size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > max_elements) {
      for (std::size_t i = 0; i < max_elements; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      idx.resize(max_elements);
    }
    double worst = 0.0;
    for (std::size_t i : idx) {
      const double orig = probe[k][i];
      probe[k][i] = orig + eps;
      const double up = evaluate(op, probe, cotangent);
      probe[k][i] = orig - eps;
      const double down = evaluate(op, probe, cotangent);
      probe[k][i] = orig;
      worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * eps)));
      ++report.checked;
    }
    report.max_rel_error.push_back(worst);
    report.worst = std::max(report.worst, worst);
  }
  return report;
}

ParameterCheckReport grad_check_parameters(ParameterStore& store, const std::function<Var(Graph&)>& loss,
                                           std::size_t samples, std::uint64_t seed, double eps, double tolerance) {
  ParameterCheckReport report;
  report.tolerance = tolerance;
  store.zero_grad();
  {
    Graph g;
    Var l = loss(g);
    require(l.value().size() == 1, ErrorCode::ShapeMismatch, "parameter grad check needs a scalar loss");
    g.backward(l);
  }
  const std::uint64_t total = store.total_count();
  require(total > 0, ErrorCode::InvalidArgument, "parameter grad check on an empty store");
  auto value_of = [&] {
    Graph g(false);
    return loss(g).value().item();
  };
  Rng rng(mix_seed(seed, 0x9C));
  for (std::size_t s = 0; s < samples; ++s) {
    std::uint64_t flat = rng.below(total);
    std::size_t pi = 0;
    while (flat >= store.all()[pi].count()) flat -= store.all()[pi++].count();
    Parameter& p = store.all()[pi];
    const double orig = p.value[flat];
    p.value[flat] = orig + eps;
    const double up = value_of();
    p.value[flat] = orig - eps;
    const double down = value_of();
    p.value[flat] = orig;
    ParameterProbe probe{p.name, static_cast<std::size_t>(flat), p.grad[flat], (up - down) / (2.0 * eps), 0.0};
    probe.rel_error = rel_error(probe.analytic, probe.numeric);
    report.worst = std::max(report.worst, probe.rel_error);
    report.probes.push_back(probe);
  }
  return report;
}

}  // namespace vartex::nn
