#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "vartex/tensor.hpp"

namespace vartex {

struct Parameter;

namespace nn {

enum class Role { Input, LeafParameter, Intermediate };

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Tensor& value() const;
  /// Gradient of the last backward() seed w.r.t. this node (zeros if unreached).
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in topological order, so backward
/// is a single reverse sweep with a fixed accumulation order.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var input(Tensor value);
  Var leaf(Tensor value);
  /// Leaf bound to a stored parameter; backward() adds its gradient into `p.grad`.
  Var param(Parameter& p);

  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  /// Appends an intermediate node. `backward` reads grad(self) and accumulates
  /// into parents via accumulate(); it runs only if some parent needs a gradient.
  Var make(Tensor value, std::vector<Var> parents, BackwardFn backward);

  void backward(Var loss, double seed = 1.0);

  const Tensor& value(std::size_t id) const { return nodes_[id]->value; }
  const Tensor& grad(std::size_t id);
  Role role(std::size_t id) const { return nodes_[id]->role; }
  bool requires_grad(std::size_t id) const { return nodes_[id]->requires_grad; }
  /// Mutable gradient buffer of a node, allocated on first touch.
  Tensor& grad_buffer(std::size_t id);
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Role role = Role::Intermediate;
    bool requires_grad = false;
    Parameter* bound = nullptr;
    BackwardFn backward;
  };

  std::vector<std::unique_ptr<Node>> nodes_;
  bool grad_enabled_;
};

/// Stochastic-regularization switch and seed source for one forward pass.
struct ForwardContext {
  bool train = false;
  std::uint64_t seed = 0;
  std::uint64_t calls = 0;

  static ForwardContext eval() { return {}; }
  static ForwardContext training(std::uint64_t seed) { return {true, seed, 0}; }
  std::uint64_t next_seed() { return seed ^ (0xA24BAED4963EE407ULL * ++calls); }
};

// ---- elementwise / structural -------------------------------------------------

Var add(Var a, Var b);
Var scale(Var x, double factor);
Var reshape(Var x, Shape shape);
/// Columns [begin, begin + length) of the trailing axis.
Var slice_last(Var x, std::size_t begin, std::size_t length);
Var concat_last(std::span<const Var> parts);
/// out[i] = x[index[i]]; backward scatters. Used for (un)patchify layouts.
Var gather(Var x, std::vector<std::size_t> index, Shape out_shape);
Var sum(Var x);

// ---- dense ops ---------------------------------------------------------------

/// y = x W (+ b) over the trailing axis. W: [in, out], b: [out].
Var linear(Var x, Var weight, std::optional<Var> bias = std::nullopt);
Var softmax(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-6);
Var gelu(Var x);

double gelu_value(double x);

/// Scaled dot-product attention within groups: q, k, v are [..., L, d] and
/// attention runs over L independently for every leading index, split into
/// `heads` heads of width d / heads, scaled by 1/sqrt(d / heads).
Var attention(Var q, Var k, Var v, std::size_t heads);

/// Single-query cross attention per group: keys/values [..., n, d], query [d].
/// Returns [..., d]. If `weights_out` is given it receives the [..., n] weights.
Var query_pool(Var query, Var keys, Var values, double scale, Tensor* weights_out = nullptr);

Var dropout(Var x, double rate, ForwardContext& ctx);
/// Zeroes whole leading-axis slices (samples) with probability `rate`.
Var drop_path(Var x, double rate, ForwardContext& ctx);

/// Mean over leading-axis samples and channels of the row-weighted spatial
/// MSE: pred/truth [B, C, H, W], row_weights [H] or per sample [B, H].
Var weighted_mse(Var pred, const Tensor& truth, std::span<const double> row_weights);

}  // namespace nn
}  // namespace vartex
