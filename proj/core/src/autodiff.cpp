#include "vartex/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vartex/error.hpp"
#include "vartex/parameters.hpp"
#include "vartex/rng.hpp"

namespace vartex::nn {

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::input(Tensor value) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->role = Role::Input;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Graph::leaf(Tensor value) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->role = Role::LeafParameter;
  node->requires_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
  require(p.materialized(), ErrorCode::InvalidArgument, "parameter '" + p.name + "' is not materialized");
  Var v = leaf(p.value);
  nodes_.back()->bound = &p;
  return v;
}

Var Graph::make(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->role = Role::Intermediate;
  if (grad_enabled_) {
    node->requires_grad = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
  }
  if (node->requires_grad) node->backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& n = *nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

const Tensor& Graph::grad(std::size_t id) { return grad_buffer(id); }

void Graph::backward(Var loss, double seed) {
  require(loss.valid() && &loss.graph() == this, ErrorCode::InvalidArgument, "backward on a foreign node");
  if (!nodes_[loss.id()]->requires_grad) return;
  Tensor& g = grad_buffer(loss.id());
  for (double& v : g.vec()) v += seed;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = *nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.bound != nullptr) {
      Parameter& p = *n.bound;
      if (p.grad.size() != p.count()) p.grad = Tensor(p.shape);
      for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += n.grad[k];
    }
  }
}

namespace {

bool is_suffix(const Shape& full, const Shape& suffix) {
  if (suffix.size() > full.size()) return false;
  return std::equal(suffix.begin(), suffix.end(), full.end() - static_cast<std::ptrdiff_t>(suffix.size()));
}

void check_same_graph(const Var& a, const Var& b) {
  require(&a.graph() == &b.graph(), ErrorCode::InvalidArgument, "operands belong to different graphs");
}

}  // namespace

Var add(Var a, Var b) {
  check_same_graph(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(is_suffix(sa, sb), ErrorCode::ShapeMismatch, "add: " + shape_str(sb) + " does not broadcast onto " + shape_str(sa));
  Tensor out = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = bv.size();
  if (m > 0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % m];
  }
  return a.graph().make(std::move(out), {a, b}, [a, b, m](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    if (a.requires_grad()) {
      Tensor& da = g.grad_buffer(a.id());
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (b.requires_grad()) {
      Tensor& db = g.grad_buffer(b.id());
      for (std::size_t i = 0; i < dy.size(); ++i) db[i % m] += dy[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.vec()) v *= factor;
  return x.graph().make(std::move(out), {x}, [x, factor](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad_buffer(x.id());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += factor * dy[i];
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.graph().make(std::move(out), {x}, [x](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad_buffer(x.id());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  });
}

Var slice_last(Var x, std::size_t begin, std::size_t length) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.last_dim();
  require(xv.rank() >= 1 && begin + length <= n, ErrorCode::ShapeMismatch,
          "slice [" + std::to_string(begin) + ", " + std::to_string(begin + length) + ") of axis of size " + std::to_string(n));
  Shape shape = xv.shape();
  shape.back() = length;
  Tensor out(shape);
  const std::size_t rows = xv.outer_size();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + r * n + begin, length, out.data() + r * length);
  }
  return x.graph().make(std::move(out), {x}, [x, begin, length, n, rows](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad_buffer(x.id());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < length; ++j) dx[r * n + begin + j] += dy[r * length + j];
    }
  });
}

Var concat_last(std::span<const Var> parts) {
  require(!parts.empty(), ErrorCode::ShapeMismatch, "concat of zero tensors");
  Shape outer = parts[0].shape();
  require(!outer.empty(), ErrorCode::ShapeMismatch, "concat of scalars");
  outer.pop_back();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    check_same_graph(parts[0], p);
    Shape s = p.shape();
    require(!s.empty(), ErrorCode::ShapeMismatch, "concat of scalars");
    widths.push_back(s.back());
    total += s.back();
    s.pop_back();
    require(s == outer, ErrorCode::ShapeMismatch, "concat: leading shapes " + shape_str(s) + " vs " + shape_str(outer));
  }
  Shape shape = outer;
  shape.push_back(total);
  Tensor out(shape);
  const std::size_t rows = shape_numel(outer);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return parts[0].graph().make(std::move(out), parents, [parents, widths, total, rows](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parents.size(); ++k) {
      if (parents[k].requires_grad()) {
        Tensor& dx = g.grad_buffer(parents[k].id());
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < widths[k]; ++j) dx[r * widths[k] + j] += dy[r * total + off + j];
        }
      }
      off += widths[k];
    }
  });
}

Var gather(Var x, std::vector<std::size_t> index, Shape out_shape) {
  require(index.size() == shape_numel(out_shape), ErrorCode::ShapeMismatch, "gather index/shape size mismatch");
  const Tensor& xv = x.value();
  Tensor out(out_shape);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < xv.size(), ErrorCode::ShapeMismatch, "gather index out of range");
    out[i] = xv[index[i]];
  }
  return x.graph().make(std::move(out), {x}, [x, index = std::move(index)](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad_buffer(x.id());
    for (std::size_t i = 0; i < index.size(); ++i) dx[index[i]] += dy[i];
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().vec()) s += v;
  return x.graph().make(Tensor::scalar(s), {x}, [x](Graph& g, std::size_t self) {
    const double dy = g.grad(self)[0];
    Tensor& dx = g.grad_buffer(x.id());
    for (double& v : dx.vec()) v += dy;
  });
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
  check_same_graph(x, weight);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require(wv.rank() == 2 && xv.rank() >= 1 && xv.last_dim() == wv.dim(0), ErrorCode::ShapeMismatch,
          "linear: input " + shape_str(xv.shape()) + " vs weight " + shape_str(wv.shape()));
  const std::size_t in = wv.dim(0);
  const std::size_t outn = wv.dim(1);
  if (bias) {
    check_same_graph(x, *bias);
    require(bias->shape() == Shape{outn}, ErrorCode::ShapeMismatch,
            "linear: bias " + shape_str(bias->shape()) + " vs output width " + std::to_string(outn));
  }
  const std::size_t rows = xv.outer_size();
  Shape shape = xv.shape();
  shape.back() = outn;
  Tensor out(shape);
  const double* xp = xv.data();
  const double* wp = wv.data();
  double* yp = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = yp + r * outn;
    if (bias) std::copy_n(bias->value().data(), outn, yr);
    const double* xr = xp + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      const double* wr = wp + i * outn;
      for (std::size_t o = 0; o < outn; ++o) yr[o] += xi * wr[o];
    }
  }
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return x.graph().make(std::move(out), parents, [x, weight, bias, rows, in, outn](Graph& g, std::size_t self) {
    const double* dy = g.grad(self).data();
    if (x.requires_grad()) {
      double* dx = g.grad_buffer(x.id()).data();
      const double* wp = weight.value().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* dyr = dy + r * outn;
        for (std::size_t i = 0; i < in; ++i) {
          const double* wr = wp + i * outn;
          double acc = 0.0;
          for (std::size_t o = 0; o < outn; ++o) acc += dyr[o] * wr[o];
          dx[r * in + i] += acc;
        }
      }
    }
    if (weight.requires_grad()) {
      double* dw = g.grad_buffer(weight.id()).data();
      const double* xp = x.value().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* dyr = dy + r * outn;
        for (std::size_t i = 0; i < in; ++i) {
          const double xi = xp[r * in + i];
          double* dwr = dw + i * outn;
          for (std::size_t o = 0; o < outn; ++o) dwr[o] += xi * dyr[o];
        }
      }
    }
    if (bias && bias->requires_grad()) {
      double* db = g.grad_buffer(bias->id()).data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < outn; ++o) db[o] += dy[r * outn + o];
      }
    }
  });
}

namespace {

// In-place stable softmax of one row.
void softmax_row(double* row, std::size_t n) {
  double mx = row[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    total += row[j];
  }
  const double inv = 1.0 / total;
  for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}

}  // namespace

Var softmax(Var x) {
  const Tensor& xv = x.value();
  require(xv.all_finite(), ErrorCode::NonFiniteInput, "softmax input contains NaN or Inf");
  require(xv.rank() >= 1 && xv.last_dim() > 0, ErrorCode::ShapeMismatch, "softmax over an empty axis");
  Tensor out = xv;
  const std::size_t n = xv.last_dim();
  const std::size_t rows = xv.outer_size();
  for (std::size_t r = 0; r < rows; ++r) softmax_row(out.data() + r * n, n);
  return x.graph().make(std::move(out), {x}, [x, n, rows](Graph& g, std::size_t self) {
    const Tensor& y = g.value(self);
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad_buffer(x.id());
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = y.data() + r * n;
      const double* dyr = dy.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += yr[j] * dyr[j];
      for (std::size_t j = 0; j < n; ++j) dx[r * n + j] += yr[j] * (dyr[j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  const std::size_t n = xv.last_dim();
  require(xv.rank() >= 1 && n >= 1, ErrorCode::ShapeMismatch, "layer_norm over an empty axis");
  require(gain.shape() == Shape{n} && bias.shape() == Shape{n}, ErrorCode::ShapeMismatch,
          "layer_norm: gain/bias must be [" + std::to_string(n) + "]");
  const std::size_t rows = xv.outer_size();
  Tensor out(xv.shape());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  const double* gp = gain.value().data();
  const double* bp = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mean) * is;
      xhat[r * n + j] = h;
      out[r * n + j] = gp[j] * h + bp[j];
    }
  }
  return x.graph().make(std::move(out), {x, gain, bias},
                        [x, gain, bias, n, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    const double* gp = gain.value().data();
    if (gain.requires_grad()) {
      Tensor& dg = g.grad_buffer(gain.id());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) dg[j] += dy[r * n + j] * xhat[r * n + j];
    }
    if (bias.requires_grad()) {
      Tensor& db = g.grad_buffer(bias.id());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) db[j] += dy[r * n + j];
    }
    if (x.requires_grad()) {
      Tensor& dx = g.grad_buffer(x.id());
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_dh = 0.0;
        double mean_dh_h = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = dy[r * n + j] * gp[j];
          mean_dh += dh;
          mean_dh_h += dh * xhat[r * n + j];
        }
        mean_dh *= inv_n;
        mean_dh_h *= inv_n;
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = dy[r * n + j] * gp[j];
          dx[r * n + j] += inv_std[r] * (dh - mean_dh - xhat[r * n + j] * mean_dh_h);
        }
      }
    }
  });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.vec()) v = gelu_value(v);
  return x.graph().make(std::move(out), {x}, [x](Graph& g, std::size_t self) {
    const Tensor& xv = x.value();
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad_buffer(x.id());
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx[i] += dy[i] * (cdf + v * pdf);
    }
  });
}

Var attention(Var q, Var k, Var v, std::size_t heads) {
  check_same_graph(q, k);
  check_same_graph(q, v);
  const Shape& shape = q.shape();
  require(shape.size() >= 2 && k.shape() == shape && v.shape() == shape, ErrorCode::ShapeMismatch,
          "attention: q/k/v shapes " + shape_str(shape) + ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
  const std::size_t d = shape.back();
  require(heads >= 1 && d % heads == 0, ErrorCode::HeadDivisibility,
          "width " + std::to_string(d) + " is not divisible by " + std::to_string(heads) + " heads");
  const std::size_t len = shape[shape.size() - 2];
  const std::size_t groups = shape_numel(shape) / (len * d);
  const std::size_t dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  const double* qp = q.value().data();
  const double* kp = k.value().data();
  const double* vp = v.value().data();
  Tensor out(shape);
  // probs[g][h][i][j]
  std::vector<double> probs(groups * heads * len * len);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t base = gi * len * d;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      for (std::size_t i = 0; i < len; ++i) {
        double* prow = probs.data() + ((gi * heads + h) * len + i) * len;
        const double* qi = qp + base + i * d + off;
        for (std::size_t j = 0; j < len; ++j) {
          const double* kj = kp + base + j * d + off;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          prow[j] = s * sc;
        }
        softmax_row(prow, len);
        double* oi = out.data() + base + i * d + off;
        for (std::size_t j = 0; j < len; ++j) {
          const double p = prow[j];
          const double* vj = vp + base + j * d + off;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p * vj[c];
        }
      }
    }
  }
  return q.graph().make(std::move(out), {q, k, v},
                        [q, k, v, heads, len, d, dh, groups, sc, probs = std::move(probs)](Graph& g, std::size_t self) {
    const double* dy = g.grad(self).data();
    const double* qp = q.value().data();
    const double* kp = k.value().data();
    const double* vp = v.value().data();
    double* dq = q.requires_grad() ? g.grad_buffer(q.id()).data() : nullptr;
    double* dk = k.requires_grad() ? g.grad_buffer(k.id()).data() : nullptr;
    double* dv = v.requires_grad() ? g.grad_buffer(v.id()).data() : nullptr;
    std::vector<double> ds(len);
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t base = gi * len * d;
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < len; ++i) {
          const double* prow = probs.data() + ((gi * heads + h) * len + i) * len;
          const double* dyi = dy + base + i * d + off;
          // dP_ij = dy_i . v_j ; dS = P * (dP - sum(P * dP))
          double dot = 0.0;
          for (std::size_t j = 0; j < len; ++j) {
            const double* vj = vp + base + j * d + off;
            double dp = 0.0;
            for (std::size_t c = 0; c < dh; ++c) dp += dyi[c] * vj[c];
            ds[j] = dp;
            dot += prow[j] * dp;
            if (dv) {
              double* dvj = dv + base + j * d + off;
              for (std::size_t c = 0; c < dh; ++c) dvj[c] += prow[j] * dyi[c];
            }
          }
          for (std::size_t j = 0; j < len; ++j) ds[j] = prow[j] * (ds[j] - dot) * sc;
          const double* qi = qp + base + i * d + off;
          for (std::size_t j = 0; j < len; ++j) {
            const double* kj = kp + base + j * d + off;
            if (dq) {
              double* dqi = dq + base + i * d + off;
              for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds[j] * kj[c];
            }
            if (dk) {
              double* dkj = dk + base + j * d + off;
              for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds[j] * qi[c];
            }
          }
        }
      }
    }
  });
}

Var query_pool(Var query, Var keys, Var values, double scale_factor, Tensor* weights_out) {
  check_same_graph(query, keys);
  check_same_graph(query, values);
  const Shape& shape = keys.shape();
  require(shape.size() >= 2 && values.shape() == shape, ErrorCode::ShapeMismatch,
          "query_pool: keys " + shape_str(shape) + " vs values " + shape_str(values.shape()));
  const std::size_t d = shape.back();
  const std::size_t n = shape[shape.size() - 2];
  require(query.shape() == Shape{d}, ErrorCode::ShapeMismatch,
          "query_pool: query " + shape_str(query.shape()) + " vs key width " + std::to_string(d));
  const std::size_t groups = shape_numel(shape) / (n * d);
  Shape out_shape(shape.begin(), shape.end() - 2);
  out_shape.push_back(d);
  Shape w_shape(shape.begin(), shape.end() - 1);

  const double* qp = query.value().data();
  const double* kp = keys.value().data();
  const double* vp = values.value().data();
  Tensor out(out_shape);
  Tensor weights(w_shape);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    double* a = weights.data() + gi * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* kj = kp + (gi * n + j) * d;
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += qp[c] * kj[c];
      a[j] = s * scale_factor;
    }
    softmax_row(a, n);
    double* z = out.data() + gi * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double* vj = vp + (gi * n + j) * d;
      for (std::size_t c = 0; c < d; ++c) z[c] += a[j] * vj[c];
    }
  }
  if (weights_out) *weights_out = weights;
  return query.graph().make(std::move(out), {query, keys, values},
                            [query, keys, values, n, d, groups, scale_factor, weights = std::move(weights)](Graph& g, std::size_t self) {
    const double* dz = g.grad(self).data();
    const double* qp = query.value().data();
    const double* kp = keys.value().data();
    const double* vp = values.value().data();
    double* dq = query.requires_grad() ? g.grad_buffer(query.id()).data() : nullptr;
    double* dk = keys.requires_grad() ? g.grad_buffer(keys.id()).data() : nullptr;
    double* dv = values.requires_grad() ? g.grad_buffer(values.id()).data() : nullptr;
    std::vector<double> ds(n);
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const double* a = weights.data() + gi * n;
      const double* dzg = dz + gi * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double* vj = vp + (gi * n + j) * d;
        double da = 0.0;
        for (std::size_t c = 0; c < d; ++c) da += dzg[c] * vj[c];
        ds[j] = da;
        dot += a[j] * da;
        if (dv) {
          double* dvj = dv + (gi * n + j) * d;
          for (std::size_t c = 0; c < d; ++c) dvj[c] += a[j] * dzg[c];
        }
      }
      for (std::size_t j = 0; j < n; ++j) {
        const double s = a[j] * (ds[j] - dot) * scale_factor;
        const double* kj = kp + (gi * n + j) * d;
        if (dq) {
          for (std::size_t c = 0; c < d; ++c) dq[c] += s * kj[c];
        }
        if (dk) {
          double* dkj = dk + (gi * n + j) * d;
          for (std::size_t c = 0; c < d; ++c) dkj[c] += s * qp[c];
        }
      }
    }
  });
}

namespace {

void check_rate(double rate) {
  require(rate >= 0.0 && rate < 1.0, ErrorCode::RateOutOfRange, "drop rate " + std::to_string(rate) + " outside [0, 1)");
}

Var apply_mask(Var x, std::vector<double> mask, std::size_t stride) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i / stride];
  return x.graph().make(std::move(out), {x}, [x, mask = std::move(mask), stride](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad(self);
    Tensor& dx = g.grad_buffer(x.id());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i / stride];
  });
}

}  // namespace

Var dropout(Var x, double rate, ForwardContext& ctx) {
  check_rate(rate);
  if (!ctx.train || rate == 0.0) return x;
  Rng rng(ctx.next_seed());
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.value().size());
  for (double& m : mask) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
  return apply_mask(x, std::move(mask), 1);
}

Var drop_path(Var x, double rate, ForwardContext& ctx) {
  check_rate(rate);
  if (!ctx.train || rate == 0.0) return x;
  const Shape& shape = x.shape();
  require(!shape.empty() && shape[0] > 0, ErrorCode::ShapeMismatch, "drop_path needs a leading sample axis");
  Rng rng(ctx.next_seed());
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(shape[0]);
  for (double& m : mask) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
  return apply_mask(x, std::move(mask), x.value().size() / shape[0]);
}

Var weighted_mse(Var pred, const Tensor& truth, std::span<const double> row_weights) {
  const Shape& shape = pred.shape();
  require(shape.size() == 4 && truth.shape() == shape, ErrorCode::ShapeMismatch,
          "weighted_mse: prediction " + shape_str(shape) + " vs truth " + shape_str(truth.shape()));
  const std::size_t h = shape[2];
  const std::size_t w = shape[3];
  require(row_weights.size() == h || row_weights.size() == shape[0] * h, ErrorCode::ShapeMismatch,
          "weighted_mse: " + std::to_string(row_weights.size()) + " row weights for " + std::to_string(h) + " rows");
  const std::size_t planes = shape[0] * shape[1];
  const std::size_t channels = shape[1];
  const bool per_sample = row_weights.size() != h;
  auto weight_of = [=](std::size_t plane) { return per_sample ? (plane / channels) * h : std::size_t{0}; };
  const double norm = 1.0 / static_cast<double>(planes * h * w);
  const Tensor& pv = pred.value();
  double total = 0.0;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t r = 0; r < h; ++r) {
      double row = 0.0;
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t i = (pl * h + r) * w + c;
        const double e = pv[i] - truth[i];
        row += e * e;
      }
      total += row_weights[weight_of(pl) + r] * row;
    }
  }
  std::vector<double> weights(row_weights.begin(), row_weights.end());
  return pred.graph().make(Tensor::scalar(total * norm), {pred},
                           [pred, truth, weights = std::move(weights), planes, h, w, norm, weight_of](Graph& g, std::size_t self) {
    const double dy = g.grad(self)[0];
    const Tensor& pv = pred.value();
    Tensor& dp = g.grad_buffer(pred.id());
    for (std::size_t pl = 0; pl < planes; ++pl) {
      for (std::size_t r = 0; r < h; ++r) {
        const double f = 2.0 * norm * weights[weight_of(pl) + r] * dy;
        for (std::size_t c = 0; c < w; ++c) {
          const std::size_t i = (pl * h + r) * w + c;
          dp[i] += f * (pv[i] - truth[i]);
        }
      }
    }
  });
}

}  // namespace vartex::nn
