#pragma once

// Independent reference implementations used as expected-value oracles.
// They share no code with the library beyond plain data containers.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "vartex/rng.hpp"
#include "vartex/tensor.hpp"

namespace oracle {

inline std::vector<double> lat_weights(const std::vector<double>& lat_deg) {
  std::vector<double> c;
  double sum = 0.0;
  for (double l : lat_deg) {
    c.push_back(std::cos(l * std::numbers::pi / 180.0));
    sum += c.back();
  }
  for (double& x : c) x /= (sum / static_cast<double>(c.size()));
  return c;
}

/// Per-plane weighted MSE of [K, H, W] stacks.
inline std::vector<double> plane_mse(const std::vector<double>& p, const std::vector<double>& t, std::size_t k,
                                     std::size_t h, std::size_t w, const std::vector<double>& L) {
  std::vector<double> out(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    double s = 0.0;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double e = p[(a * h + i) * w + j] - t[(a * h + i) * w + j];
        s += L[i] * e * e;
      }
    out[a] = s / static_cast<double>(h * w);
  }
  return out;
}

inline double mse(const std::vector<double>& p, const std::vector<double>& t, std::size_t k, std::size_t h,
                  std::size_t w, const std::vector<double>& L) {
  double s = 0.0;
  for (double v : plane_mse(p, t, k, h, w, L)) s += v;
  return s / static_cast<double>(k);
}

inline double rmse(const std::vector<double>& p, const std::vector<double>& t, std::size_t k, std::size_t h,
                   std::size_t w, const std::vector<double>& L) {
  double s = 0.0;
  for (double v : plane_mse(p, t, k, h, w, L)) s += std::sqrt(v);
  return s / static_cast<double>(k);
}

inline double acc(const std::vector<double>& p, const std::vector<double>& t, const std::vector<double>& clim,
                  std::size_t k, std::size_t h, std::size_t w, const std::vector<double>& L) {
  double num = 0.0, pp = 0.0, tt = 0.0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double x = p[(a * h + i) * w + j] - clim[i * w + j];
        const double y = t[(a * h + i) * w + j] - clim[i * w + j];
        num += L[i] * x * y;
        pp += L[i] * x * x;
        tt += L[i] * y * y;
      }
  return num / std::sqrt(pp * tt);
}

/// One position of the trainable-query cross attention over V variable
/// embeddings e[V][d]: softmax_v(q . (W_K e_v) / sqrt(d)) weighted sum of W_V e_v.
/// W is stored [in, out] (y = x W).
struct AggregationResult {
  std::vector<double> out;
  std::vector<double> weights;
};

inline AggregationResult aggregate(const std::vector<std::vector<double>>& e, const std::vector<double>& q,
                                   const std::vector<double>& wk, const std::vector<double>& wv, std::size_t d) {
  const std::size_t v = e.size();
  std::vector<std::vector<double>> keys(v, std::vector<double>(d, 0.0)), vals(v, std::vector<double>(d, 0.0));
  for (std::size_t a = 0; a < v; ++a)
    for (std::size_t o = 0; o < d; ++o)
      for (std::size_t i = 0; i < d; ++i) {
        keys[a][o] += e[a][i] * wk[i * d + o];
        vals[a][o] += e[a][i] * wv[i * d + o];
      }
  std::vector<double> logits(v, 0.0);
  double mx = -1e300;
  for (std::size_t a = 0; a < v; ++a) {
    for (std::size_t o = 0; o < d; ++o) logits[a] += q[o] * keys[a][o];
    logits[a] /= std::sqrt(static_cast<double>(d));
    mx = std::max(mx, logits[a]);
  }
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    z += l;
  }
  AggregationResult r{std::vector<double>(d, 0.0), {}};
  for (std::size_t a = 0; a < v; ++a) {
    const double w = logits[a] / z;
    r.weights.push_back(w);
    for (std::size_t o = 0; o < d; ++o) r.out[o] += w * vals[a][o];
  }
  return r;
}

/// Warmup-then-cosine learning rate written from the definition.
inline double lr(std::size_t step, double peak, std::size_t warmup, std::size_t total) {
  if (step >= total) return 0.0;
  if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  const double x = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return peak * (std::cos(std::numbers::pi * x) + 1.0) / 2.0;
}

/// Scalar AdamW with decoupled decay, `t` is the 1-based step.
struct AdamScalar {
  double m = 0.0, v = 0.0;
  double step(double p, double g, double lr, double wd, double b1, double b2, double eps, int t) {
    p -= lr * wd * p;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return p - lr * mh / (std::sqrt(vh) + eps);
  }
};

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  vartex::Rng rng(seed);
  std::vector<double> out(n);
  for (double& x : out) x = rng.uniform(lo, hi);
  return out;
}

inline vartex::Tensor random_tensor(vartex::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = vartex::shape_numel(shape);
  return vartex::Tensor(std::move(shape), random_vector(n, seed, lo, hi));
}

}  // namespace oracle
