#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "i2m2/matrix.hpp"
#include "i2m2/rng.hpp"

namespace i2m2 {

// Dense feed-forward network with rectified-linear hidden units and raw
// logits at the output. Weights are [out x in], biases length out.
struct Mlp {
  struct Layer {
    RealMatrix weight;
    std::vector<double> bias;

    bool operator==(const Layer&) const = default;
  };
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.front().weight.cols; }
  std::size_t output_dim() const { return layers.back().weight.rows; }

  bool operator==(const Mlp&) const = default;
};

struct GradientSet {
  struct LayerGrad {
    RealMatrix dweight;
    std::vector<double> dbias;
  };
  std::vector<LayerGrad> layers;
};

// Per-layer inputs and pre-activations kept for the backward pass.
struct ForwardCache {
  const Mlp* net = nullptr;
  std::vector<RealMatrix> inputs;   // inputs[l] = activation entering layer l
  std::vector<RealMatrix> preacts;  // preacts[l] = W a + b at layer l
};

inline std::size_t count_parameters(const Mlp& mlp) {
  std::size_t n = 0;
  for (const auto& layer : mlp.layers)
    n += layer.weight.values.size() + layer.bias.size();
  return n;
}

// He initialization: zero-mean normal with stddev sqrt(2 / fan_in), zero
// biases. Deterministic given the stream.
inline Mlp init_mlp(std::span<const int> layer_sizes, RngStream& rng) {
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("init_mlp: need at least input and output sizes");
  for (int s : layer_sizes)
    if (s <= 0) throw std::invalid_argument("init_mlp: layer sizes must be positive");

  Mlp mlp;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const auto fan_in = static_cast<std::size_t>(layer_sizes[l]);
    const auto fan_out = static_cast<std::size_t>(layer_sizes[l + 1]);
    Mlp::Layer layer{RealMatrix(fan_out, fan_in), std::vector<double>(fan_out, 0.0)};
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& w : layer.weight.values) w = scale * rng.normal();
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

inline RealMatrix forward(const Mlp& mlp, const RealMatrix& batch, ForwardCache* cache = nullptr) {
  if (batch.cols != mlp.input_dim())
    throw std::invalid_argument("forward: batch width does not match network input");
  if (cache) {
    cache->net = &mlp;
    cache->inputs.clear();
    cache->preacts.clear();
  }

  RealMatrix act = batch;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    if (cache) cache->inputs.push_back(act);

    RealMatrix z(act.rows, layer.weight.rows);
    for (std::size_t b = 0; b < act.rows; ++b) {
      const auto in = act.row(b);
      auto out = z.row(b);
      for (std::size_t o = 0; o < layer.weight.rows; ++o) {
        double s = layer.bias[o];
        const auto w = layer.weight.row(o);
        for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * in[i];
        out[o] = s;
      }
    }
    if (cache) cache->preacts.push_back(z);

    const bool last = (l + 1 == mlp.layers.size());
    if (!last)
      for (double& v : z.values) v = std::max(0.0, v);
    act = std::move(z);
  }
  if (!act.is_finite())
    throw std::runtime_error("forward: non-finite logits");
  return act;
}

// Row-wise softmax with per-row max subtraction.
inline RealMatrix softmax(const RealMatrix& logits) {
  RealMatrix probs(logits.rows, logits.cols);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const auto in = logits.row(r);
    auto out = probs.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      out[c] = std::exp(in[c] - m);
      total += out[c];
    }
    for (double& v : out) v /= total;
  }
  return probs;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  RealMatrix m(1, logits.size());
  std::copy(logits.begin(), logits.end(), m.values.begin());
  return softmax(m).values;
}

// Mean negative log-likelihood of the true classes, plus the gradient
// w.r.t. the logits: (softmax - onehot) / B.
inline double cross_entropy(const RealMatrix& logits, std::span<const int> labels,
                            RealMatrix* dlogits = nullptr) {
  if (labels.size() != logits.rows)
    throw std::invalid_argument("cross_entropy: one label per row required");
  const auto C = static_cast<int>(logits.cols);
  for (int y : labels)
    if (y < 0 || y >= C) throw std::invalid_argument("cross_entropy: label out of range");

  RealMatrix probs = softmax(logits);
  double loss = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r)
    loss -= std::log(probs.at(r, static_cast<std::size_t>(labels[r])));
  loss /= static_cast<double>(logits.rows);

  if (dlogits) {
    *dlogits = std::move(probs);
    const double inv_b = 1.0 / static_cast<double>(logits.rows);
    for (std::size_t r = 0; r < dlogits->rows; ++r) {
      auto row = dlogits->row(r);
      row[static_cast<std::size_t>(labels[r])] -= 1.0;
      for (double& v : row) v *= inv_b;
    }
  }
  return loss;
}

inline GradientSet backward(const Mlp& mlp, const ForwardCache& cache, const RealMatrix& dlogits) {
  if (cache.net != &mlp || cache.inputs.size() != mlp.layers.size())
    throw std::invalid_argument("backward: cache does not belong to this network");
  if (dlogits.rows != cache.inputs.front().rows || dlogits.cols != mlp.output_dim())
    throw std::invalid_argument("backward: gradient shape mismatch");

  GradientSet grads;
  grads.layers.resize(mlp.layers.size());

  RealMatrix delta = dlogits;
  for (std::size_t li = mlp.layers.size(); li-- > 0;) {
    const auto& layer = mlp.layers[li];
    const auto& input = cache.inputs[li];
    auto& g = grads.layers[li];
    g.dweight = RealMatrix(layer.weight.rows, layer.weight.cols);
    g.dbias.assign(layer.bias.size(), 0.0);

    for (std::size_t b = 0; b < delta.rows; ++b) {
      const auto d = delta.row(b);
      const auto in = input.row(b);
      for (std::size_t o = 0; o < layer.weight.rows; ++o) {
        g.dbias[o] += d[o];
        auto gw = g.dweight.row(o);
        for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += d[o] * in[i];
      }
    }

    if (li > 0) {
      RealMatrix prev(delta.rows, layer.weight.cols);
      for (std::size_t b = 0; b < delta.rows; ++b) {
        const auto d = delta.row(b);
        auto p = prev.row(b);
        for (std::size_t i = 0; i < p.size(); ++i) {
          double s = 0.0;
          for (std::size_t o = 0; o < layer.weight.rows; ++o)
            s += d[o] * layer.weight.at(o, i);
          p[i] = s;
        }
        const auto z = cache.preacts[li - 1].row(b);
        for (std::size_t i = 0; i < p.size(); ++i) {
          // Symmetric subgradient 1/2 exactly at the kink; this is what a
          // central difference measures there.
          if (z[i] < 0.0) p[i] = 0.0;
          else if (z[i] == 0.0) p[i] *= 0.5;
        }
      }
      delta = std::move(prev);
    }
  }
  return grads;
}

// w <- w - lr (g + wd w); biases exempt from decay.
inline void sgd_step(Mlp& mlp, const GradientSet& grads, double lr, double weight_decay) {
  if (grads.layers.size() != mlp.layers.size())
    throw std::invalid_argument("sgd_step: gradient/parameter shape mismatch");
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    auto& layer = mlp.layers[l];
    const auto& g = grads.layers[l];
    if (g.dweight.rows != layer.weight.rows || g.dweight.cols != layer.weight.cols ||
        g.dbias.size() != layer.bias.size())
      throw std::invalid_argument("sgd_step: gradient/parameter shape mismatch");
    if (!g.dweight.is_finite())
      throw std::runtime_error("sgd_step: non-finite weight gradient");
    for (double v : g.dbias)
      if (!std::isfinite(v)) throw std::runtime_error("sgd_step: non-finite bias gradient");

    for (std::size_t i = 0; i < layer.weight.values.size(); ++i)
      layer.weight.values[i] -=
          lr * (g.dweight.values[i] + weight_decay * layer.weight.values[i]);
    for (std::size_t i = 0; i < layer.bias.size(); ++i)
      layer.bias[i] -= lr * g.dbias[i];
  }
}

namespace detail {

inline std::vector<double*> parameter_view(Mlp& mlp) {
  std::vector<double*> out;
  for (auto& layer : mlp.layers) {
    for (double& w : layer.weight.values) out.push_back(&w);
    for (double& b : layer.bias) out.push_back(&b);
  }
  return out;
}

inline std::vector<double> flatten_gradients(const GradientSet& grads) {
  std::vector<double> out;
  for (const auto& g : grads.layers) {
    out.insert(out.end(), g.dweight.values.begin(), g.dweight.values.end());
    out.insert(out.end(), g.dbias.begin(), g.dbias.end());
  }
  return out;
}

// Extended-precision loss evaluation for the finite-difference side of
// gradcheck; keeps the rounding noise of the numeric slope well below the
// error bounds being certified.
inline long double loss_extended(const Mlp& mlp, const RealMatrix& batch,
                                 std::span<const int> labels) {
  std::vector<long double> act(batch.values.begin(), batch.values.end());
  std::size_t width = batch.cols;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& layer = mlp.layers[l];
    std::vector<long double> next(batch.rows * layer.weight.rows);
    for (std::size_t b = 0; b < batch.rows; ++b)
      for (std::size_t o = 0; o < layer.weight.rows; ++o) {
        long double s = layer.bias[o];
        for (std::size_t i = 0; i < width; ++i)
          s += static_cast<long double>(layer.weight.at(o, i)) * act[b * width + i];
        next[b * layer.weight.rows + o] = s;
      }
    if (l + 1 < mlp.layers.size())
      for (long double& v : next)
        if (v < 0.0L) v = 0.0L;
    act = std::move(next);
    width = layer.weight.rows;
  }
  long double loss = 0.0L;
  for (std::size_t b = 0; b < batch.rows; ++b) {
    long double m = act[b * width];
    for (std::size_t c = 1; c < width; ++c) m = std::max(m, act[b * width + c]);
    long double total = 0.0L;
    for (std::size_t c = 0; c < width; ++c) total += std::exp(act[b * width + c] - m);
    loss -= act[b * width + static_cast<std::size_t>(labels[b])] - m - std::log(total);
  }
  return loss / static_cast<long double>(batch.rows);
}

}  // namespace detail

// Central finite differences against the analytic gradient over every
// parameter; returns the max relative error with denominator
// max(|analytic|, |numeric|, 1e-12).
inline double gradcheck(const Mlp& mlp, const RealMatrix& batch,
                        std::span<const int> labels, double eps) {
  if (eps < 1e-8 || eps > 1e-4)
    throw std::invalid_argument("gradcheck: eps out of [1e-8, 1e-4]");

  Mlp work = mlp;
  ForwardCache cache;
  RealMatrix logits = forward(work, batch, &cache);
  RealMatrix dlogits;
  cross_entropy(logits, labels, &dlogits);
  const std::vector<double> analytic = detail::flatten_gradients(backward(work, cache, dlogits));

  const auto params = detail::parameter_view(work);
  double max_rel = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + eps;
    const long double lp = detail::loss_extended(work, batch, labels);
    *params[i] = saved - eps;
    const long double lm = detail::loss_extended(work, batch, labels);
    *params[i] = saved;
    const double numeric = static_cast<double>((lp - lm) / (2.0L * static_cast<long double>(eps)));
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-12});
    max_rel = std::max(max_rel, std::fabs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

}  // namespace i2m2
