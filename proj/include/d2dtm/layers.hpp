#ifndef D2DTM_LAYERS_HPP
#define D2DTM_LAYERS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "d2dtm/matrix.hpp"
#include "d2dtm/rng.hpp"

namespace d2dtm {

/// Leaky ReLU slope used between encoder and generator layers.
inline constexpr double kLeakySlope = 0.2;

struct AdamState {
  Matrix m_weight, v_weight;
  std::vector<double> m_bias, v_bias;
  std::uint64_t step = 0;
};

/// One fully connected layer: weight is (out x in), bias has length out.
struct ParamBlock {
  std::string name;
  Matrix weight;
  std::vector<double> bias;
  Matrix grad_weight;
  std::vector<double> grad_bias;
  AdamState opt;

  ParamBlock() = default;
  ParamBlock(std::string block_name, std::size_t out_dim, std::size_t in_dim)
      : name(std::move(block_name)),
        weight(out_dim, in_dim),
        bias(out_dim, 0.0),
        grad_weight(out_dim, in_dim),
        grad_bias(out_dim, 0.0) {
    opt.m_weight = Matrix(out_dim, in_dim);
    opt.v_weight = Matrix(out_dim, in_dim);
    opt.m_bias.assign(out_dim, 0.0);
    opt.v_bias.assign(out_dim, 0.0);
  }

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }

  /// Flat view: all weights in row-major order, then the bias.
  double& param(std::size_t i) {
    return i < weight.size() ? weight.values()[i] : bias[i - weight.size()];
  }
  double param(std::size_t i) const {
    return i < weight.size() ? weight.values()[i] : bias[i - weight.size()];
  }
  double grad(std::size_t i) const {
    return i < grad_weight.size() ? grad_weight.values()[i] : grad_bias[i - grad_weight.size()];
  }

  void zero_grad() {
    grad_weight.fill(0.0);
    std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
  }

  /// Glorot uniform weights, zero bias.
  void glorot_init(SeededRng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
    for (double& w : weight.values()) w = rng.uniform(-limit, limit);
    std::fill(bias.begin(), bias.end(), 0.0);
  }
};

inline Matrix affine_forward(const Matrix& x, const ParamBlock& p) {
  if (x.cols() != p.in_dim()) {
    throw ShapeError("affine_forward: input " + x.shape() + " incompatible with weight " +
                     p.weight.shape() + (p.name.empty() ? "" : " of block '" + p.name + "'"));
  }
  const std::size_t n = x.rows(), in = p.in_dim(), out = p.out_dim();
  Matrix y(n, out);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.row(r).data();
    double* yr = y.row(r).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double* w = p.weight.row(o).data();
      double s = p.bias[o];
      for (std::size_t i = 0; i < in; ++i) s += xr[i] * w[i];
      yr[o] = s;
    }
  }
  return y;
}

/// grad_weight += gradᵀ·x, grad_bias += column sums of grad.
inline void accumulate_affine_grads(ParamBlock& p, const Matrix& x, const Matrix& grad) {
  const std::size_t n = x.rows(), in = p.in_dim(), out = p.out_dim();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.row(r).data();
    const double* gr = grad.row(r).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double g = gr[o];
      if (g == 0.0) continue;
      double* gw = p.grad_weight.row(o).data();
      for (std::size_t i = 0; i < in; ++i) gw[i] += g * xr[i];
      p.grad_bias[o] += g;
    }
  }
}

/// Gradient with respect to the layer input: grad·W.
inline Matrix affine_input_grad(const ParamBlock& p, const Matrix& grad) {
  const std::size_t n = grad.rows(), in = p.in_dim(), out = p.out_dim();
  Matrix dx(n, in);
  for (std::size_t r = 0; r < n; ++r) {
    const double* gr = grad.row(r).data();
    double* dr = dx.row(r).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double g = gr[o];
      if (g == 0.0) continue;
      const double* w = p.weight.row(o).data();
      for (std::size_t i = 0; i < in; ++i) dr[i] += g * w[i];
    }
  }
  return dx;
}

inline Matrix leaky_relu(const Matrix& x, double slope = kLeakySlope) {
  return map(x, [slope](double v) { return v > 0.0 ? v : slope * v; });
}

inline Matrix tanh_forward(const Matrix& x) {
  return map(x, [](double v) { return std::tanh(v); });
}

inline double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

/// log(1 + exp(v)) without overflow.
inline double softplus(double v) {
  return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax: empty input");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto p = softmax(logits.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

/// Inverted dropout: survivors are scaled by 1/(1-rate) so inference is the identity.
inline Matrix input_dropout(const Matrix& x, double rate, SeededRng& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("input_dropout: rate must be in [0,1)");
  const double keep_scale = 1.0 / (1.0 - rate);
  return map(x, [&](double v) { return rng.uniform() < rate ? 0.0 : v * keep_scale; });
}

/// Reparameterized sample from N(mu, I); noise_scale 0 returns mu.
inline Matrix gaussian_perturb(const Matrix& mu, SeededRng& rng, double noise_scale = 1.0) {
  return map(mu, [&](double v) { return v + noise_scale * rng.normal(); });
}

enum class Activation { identity, leaky_relu, tanh };

inline double activate(Activation a, double v) {
  switch (a) {
    case Activation::leaky_relu: return v > 0.0 ? v : kLeakySlope * v;
    case Activation::tanh: return std::tanh(v);
    case Activation::identity: break;
  }
  return v;
}

inline double activation_slope(Activation a, double pre) {
  switch (a) {
    case Activation::leaky_relu: return pre > 0.0 ? 1.0 : kLeakySlope;
    case Activation::tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::identity: break;
  }
  return 1.0;
}

/// Inputs and pre-activations recorded by stack_forward for the backward pass.
struct StackTrace {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
};

// Affine stack with `hidden` applied between layers; the last layer is linear.
inline Matrix stack_forward(std::span<const ParamBlock* const> blocks, const Matrix& x,
                            Activation hidden, StackTrace* trace = nullptr) {
  Matrix h = x;
  if (trace) {
    trace->inputs.clear();
    trace->pre.clear();
  }
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    Matrix pre = affine_forward(h, *blocks[l]);
    if (trace) trace->inputs.push_back(std::move(h));
    if (l + 1 < blocks.size()) {
      h = map(pre, [hidden](double v) { return activate(hidden, v); });
    } else {
      h = pre;
    }
    if (trace) trace->pre.push_back(std::move(pre));
  }
  return h;
}

/// Backpropagates `grad` (w.r.t. the stack output). Parameter gradients are
/// accumulated only when `accumulate` is set; returns the input gradient, or
/// an empty matrix when `need_input_grad` is false.
inline Matrix stack_backward(std::span<ParamBlock* const> blocks, const StackTrace& trace,
                             Matrix grad, Activation hidden, bool accumulate,
                             bool need_input_grad) {
  for (std::size_t l = blocks.size(); l-- > 0;) {
    if (l + 1 < blocks.size()) {
      const auto& pre = trace.pre[l].values();
      auto& g = grad.values();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= activation_slope(hidden, pre[i]);
    }
    if (accumulate) accumulate_affine_grads(*blocks[l], trace.inputs[l], grad);
    if (l == 0 && !need_input_grad) return {};
    grad = affine_input_grad(*blocks[l], grad);
  }
  return grad;
}

}  // namespace d2dtm

#endif  // D2DTM_LAYERS_HPP
