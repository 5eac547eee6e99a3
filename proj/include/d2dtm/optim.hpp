#ifndef D2DTM_OPTIM_HPP
#define D2DTM_OPTIM_HPP

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "d2dtm/layers.hpp"

namespace d2dtm {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One Adam update over `blocks`, then zeroes their gradients. Nothing is
/// modified if any gradient is non-finite.
inline void optimizer_step(std::span<ParamBlock* const> blocks, double lr,
                           const AdamSettings& hyper = {}) {
  for (const ParamBlock* p : blocks) {
    if (!p->grad_weight.all_finite()) {
      throw NonFiniteError("non-finite weight gradient in block '" + p->name + "'");
    }
    for (double g : p->grad_bias) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite bias gradient in block '" + p->name + "'");
    }
  }
  for (ParamBlock* p : blocks) {
    auto& st = p->opt;
    ++st.step;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(st.step));
    auto update = [&](double& w, double g, double& m, double& v) {
      m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
      v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g;
      w -= lr * (m / c1) / (std::sqrt(v / c2) + hyper.epsilon);
    };
    auto& w = p->weight.values();
    const auto& gw = p->grad_weight.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      update(w[i], gw[i], st.m_weight.values()[i], st.v_weight.values()[i]);
    }
    for (std::size_t i = 0; i < p->bias.size(); ++i) {
      update(p->bias[i], p->grad_bias[i], st.m_bias[i], st.v_bias[i]);
    }
    p->zero_grad();
  }
}

}  // namespace d2dtm

#endif  // D2DTM_OPTIM_HPP
