#ifndef D2DTM_GRADCHECK_HPP
#define D2DTM_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "d2dtm/layers.hpp"

namespace d2dtm {

/// Central differences (f(w+eps) - f(w-eps)) / 2eps for each referenced
/// scalar. `f` must be deterministic; every value is restored afterwards.
template <typename F>
std::vector<double> finite_difference_grad(F&& f, std::span<double* const> params, double eps) {
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& w = *params[i];
    const double saved = w;
    w = saved + eps;
    const double up = f();
    w = saved - eps;
    const double down = f();
    w = saved;
    out[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

/// Flattened parameter pointers of the given blocks, weights then bias.
inline std::vector<double*> parameter_pointers(std::span<ParamBlock* const> blocks) {
  std::vector<double*> out;
  for (ParamBlock* p : blocks) {
    for (std::size_t i = 0; i < p->parameter_count(); ++i) out.push_back(&p->param(i));
  }
  return out;
}

inline std::vector<double> gradient_values(std::span<ParamBlock* const> blocks) {
  std::vector<double> out;
  for (const ParamBlock* p : blocks) {
    for (std::size_t i = 0; i < p->parameter_count(); ++i) out.push_back(p->grad(i));
  }
  return out;
}

template <typename F>
std::vector<double> finite_difference_grad(F&& f, std::span<ParamBlock* const> blocks, double eps) {
  const auto ptrs = parameter_pointers(blocks);
  return finite_difference_grad(f, std::span<double* const>(ptrs), eps);
}

/// ‖a − b‖ / max(‖a‖ + ‖b‖, tiny); 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nb);
  if (denom < 1e-300) return 0.0;
  return std::sqrt(diff) / denom;
}

}  // namespace d2dtm

#endif  // D2DTM_GRADCHECK_HPP
