#pragma once

// Riemannian SGD for points on the hyperboloid and Adam for the adapter.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "herec/error.hpp"
#include "herec/manifold.hpp"

namespace herec {

inline bool all_finite(ConstSpan v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// x <- exp_x(-lr * proj_x(eta * egrad)), then renormalised when the
/// constraint has drifted past 1e-12.
inline void rsgd_step_inplace(MutSpan point, ConstSpan euclidean_grad, double lr, double kappa = 1.0) {
  if (!(lr > 0.0)) throw ParameterError("rsgd_step: learning rate must be positive");
  if (!all_finite(euclidean_grad)) throw NumericalError("rsgd_step: non-finite gradient");
  const std::size_t w = point.size();
  std::vector<double> rg(w);
  riemannian_grad_into(point, euclidean_grad, kappa, rg);
  bool zero = true;
  for (double& v : rg) {
    v *= -lr;
    zero = zero && v == 0.0;
  }
  if (zero) return;
  exp_map_into(point, rg, kappa, point);
  if (std::abs(lorentz_inner(point, point) + kappa) > kRenormalizeThreshold) renormalize(point, kappa);
}

inline LorentzPoint rsgd_step(const LorentzPoint& point, ConstSpan euclidean_grad, double lr) {
  if (euclidean_grad.size() != point.ambient_dim()) throw DimensionError("rsgd_step: gradient length mismatch");
  std::vector<double> c(point.coords().begin(), point.coords().end());
  rsgd_step_inplace(c, euclidean_grad, lr, point.kappa());
  return LorentzPoint(std::move(c), point.kappa());
}

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 added to the gradient
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam update. Rejects non-finite gradients without touching
/// params or state.
inline void adapter_step(std::span<double> params, std::span<const double> grads, AdamState& st) {
  if (params.size() != grads.size()) throw DimensionError("adapter_step: gradient size mismatch");
  if (!(st.lr > 0.0)) throw ParameterError("adapter_step: learning rate must be positive");
  if (!all_finite(grads)) throw NumericalError("adapter_step: non-finite gradient");
  if (st.m.empty()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  if (st.m.size() != params.size()) throw DimensionError("adapter_step: state size mismatch");
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grads[k] + st.weight_decay * params[k];
    st.m[k] = st.beta1 * st.m[k] + (1.0 - st.beta1) * g;
    st.v[k] = st.beta2 * st.v[k] + (1.0 - st.beta2) * g * g;
    const double mh = st.m[k] / bc1;
    const double vh = st.v[k] / bc2;
    params[k] -= st.lr * mh / (std::sqrt(vh) + st.eps);
  }
}

}  // namespace herec
