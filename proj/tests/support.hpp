#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "herec/manifold.hpp"

namespace herec::testing {

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

// Point at geodesic distance r in [rmin, rmax] from the origin, uniform direction.
inline LorentzPoint random_point(std::mt19937_64& g, std::size_t n, double rmin, double rmax) {
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) {
    x = nd(g);
    s += x * x;
  }
  const double r = uniform(g, rmin, rmax) / std::sqrt(s);
  for (auto& x : v) x *= r;
  return exp_origin(v);
}

inline std::vector<double> random_tangent(std::mt19937_64& g, const LorentzPoint& x, double scale) {
  std::normal_distribution<double> nd;
  std::vector<double> v(x.ambient_dim());
  for (auto& c : v) c = scale * nd(g);
  auto t = project_to_tangent(x, v);
  return {t.coords().begin(), t.coords().end()};
}

inline LorentzPoint step_along(const LorentzPoint& x, std::span<const double> v, double h) {
  std::vector<double> w(v.begin(), v.end());
  for (auto& c : w) c *= h;
  return exp_map(x, TangentVector(std::move(w)));
}

// Relative mismatch between the analytic Riemannian gradient (from an ambient
// Euclidean gradient) and central differences of f along geodesics in the
// projected coordinate directions.
inline double riemannian_fd_error(const std::function<double(const LorentzPoint&)>& f, const LorentzPoint& x,
                                  std::span<const double> egrad, double h = 1e-5) {
  const auto rg = riemannian_grad(x, egrad);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < x.ambient_dim(); ++k) {
    std::vector<double> e(x.ambient_dim(), 0.0);
    e[k] = 1.0;
    const auto dir = project_to_tangent(x, e);
    const double fd = (f(step_along(x, dir.coords(), h)) - f(step_along(x, dir.coords(), -h))) / (2.0 * h);
    const double an = lorentz_inner(rg.coords(), dir.coords());
    num += (fd - an) * (fd - an);
    den += an * an;
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace herec::testing
