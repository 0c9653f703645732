#pragma once

// Lorentz (hyperboloid) model primitives.
//
// Points live on {x in R^{n+1} : <x,x>_L = -kappa, x_0 > 0}. Every kernel has
// a span-based form that works on rows of a contiguous table, and an owning
// form on LorentzPoint / TangentVector.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "herec/error.hpp"

namespace herec {

using ConstSpan = std::span<const double>;
using MutSpan = std::span<double>;

// Tangent norms above this are clipped before exp: cosh(32) ~ 4e13 is safe,
// cosh(710) overflows a double.
inline constexpr double kMaxTangentNorm = 32.0;
inline constexpr double kManifoldTolerance = 1e-9;
inline constexpr double kRenormalizeThreshold = 1e-12;

namespace detail {

inline void require_same_size(ConstSpan a, ConstSpan b, const char* op) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": length mismatch " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
}

// t / sinh(t), with the removable singularity at 0.
inline double t_over_sinh(double t) {
  if (std::abs(t) < 1e-4) return 1.0 - t * t / 6.0;
  return t / std::sinh(t);
}

inline double spatial_norm(ConstSpan x) {
  double s = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k) s += x[k] * x[k];
  return std::sqrt(s);
}

}  // namespace detail

/// -x0*y0 + sum_{i>=1} xi*yi
inline double lorentz_inner(ConstSpan x, ConstSpan y) {
  detail::require_same_size(x, y, "lorentz_inner");
  if (x.size() < 2) throw DimensionError("lorentz_inner: need at least 2 coordinates");
  double acc = -x[0] * y[0];
  for (std::size_t k = 1; k < x.size(); ++k) acc += x[k] * y[k];
  return acc;
}

/// sqrt(<v,v>_L), clamped at 0 for (numerically) light-like input.
inline double lorentz_norm(ConstSpan v) {
  return std::sqrt(std::max(0.0, lorentz_inner(v, v)));
}

class LorentzPoint {
 public:
  LorentzPoint() = default;

  explicit LorentzPoint(std::vector<double> coords, double kappa = 1.0)
      : coords_(std::move(coords)), kappa_(kappa) {
    if (coords_.size() < 2) throw DimensionError("LorentzPoint: need at least 2 coordinates");
    if (!(kappa_ > 0.0)) throw ParameterError("LorentzPoint: kappa must be positive");
  }

  // Lifts spatial coordinates onto the upper sheet: x0 = sqrt(kappa + |x|^2).
  static LorentzPoint from_spatial(ConstSpan spatial, double kappa = 1.0) {
    std::vector<double> c(spatial.size() + 1);
    double s = 0.0;
    for (std::size_t k = 0; k < spatial.size(); ++k) {
      c[k + 1] = spatial[k];
      s += spatial[k] * spatial[k];
    }
    c[0] = std::sqrt(kappa + s);
    return LorentzPoint(std::move(c), kappa);
  }

  ConstSpan coords() const noexcept { return coords_; }
  operator ConstSpan() const noexcept { return coords_; }  // NOLINT(google-explicit-constructor)
  double operator[](std::size_t k) const { return coords_[k]; }
  std::size_t ambient_dim() const noexcept { return coords_.size(); }
  std::size_t dim() const noexcept { return coords_.empty() ? 0 : coords_.size() - 1; }
  double kappa() const noexcept { return kappa_; }

  double constraint_error() const { return std::abs(lorentz_inner(coords_, coords_) + kappa_); }
  bool on_manifold(double tol = kManifoldTolerance) const {
    return !coords_.empty() && coords_[0] > 0.0 && constraint_error() < tol;
  }

  friend bool operator==(const LorentzPoint&, const LorentzPoint&) = default;

 private:
  std::vector<double> coords_;
  double kappa_ = 1.0;
};

// Ambient coordinates of a vector in the tangent space of some base point.
// The base is passed alongside at each call site rather than stored.
class TangentVector {
 public:
  TangentVector() = default;
  explicit TangentVector(std::vector<double> coords) : coords_(std::move(coords)) {}
  static TangentVector zero(std::size_t ambient_dim) {
    return TangentVector(std::vector<double>(ambient_dim, 0.0));
  }

  ConstSpan coords() const noexcept { return coords_; }
  MutSpan coords() noexcept { return coords_; }
  operator ConstSpan() const noexcept { return coords_; }  // NOLINT(google-explicit-constructor)
  double operator[](std::size_t k) const { return coords_[k]; }
  std::size_t size() const noexcept { return coords_.size(); }
  double norm() const { return lorentz_norm(coords_); }

  friend bool operator==(const TangentVector&, const TangentVector&) = default;

 private:
  std::vector<double> coords_;
};

inline LorentzPoint origin(std::size_t n, double kappa = 1.0) {
  std::vector<double> c(n + 1, 0.0);
  c[0] = std::sqrt(kappa);
  return LorentzPoint(std::move(c), kappa);
}

// Resets x0 from the spatial part so that <x,x>_L = -kappa up to rounding.
inline void renormalize(MutSpan x, double kappa = 1.0) {
  double s = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k) s += x[k] * x[k];
  x[0] = std::sqrt(kappa + s);
}

/// d_H(x,y) = sqrt(kappa) * arcosh(-<x,y>_L / kappa).
///
/// Close pairs use the equivalent 2*asinh(|x-y|_L / 2) form, which is exact
/// (zero) for identical points and does not lose half the digits near z = 1.
inline double dist(ConstSpan x, ConstSpan y, double kappa = 1.0) {
  const double z = -lorentz_inner(x, y) / kappa;
  const double sk = std::sqrt(kappa);
  if (z < 1.5) {
    double w = -(x[0] - y[0]) * (x[0] - y[0]);
    for (std::size_t k = 1; k < x.size(); ++k) w += (x[k] - y[k]) * (x[k] - y[k]);
    return 2.0 * sk * std::asinh(std::sqrt(std::max(0.0, w) / kappa) / 2.0);
  }
  return sk * std::acosh(std::max(1.0, z));
}

inline double dist(const LorentzPoint& x, const LorentzPoint& y) {
  return dist(x.coords(), y.coords(), x.kappa());
}

/// g + (<x,g>_L / kappa) x
inline void project_to_tangent_into(ConstSpan x, ConstSpan g, double kappa, MutSpan out) {
  detail::require_same_size(x, g, "project_to_tangent");
  const double c = lorentz_inner(x, g) / kappa;
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = g[k] + c * x[k];
}

inline TangentVector project_to_tangent(const LorentzPoint& x, ConstSpan g) {
  std::vector<double> out(g.size());
  project_to_tangent_into(x.coords(), g, x.kappa(), out);
  return TangentVector(std::move(out));
}

/// Exponential map at x. Zero-norm tangents return x; norms above
/// kMaxTangentNorm are clipped.
inline void exp_map_into(ConstSpan x, ConstSpan v, double kappa, MutSpan out) {
  detail::require_same_size(x, v, "exp_map");
  double nrm = lorentz_norm(v);
  if (!std::isfinite(nrm)) throw NumericalError("exp_map: non-finite tangent norm");
  if (nrm == 0.0) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  double scale = 1.0;
  if (nrm > kMaxTangentNorm) {
    scale = kMaxTangentNorm / nrm;
    nrm = kMaxTangentNorm;
  }
  const double sk = std::sqrt(kappa);
  const double ch = std::cosh(nrm / sk);
  const double sh = sk * std::sinh(nrm / sk) / nrm * scale;
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = ch * x[k] + sh * v[k];
  renormalize(out, kappa);
}

inline LorentzPoint exp_map(const LorentzPoint& x, const TangentVector& v) {
  std::vector<double> out(x.ambient_dim());
  exp_map_into(x.coords(), v.coords(), x.kappa(), out);
  return LorentzPoint(std::move(out), x.kappa());
}

/// Logarithmic map at x; log_x(x) is the zero vector.
inline void log_map_into(ConstSpan x, ConstSpan y, double kappa, MutSpan out) {
  detail::require_same_size(x, y, "log_map");
  const double d = dist(x, y, kappa);
  if (d == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  // u = y + <x,y>/kappa * x has Lorentz norm sqrt(kappa) * sinh(d / sqrt(kappa)).
  const double sk = std::sqrt(kappa);
  const double c = lorentz_inner(x, y) / kappa;
  const double f = detail::t_over_sinh(d / sk);  // d / (sk * sinh(d/sk))
  std::vector<double> u(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) u[k] = f * (y[k] + c * x[k]);
  project_to_tangent_into(x, u, kappa, out);
}

inline TangentVector log_map(const LorentzPoint& x, const LorentzPoint& y) {
  std::vector<double> out(x.ambient_dim());
  log_map_into(x.coords(), y.coords(), x.kappa(), out);
  return TangentVector(std::move(out));
}

// exp at the origin o = (sqrt(kappa), 0, ..., 0) for a tangent (0, v);
// `spatial` holds v and `out` receives n+1 coordinates.
inline void exp_origin_into(ConstSpan spatial, double kappa, MutSpan out) {
  double r = 0.0;
  for (double s : spatial) r += s * s;
  r = std::sqrt(r);
  if (!std::isfinite(r)) throw NumericalError("exp_origin: non-finite tangent norm");
  const double sk = std::sqrt(kappa);
  if (r == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    out[0] = sk;
    return;
  }
  const double rc = std::min(r, kMaxTangentNorm);
  const double f = sk * std::sinh(rc / sk) / r;
  for (std::size_t k = 0; k < spatial.size(); ++k) out[k + 1] = f * spatial[k];
  renormalize(out, kappa);
}

inline LorentzPoint exp_origin(ConstSpan spatial, double kappa = 1.0) {
  std::vector<double> out(spatial.size() + 1);
  exp_origin_into(spatial, kappa, out);
  return LorentzPoint(std::move(out), kappa);
}

// Spatial part of log_o(x); the time coordinate of log_o is always 0.
inline void log_origin_into(ConstSpan x, double kappa, MutSpan spatial_out) {
  const double s = detail::spatial_norm(x);
  if (s == 0.0) {
    std::fill(spatial_out.begin(), spatial_out.end(), 0.0);
    return;
  }
  const double sk = std::sqrt(kappa);
  const double f = sk * std::asinh(s / sk) / s;
  for (std::size_t k = 1; k < x.size(); ++k) spatial_out[k - 1] = f * x[k];
}

// Backward of exp_origin_into: accumulates dL/dv given dL/dh (ambient, n+1).
inline void exp_origin_backward(ConstSpan spatial, ConstSpan grad_h, double kappa,
                                MutSpan grad_spatial) {
  double r = 0.0;
  for (double s : spatial) r += s * s;
  r = std::sqrt(r);
  if (r == 0.0) {
    for (std::size_t k = 0; k < spatial.size(); ++k) grad_spatial[k] += grad_h[k + 1];
    return;
  }
  const double sk = std::sqrt(kappa);
  double radial_dot = 0.0;  // v_hat . g_sp
  for (std::size_t k = 0; k < spatial.size(); ++k) radial_dot += spatial[k] / r * grad_h[k + 1];
  double radial_coef;   // along v_hat
  double lateral_coef;  // on the complement
  if (r > kMaxTangentNorm) {
    // Clipped: output depends only on direction.
    lateral_coef = sk * std::sinh(kMaxTangentNorm / sk) / r;
    radial_coef = 0.0;
  } else {
    lateral_coef = sk * std::sinh(r / sk) / r;
    radial_coef = std::cosh(r / sk) * radial_dot + std::sinh(r / sk) * grad_h[0];
  }
  for (std::size_t k = 0; k < spatial.size(); ++k) {
    const double vh = spatial[k] / r;
    grad_spatial[k] += radial_coef * vh + lateral_coef * (grad_h[k + 1] - vh * radial_dot);
  }
}

// Backward of log_origin_into, using the extension that depends on the
// spatial coordinates only; dL/dx0 is left at 0 (it is removed by tangent
// projection anyway). Accumulates into grad_x (ambient, n+1).
inline void log_origin_backward(ConstSpan x, ConstSpan grad_spatial, double kappa, MutSpan grad_x) {
  const double s = detail::spatial_norm(x);
  if (s == 0.0) {
    for (std::size_t k = 1; k < x.size(); ++k) grad_x[k] += grad_spatial[k - 1];
    return;
  }
  const double sk = std::sqrt(kappa);
  const double lateral = sk * std::asinh(s / sk) / s;
  const double radial = 1.0 / std::sqrt(1.0 + s * s / kappa);
  double radial_dot = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k) radial_dot += x[k] / s * grad_spatial[k - 1];
  for (std::size_t k = 1; k < x.size(); ++k) {
    const double xh = x[k] / s;
    grad_x[k] += radial * radial_dot * xh + lateral * (grad_spatial[k - 1] - xh * radial_dot);
  }
}

/// Lorentzian centroid: sqrt(kappa) * s / sqrt(-<s,s>_L) with s = sum w_i x_i.
inline LorentzPoint lorentz_centroid(std::span<const LorentzPoint> points,
                                     std::span<const double> weights) {
  if (points.empty()) throw ParameterError("lorentz_centroid: empty point set");
  if (weights.size() != points.size()) throw DimensionError("lorentz_centroid: weight count mismatch");
  const std::size_t dim = points.front().ambient_dim();
  const double kappa = points.front().kappa();
  std::vector<double> s(dim, 0.0);
  double wsum = 0.0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (points[p].ambient_dim() != dim) throw DimensionError("lorentz_centroid: mixed dimensions");
    if (!(weights[p] >= 0.0)) throw ParameterError("lorentz_centroid: negative weight");
    wsum += weights[p];
    for (std::size_t k = 0; k < dim; ++k) s[k] += weights[p] * points[p][k];
  }
  if (wsum == 0.0) throw ParameterError("lorentz_centroid: all weights are zero");
  const double q = -lorentz_inner(s, s);
  if (!(q > 0.0) || s[0] <= 0.0) throw NumericalError("lorentz_centroid: weighted sum is not time-like");
  const double f = std::sqrt(kappa) / std::sqrt(q);
  for (double& c : s) c *= f;
  renormalize(s, kappa);
  return LorentzPoint(std::move(s), kappa);
}

inline LorentzPoint lorentz_centroid(std::span<const LorentzPoint> points) {
  std::vector<double> w(points.size(), 1.0);
  return lorentz_centroid(points, w);
}

// ---- Gradients -------------------------------------------------------------
//
// "egrad" = Euclidean gradient with respect to the ambient coordinates of the
// first argument, for the closed-form extension -<x,y>_L off the manifold.

/// d/dx of d_H(x, y). Zero at x == y (no unique direction).
inline void dist_egrad(ConstSpan x, ConstSpan y, double kappa, MutSpan out) {
  const double d = dist(x, y, kappa);
  if (d == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const double sk = std::sqrt(kappa);
  // dd/dz = sk / sinh(d/sk); dz/dx = -eta*y / kappa
  const double c = sk / std::sinh(d / sk) / kappa;
  out[0] = c * y[0];
  for (std::size_t k = 1; k < x.size(); ++k) out[k] = -c * y[k];
}

/// d/dx of d_H(x, y)^2; smooth through x == y.
inline void sq_dist_egrad(ConstSpan x, ConstSpan y, double kappa, MutSpan out, double scale = 1.0) {
  const double d = dist(x, y, kappa);
  const double sk = std::sqrt(kappa);
  const double c = scale * 2.0 * sk * sk * detail::t_over_sinh(d / sk) / kappa;
  out[0] = c * y[0];
  for (std::size_t k = 1; k < x.size(); ++k) out[k] = -c * y[k];
}

/// Riemannian gradient: flip the sign of coordinate 0 (inverse Lorentz
/// metric) and project onto the tangent space at x.
inline void riemannian_grad_into(ConstSpan x, ConstSpan egrad, double kappa, MutSpan out) {
  std::vector<double> g(egrad.begin(), egrad.end());
  g[0] = -g[0];
  project_to_tangent_into(x, g, kappa, out);
}

inline TangentVector riemannian_grad(const LorentzPoint& x, ConstSpan egrad) {
  std::vector<double> out(x.ambient_dim());
  riemannian_grad_into(x.coords(), egrad, x.kappa(), out);
  return TangentVector(std::move(out));
}

}  // namespace herec
