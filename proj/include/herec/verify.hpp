#pragma once

// Gradient-magnitude probes for the distance function: exact hyperbolic
// magnitude, its large-norm closed form, the error bound, and the Euclidean
// baseline.

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include "herec/error.hpp"
#include "herec/manifold.hpp"

namespace herec {

inline constexpr double kFiniteDifferenceStep = 1e-5;

struct GradProbe {
  double norm_x = 0.0;
  double norm_y = 0.0;
  double theta = 0.0;
  double z = 0.0;        // -<x, y>_L
  double exact = 0.0;
  double approx = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;  // |approx - exact| / exact
  double bound = 0.0;    // 1/(2|x|^2 (1 - cos θ)) + 1/(2 z^2)
  double full_bound = 0.0;  // first-order estimate keeping the 1/|y|^2 term
  bool bound_holds = false;
};

namespace detail {

inline void check_probe_args(double nx, double ny, double theta) {
  if (!(nx > 0.0) || !(ny > 0.0)) throw ParameterError("probe norms must be positive");
  if (!(theta > 0.0) || theta > std::numbers::pi) throw ParameterError("probe angle must lie in (0, pi]");
}

// d_H as a function of x's spatial coordinates, x0 implied by the constraint.
inline double chart_dist(ConstSpan xs, const LorentzPoint& y) {
  return dist(LorentzPoint::from_spatial(xs, y.kappa()), y);
}

}  // namespace detail

/// Places x̂ along e1 and ŷ at angle θ in the (e1, e2) plane, in `dim`
/// spatial dimensions.
inline std::pair<LorentzPoint, LorentzPoint> probe_points(double nx, double ny, double theta, std::size_t dim = 2) {
  detail::check_probe_args(nx, ny, theta);
  if (dim < 2) throw DimensionError("probe_points: need at least two spatial dimensions");
  std::vector<double> xs(dim, 0.0), ys(dim, 0.0);
  xs[0] = nx;
  ys[0] = ny * std::cos(theta);
  ys[1] = ny * std::sin(theta);
  return {LorentzPoint::from_spatial(xs), LorentzPoint::from_spatial(ys)};
}

/// ‖∇_x d_H‖ = ‖∇_x z‖ / sqrt(z² − 1), differentiating in x's spatial chart
/// (x0 = sqrt(1 + ‖x‖²)), so ∇_x z = x·y0/x0 − y.
inline double hyperbolic_grad_magnitude(const LorentzPoint& x, const LorentzPoint& y) {
  if (x.ambient_dim() != y.ambient_dim()) throw DimensionError("hyperbolic_grad_magnitude: dimension mismatch");
  if (x.kappa() != 1.0 || y.kappa() != 1.0) throw ParameterError("hyperbolic_grad_magnitude: curvature must be 1");
  const double z = -lorentz_inner(x.coords(), y.coords());
  if (!(z > 1.0)) throw NumericalError("hyperbolic_grad_magnitude: gradient singular at x = y");
  double s = 0.0;
  for (std::size_t k = 1; k < x.ambient_dim(); ++k) {
    const double g = x[k] * y[0] / x[0] - y[k];
    s += g * g;
  }
  return std::sqrt(s) / std::sqrt(z * z - 1.0);
}

/// Central differences of d_H over x's spatial chart.
inline double hyperbolic_grad_magnitude_fd(const LorentzPoint& x, const LorentzPoint& y,
                                           double step = kFiniteDifferenceStep) {
  std::vector<double> xs(x.coords().begin() + 1, x.coords().end());
  double s = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double keep = xs[k];
    xs[k] = keep + step;
    const double fp = detail::chart_dist(xs, y);
    xs[k] = keep - step;
    const double fm = detail::chart_dist(xs, y);
    xs[k] = keep;
    const double g = (fp - fm) / (2.0 * step);
    s += g * g;
  }
  return std::sqrt(s);
}

/// ‖x̂ − ŷ‖ / (‖x‖ (1 − cos θ)) with ‖x̂ − ŷ‖ = sqrt(2 − 2 cos θ).
inline double prop1_approximation(double nx, double ny, double theta) {
  detail::check_probe_args(nx, ny, theta);
  const double c = std::cos(theta);
  return std::sqrt(2.0 - 2.0 * c) / (nx * (1.0 - c));
}

inline double prop1_error_bound(double nx, double theta, double z) {
  return 1.0 / (2.0 * nx * nx * (1.0 - std::cos(theta))) + 1.0 / (2.0 * z * z);
}

inline double prop1_full_error_bound(double nx, double ny, double theta, double z) {
  return 0.5 * (1.0 / (nx * nx) + 1.0 / (ny * ny)) / (1.0 - std::cos(theta)) + 1.0 / (2.0 * z * z);
}

inline GradProbe error_bound_report(double nx, double ny, double theta) {
  const auto [x, y] = probe_points(nx, ny, theta);
  GradProbe p;
  p.norm_x = nx;
  p.norm_y = ny;
  p.theta = theta;
  p.z = -lorentz_inner(x.coords(), y.coords());
  p.exact = hyperbolic_grad_magnitude(x, y);
  p.approx = prop1_approximation(nx, ny, theta);
  p.fd = hyperbolic_grad_magnitude_fd(x, y);
  p.rel_err = std::abs(p.approx - p.exact) / p.exact;
  p.bound = prop1_error_bound(nx, theta, p.z);
  p.full_bound = prop1_full_error_bound(nx, ny, theta, p.z);
  p.bound_holds = p.rel_err <= p.bound;
  return p;
}

/// ‖(x − y) / ‖x − y‖‖, the gradient of the Euclidean distance in x.
inline double euclidean_grad_magnitude(std::span<const double> x, std::span<const double> y) {
  detail::require_same_size(x, y, "euclidean_grad_magnitude");
  double n2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) n2 += (x[k] - y[k]) * (x[k] - y[k]);
  if (n2 == 0.0) throw NumericalError("euclidean_grad_magnitude: gradient singular at x = y");
  const double n = std::sqrt(n2);
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double g = (x[k] - y[k]) / n;
    s += g * g;
  }
  return std::sqrt(s);
}

inline double euclidean_grad_magnitude_fd(std::span<const double> x, std::span<const double> y,
                                          double step = kFiniteDifferenceStep) {
  detail::require_same_size(x, y, "euclidean_grad_magnitude_fd");
  auto d = [&](std::span<const double> a) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - y[k]) * (a[k] - y[k]);
    return std::sqrt(s);
  };
  std::vector<double> xs(x.begin(), x.end());
  double s = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double keep = xs[k];
    xs[k] = keep + step;
    const double fp = d(xs);
    xs[k] = keep - step;
    const double fm = d(xs);
    xs[k] = keep;
    s += ((fp - fm) / (2.0 * step)) * ((fp - fm) / (2.0 * step));
  }
  return std::sqrt(s);
}

inline std::vector<double> default_grid_norms() { return {2.0, 5.0, 10.0, 20.0}; }

inline std::vector<double> default_grid_thetas() {
  constexpr double pi = std::numbers::pi;
  return {pi / 6.0, pi / 4.0, pi / 2.0, 3.0 * pi / 4.0};
}

inline std::vector<GradProbe> error_bound_grid(std::span<const double> norms, std::span<const double> thetas) {
  std::vector<GradProbe> out;
  for (double nx : norms) {
    for (double ny : norms) {
      for (double t : thetas) out.push_back(error_bound_report(nx, ny, t));
    }
  }
  return out;
}

inline void write_probe_csv(std::ostream& os, std::span<const GradProbe> probes) {
  os << "norm_x,norm_y,theta,exact,approx,fd,rel_err,bound\n";
  const auto old = os.precision(17);
  for (const auto& p : probes) {
    os << p.norm_x << ',' << p.norm_y << ',' << p.theta << ',' << p.exact << ',' << p.approx << ',' << p.fd << ','
       << p.rel_err << ',' << p.bound << '\n';
  }
  os.precision(old);
}

struct VerifySummary {
  GradProbe reference;            // |x| = |y| = 5, θ = π/2
  bool reference_within_slack = false;  // rel_err <= 2.1% + 0.5pp
  bool euclidean_constant = false;
  bool adaptive = false;          // strictly decreasing over |x| in {1, 2, 5, 10}
  std::size_t grid_points = 0;
  std::size_t grid_bound_holds = 0;

  bool passed() const {
    return reference_within_slack && euclidean_constant && adaptive && grid_bound_holds == grid_points;
  }
};

inline VerifySummary verify_summary(std::span<const GradProbe> grid) {
  VerifySummary s;
  s.reference = error_bound_report(5.0, 5.0, std::numbers::pi / 2.0);
  s.reference_within_slack = s.reference.rel_err <= 0.021 + 0.005;
  s.euclidean_constant = true;
  for (int k = 1; k <= 10; ++k) {
    const std::vector<double> a{static_cast<double>(k), 0.5}, b{-1.0, static_cast<double>(k) * 0.3};
    s.euclidean_constant = s.euclidean_constant && std::abs(euclidean_grad_magnitude(a, b) - 1.0) <= 1e-12;
  }
  s.adaptive = true;
  double prev = std::numeric_limits<double>::infinity();
  for (double n : {1.0, 2.0, 5.0, 10.0}) {
    const auto [x, y] = probe_points(n, n, std::numbers::pi / 2.0);
    const double m = hyperbolic_grad_magnitude(x, y);
    s.adaptive = s.adaptive && m < prev;
    prev = m;
  }
  s.grid_points = grid.size();
  for (const auto& p : grid) s.grid_bound_holds += p.bound_holds ? 1 : 0;
  return s;
}

}  // namespace herec
