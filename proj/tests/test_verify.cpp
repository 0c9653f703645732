#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "herec/error.hpp"
#include "herec/verify.hpp"
#include "support.hpp"

using namespace herec;

namespace {

constexpr double kPi = std::numbers::pi;

// d_H from spatial coordinates only, written out independently.
double chart_distance(const std::vector<double>& xs, const std::vector<double>& ys) {
  double nx = 0.0, ny = 0.0, dot = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    nx += xs[k] * xs[k];
    ny += ys[k] * ys[k];
    dot += xs[k] * ys[k];
  }
  return std::acosh(std::sqrt(1.0 + nx) * std::sqrt(1.0 + ny) - dot);
}

double chart_fd_magnitude(std::vector<double> xs, const std::vector<double>& ys, double h) {
  double s = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double keep = xs[k];
    xs[k] = keep + h;
    const double fp = chart_distance(xs, ys);
    xs[k] = keep - h;
    const double fm = chart_distance(xs, ys);
    xs[k] = keep;
    s += std::pow((fp - fm) / (2.0 * h), 2);
  }
  return std::sqrt(s);
}

std::vector<double> spatial(const LorentzPoint& p) { return {p.coords().begin() + 1, p.coords().end()}; }

}  // namespace

TEST(HyperbolicGrad, MatchesIndependentFiniteDifferences) {
  std::mt19937_64 r(1);
  int probes = 0;
  while (probes < 200) {
    const auto x = herec::testing::random_point(r, 3, 0.0, 3.0);
    const auto y = herec::testing::random_point(r, 3, 0.0, 3.0);
    const double d = dist(x, y);
    if (d < 0.5 || d > 5.0) continue;
    ++probes;
    const double exact = hyperbolic_grad_magnitude(x, y);
    const double fd = chart_fd_magnitude(spatial(x), spatial(y), 1e-6);
    EXPECT_NEAR(exact, fd, 1e-5 * exact) << "d " << d;
    EXPECT_NEAR(hyperbolic_grad_magnitude_fd(x, y), exact, 1e-5 * exact);
  }
}

TEST(HyperbolicGrad, SwapSymmetricAtEqualNorms) {
  // With |x| = |y| the two chart gradients mirror each other.
  for (double t : {0.3, 1.0, 2.0, kPi}) {
    const auto [x, y] = probe_points(3.0, 3.0, t);
    EXPECT_NEAR(hyperbolic_grad_magnitude(x, y), hyperbolic_grad_magnitude(y, x), 1e-13);
  }
}

TEST(HyperbolicGrad, DecreasesWithNormAtFixedAngle) {
  double prev = INFINITY;
  for (double n : {0.5, 1.0, 2.0, 5.0, 10.0, 20.0}) {
    const auto [x, y] = probe_points(n, 4.0, kPi / 3.0);
    const double m = hyperbolic_grad_magnitude(x, y);
    EXPECT_LT(m, prev) << "n " << n;
    prev = m;
  }
}

TEST(HyperbolicGrad, SingularAtCoincidentPoints) {
  const auto x = LorentzPoint::from_spatial(std::vector<double>{0.4, 0.2});
  EXPECT_THROW(hyperbolic_grad_magnitude(x, x), NumericalError);
}

TEST(Prop1Approximation, Examples) {
  EXPECT_NEAR(prop1_approximation(5.0, 5.0, kPi / 2.0), std::sqrt(2.0) / 5.0, 1e-15);
  EXPECT_NEAR(prop1_approximation(5.0, 5.0, kPi / 2.0), 0.2828, 1e-4);
  EXPECT_NEAR(prop1_approximation(10.0, 5.0, 1.1), prop1_approximation(5.0, 5.0, 1.1) / 2.0, 1e-15);
  EXPECT_NEAR(prop1_approximation(4.0, 2.0, kPi), 0.25, 1e-15);
  EXPECT_THROW(prop1_approximation(5.0, 5.0, 0.0), ParameterError);
  EXPECT_THROW(prop1_approximation(-1.0, 5.0, 1.0), ParameterError);
}

TEST(ErrorBound, ReferenceBoundIsAboutTwoPercent) {
  const auto p = error_bound_report(5.0, 5.0, kPi / 2.0);
  EXPECT_NEAR(p.z, 26.0, 1e-12);
  // 1/(2·25·1) + 1/(2·26²)
  EXPECT_NEAR(p.bound, 0.02 + 1.0 / 1352.0, 1e-15);
  EXPECT_NEAR(p.bound, 0.021, 0.0005);
}

TEST(ErrorBound, ReferenceValuesFromHandEvaluation) {
  // ∇z = (5, -5) in the chart, sqrt(z² - 1) = sqrt(675).
  const auto p = error_bound_report(5.0, 5.0, kPi / 2.0);
  EXPECT_NEAR(p.exact, 5.0 * std::sqrt(2.0) / std::sqrt(675.0), 1e-15);
  EXPECT_NEAR(p.fd, p.exact, 1e-8);
}

TEST(ErrorBound, ObservedErrorWithinStatedBoundAcrossGrid) {
  const auto norms = default_grid_norms();
  const auto thetas = default_grid_thetas();
  for (const auto& p : error_bound_grid(norms, thetas)) {
    EXPECT_LE(p.rel_err, p.bound) << "|x|=" << p.norm_x << " |y|=" << p.norm_y << " theta=" << p.theta;
  }
}

TEST(ErrorBound, SymmetricEstimateCoversEqualNormProbes) {
  const auto norms = default_grid_norms();
  const auto thetas = default_grid_thetas();
  for (const auto& p : error_bound_grid(norms, thetas)) {
    if (p.norm_x != p.norm_y) continue;
    EXPECT_LE(p.rel_err, p.full_bound) << "|x|=" << p.norm_x << " |y|=" << p.norm_y << " theta=" << p.theta;
  }
}

TEST(ErrorBound, VanishesForLargeNorms) {
  double prev = INFINITY;
  for (double n : {2.0, 5.0, 20.0, 100.0, 1000.0}) {
    const auto p = error_bound_report(n, n, kPi / 2.0);
    EXPECT_LT(p.bound, prev);
    EXPECT_LT(p.rel_err, p.full_bound);
    prev = p.bound;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(EuclideanGrad, UnitMagnitude) {
  std::mt19937_64 r(2);
  std::normal_distribution<double> nd;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(4), y(4);
    for (auto& v : x) v = 5.0 * nd(r);
    for (auto& v : y) v = 5.0 * nd(r);
    EXPECT_NEAR(euclidean_grad_magnitude(x, y), 1.0, 1e-12);
    EXPECT_NEAR(euclidean_grad_magnitude_fd(x, y), 1.0, 1e-6);
  }
  EXPECT_THROW(euclidean_grad_magnitude(std::vector<double>{1, 2}, std::vector<double>{1, 2}), NumericalError);
}

TEST(ProbeCsv, HeaderAndRows) {
  const std::vector<double> norms{2.0, 5.0}, thetas{kPi / 2.0};
  const auto grid = error_bound_grid(norms, thetas);
  std::ostringstream os;
  write_probe_csv(os, grid);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "norm_x,norm_y,theta,exact,approx,fd,rel_err,bound");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 4);
}

TEST(Summary, ReportsEachCheck) {
  const auto norms = default_grid_norms();
  const auto thetas = default_grid_thetas();
  const auto s = verify_summary(error_bound_grid(norms, thetas));
  EXPECT_EQ(s.grid_points, 64u);
  EXPECT_TRUE(s.euclidean_constant);
  EXPECT_TRUE(s.adaptive);
  EXPECT_NEAR(s.reference.rel_err, 0.0392, 1e-4);
}
