#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "sabr/network.hpp"

namespace sabr::theory {

// Distributions of interval-centre values feeding a ReLU unit.
struct Gaussian {
    double mu, sigma;
};

// Density a on [-l, 0), b on (0, l] with l = 1/(a+b).
struct PiecewiseUniform {
    double a, b;
    double support() const { return 1.0 / (a + b); }
};

struct Empirical {
    std::vector<double> samples;
};

using CentreDistribution = std::variant<Gaussian, PiecewiseUniform, Empirical>;

// Exact radius of the interval ReLU image of [centre-delta, centre+delta].
double relu_box_radius(double centre, double delta);

// E[delta_y] for an input radius delta_x. Piecewise-uniform uses the
// closed form, Gaussian adaptive quadrature (tol 1e-10), Empirical the
// exact per-sample evaluation.
double expected_output_radius(const CentreDistribution& dist, double delta_x);

// (d/d delta) E[delta_y] = P(-d < x < d)/2 + P(x > d), and the curvature
// (p(-d) - p(d))/2. Requires a density (Empirical is rejected).
std::pair<double, double> growth_rate_derivative(const CentreDistribution& dist, double delta_x);

struct McEstimate {
    double mean;
    double std_error;
};

// Monte-Carlo estimate of E[delta_y]; draws sharded deterministically.
McEstimate mc_expected_output_radius(const CentreDistribution& dist, double delta_x, size_t draws, uint64_t seed,
                                     int workers);

struct GrowthCurveRow {
    double delta;
    double expected_radius;
    double linear_ref;  // tangent at the anchor point
};

// Curve of E[delta_y] over a delta grid with the tangent-line reference
// anchored at `anchor`.
std::vector<GrowthCurveRow> growth_curve(const CentreDistribution& dist, const std::vector<double>& grid,
                                         double anchor);

// Same for a network: mean output-box radius over the given input
// centres; tangent estimated by central differences at the anchor.
std::vector<GrowthCurveRow> growth_curve(const Network<double>& net, const std::vector<Tensor<double>>& centres,
                                         const std::vector<double>& grid, double anchor, double cs = 1.0);

// true iff every point beyond the anchor lies strictly above the tangent
bool super_linear(const std::vector<GrowthCurveRow>& curve, double anchor, double tol = 0.0);

// Empirical per-layer growth rate: mean output radius / input radius for
// a uniform input radius delta over the given input samples. The layer
// must be Linear, Conv2d or ReLU; delta must be > 0.
double layer_growth_rate(const Network<double>& net, int layer_index, const std::vector<Tensor<double>>& inputs,
                         double delta);

// Exact growth rate of a Linear layer: mean per-output l1 norm of the
// incoming weights.
double linear_layer_growth_exact(const Network<double>& net, int layer_index);

// Least-squares quadratic fit y ~ c2 x^2 + c1 x + c0, returned as
// (c2, c1, c0).
std::array<double, 3> fit_quadratic(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace sabr::theory
