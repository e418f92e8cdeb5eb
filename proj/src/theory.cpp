#include "sabr/theory.hpp"

#include <array>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "sabr/box.hpp"
#include "sabr/error.hpp"
#include "sabr/parallel.hpp"
#include "sabr/rng.hpp"

namespace sabr::theory {

namespace {

double normal_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * 2.5066282746310005024);
}

double normal_cdf(double x, double mu, double sigma) {
    return 0.5 * std::erfc(-(x - mu) / (sigma * 1.4142135623730950488));
}

}  // namespace

double relu_box_radius(double centre, double delta) {
    const double u = centre + delta;
    if (u <= 0.0) return 0.0;
    if (centre - delta <= 0.0) return 0.5 * u;
    return delta;
}

double expected_output_radius(const CentreDistribution& dist, double delta_x) {
    if (delta_x < 0.0) throw Error("expected_output_radius: delta must be >= 0");
    if (delta_x == 0.0) return 0.0;

    if (const auto* g = std::get_if<Gaussian>(&dist)) {
        // E = \int_{-d}^{d} (x+d)/2 p(x) dx + d P(x > d); the finite piece
        // via adaptive quadrature, the tail in closed form.
        const double mu = g->mu, sigma = g->sigma, d = delta_x;
        const auto f = [&](double x) { return 0.5 * (x + d) * normal_pdf(x, mu, sigma); };
        double err = 0.0;
        const double inner =
            boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, -d, d, 15, 1e-10, &err);
        const double tail = d * (1.0 - normal_cdf(d, mu, sigma));
        return inner + tail;
    }
    if (const auto* p = std::get_if<PiecewiseUniform>(&dist)) {
        const double l = p->support(), a = p->a, b = p->b, d = delta_x;
        if (d <= l) return d * d * (a - b) / 4.0 + d * b / (a + b);
        // whole support inside [-d, d]
        return 0.5 * d + (b - a) * l * l / 4.0;
    }
    const auto& e = std::get<Empirical>(dist);
    if (e.samples.empty()) throw Error("expected_output_radius: empty empirical distribution");
    double acc = 0.0;
    for (double c : e.samples) acc += relu_box_radius(c, delta_x);
    return acc / static_cast<double>(e.samples.size());
}

std::pair<double, double> growth_rate_derivative(const CentreDistribution& dist, double delta_x) {
    if (delta_x < 0.0) throw Error("growth_rate_derivative: delta must be >= 0");
    if (const auto* g = std::get_if<Gaussian>(&dist)) {
        const double d = delta_x;
        const double p_in = normal_cdf(d, g->mu, g->sigma) - normal_cdf(-d, g->mu, g->sigma);
        const double p_above = 1.0 - normal_cdf(d, g->mu, g->sigma);
        const double first = 0.5 * p_in + p_above;
        const double second = 0.5 * (normal_pdf(-d, g->mu, g->sigma) - normal_pdf(d, g->mu, g->sigma));
        return {first, second};
    }
    if (const auto* p = std::get_if<PiecewiseUniform>(&dist)) {
        const double l = p->support(), a = p->a, b = p->b, d = delta_x;
        if (d <= l) {
            const double p_in = d * (a + b);
            const double p_above = b * (l - d);
            return {0.5 * p_in + p_above, 0.5 * (a - b)};
        }
        return {0.5, 0.0};
    }
    throw Error("growth_rate_derivative: empirical distribution has no density");
}

McEstimate mc_expected_output_radius(const CentreDistribution& dist, double delta_x, size_t draws, uint64_t seed,
                                     int workers) {
    if (delta_x < 0.0) throw Error("mc_expected_output_radius: delta must be >= 0");
    if (workers < 1) workers = 1;
    const size_t shards = static_cast<size_t>(workers);
    std::vector<double> sums(shards, 0.0), sqs(shards, 0.0);

    auto draw_one = [&](Rng& rng) -> double {
        if (const auto* g = std::get_if<Gaussian>(&dist)) return rng.normal(g->mu, g->sigma);
        if (const auto* p = std::get_if<PiecewiseUniform>(&dist)) {
            const double l = p->support();
            if (rng.uniform() < p->a * l) return rng.uniform(-l, 0.0);
            return rng.uniform(0.0, l);
        }
        const auto& e = std::get<Empirical>(dist);
        return e.samples[static_cast<size_t>(rng.below(e.samples.size()))];
    };

    parallel_for(shards, workers, [&](size_t begin, size_t end, int) {
        for (size_t s = begin; s < end; ++s) {
            const size_t base = draws / shards, rem = draws % shards;
            const size_t count = base + (s < rem ? 1 : 0);
            Rng rng(mix_seed(seed, s));
            double acc = 0.0, acc2 = 0.0;
            for (size_t i = 0; i < count; ++i) {
                const double y = relu_box_radius(draw_one(rng), delta_x);
                acc += y;
                acc2 += y * y;
            }
            sums[s] = acc;
            sqs[s] = acc2;
        }
    });

    double sum = 0.0, sq = 0.0;
    for (size_t s = 0; s < shards; ++s) {
        sum += sums[s];
        sq += sqs[s];
    }
    const double nd = static_cast<double>(draws);
    const double mean = sum / nd;
    const double var = sq / nd - mean * mean;
    return {mean, std::sqrt((var > 0.0 ? var : 0.0) / nd)};
}

std::vector<GrowthCurveRow> growth_curve(const CentreDistribution& dist, const std::vector<double>& grid,
                                         double anchor) {
    const double e0 = expected_output_radius(dist, anchor);
    const double d0 = growth_rate_derivative(dist, anchor).first;
    std::vector<GrowthCurveRow> rows;
    rows.reserve(grid.size());
    for (double d : grid)
        rows.push_back({d, expected_output_radius(dist, d), e0 + (d - anchor) * d0});
    return rows;
}

namespace {

double mean_output_radius(const Network<double>& net, const std::vector<Tensor<double>>& centres, double delta,
                          double cs) {
    double acc = 0.0;
    size_t count = 0;
    for (const auto& c : centres) {
        const BoxTensor<double> in{c, Tensor<double>::full(c.shape(), delta)};
        const BoxTrace<double> tr = propagate_box(net, in, cs);
        const Tensor<double>& r = tr.out().radius;
        for (size_t i = 0; i < r.size(); ++i) acc += r[i];
        count += r.size();
    }
    return acc / static_cast<double>(count);
}

}  // namespace

std::vector<GrowthCurveRow> growth_curve(const Network<double>& net, const std::vector<Tensor<double>>& centres,
                                         const std::vector<double>& grid, double anchor, double cs) {
    if (centres.empty()) throw Error("growth_curve: need at least one centre");
    const double h = (anchor > 0.0 ? anchor : 1.0) * 1e-4;
    const double e0 = mean_output_radius(net, centres, anchor, cs);
    double d0;
    if (anchor - h >= 0.0)
        d0 = (mean_output_radius(net, centres, anchor + h, cs) - mean_output_radius(net, centres, anchor - h, cs)) /
             (2.0 * h);
    else
        d0 = (mean_output_radius(net, centres, anchor + h, cs) - e0) / h;
    std::vector<GrowthCurveRow> rows;
    rows.reserve(grid.size());
    for (double d : grid) rows.push_back({d, mean_output_radius(net, centres, d, cs), e0 + (d - anchor) * d0});
    return rows;
}

bool super_linear(const std::vector<GrowthCurveRow>& curve, double anchor, double tol) {
    for (const auto& r : curve)
        if (r.delta > anchor && r.expected_radius <= r.linear_ref + tol) return false;
    return true;
}

double layer_growth_rate(const Network<double>& net, int layer_index, const std::vector<Tensor<double>>& inputs,
                         double delta) {
    if (!(delta > 0.0)) throw Error("layer_growth_rate: input radius must be > 0");
    if (layer_index < 0 || layer_index >= static_cast<int>(net.layers.size()))
        throw Error("layer_growth_rate: layer index out of range");
    const Layer<double>& l = net.layers[static_cast<size_t>(layer_index)];
    if (l.kind != LayerKind::Linear && l.kind != LayerKind::Conv2d && l.kind != LayerKind::ReLU)
        throw Error("layer_growth_rate: layer must be Linear, Conv2d or ReLU");
    if (inputs.empty()) throw Error("layer_growth_rate: need at least one input sample");

    double acc = 0.0;
    size_t count = 0;
    for (const auto& x : inputs) {
        BoxTensor<double> in{x, Tensor<double>::full(x.shape(), delta)};
        BoxTensor<double> out;
        switch (l.kind) {
            case LayerKind::Linear:
                out = box_linear(l.weight, &l.bias, in);
                break;
            case LayerKind::Conv2d:
                out = box_conv2d(l.weight, &l.bias, l.stride, l.padding, in);
                break;
            default:
                out = box_relu(in, 1.0);
                break;
        }
        for (size_t i = 0; i < out.radius.size(); ++i) acc += out.radius[i];
        count += out.radius.size();
    }
    return acc / static_cast<double>(count) / delta;
}

double linear_layer_growth_exact(const Network<double>& net, int layer_index) {
    const Layer<double>& l = net.layers[static_cast<size_t>(layer_index)];
    if (l.kind != LayerKind::Linear) throw Error("linear_layer_growth_exact: not a Linear layer");
    const int in = l.weight.dim(0), out = l.weight.dim(1);
    double acc = 0.0;
    for (int j = 0; j < out; ++j) {
        double col = 0.0;
        for (int i = 0; i < in; ++i) col += std::abs(l.weight.data()[static_cast<size_t>(i) * out + j]);
        acc += col;
    }
    return acc / static_cast<double>(out);
}

std::array<double, 3> fit_quadratic(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) throw Error("fit_quadratic: need >= 3 points");
    // normal equations for [x^2, x, 1]
    double s[5] = {0, 0, 0, 0, 0};
    double b[3] = {0, 0, 0};
    for (size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        const double x2 = xi * xi;
        s[0] += 1;
        s[1] += xi;
        s[2] += x2;
        s[3] += x2 * xi;
        s[4] += x2 * x2;
        b[0] += y[i] * x2;
        b[1] += y[i] * xi;
        b[2] += y[i];
    }
    double a[3][4] = {{s[4], s[3], s[2], b[0]}, {s[3], s[2], s[1], b[1]}, {s[2], s[1], s[0], b[2]}};
    // Gaussian elimination with partial pivoting
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        for (int c = 0; c < 4; ++c) std::swap(a[col][c], a[piv][c]);
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < 4; ++c) a[r][c] -= f * a[col][c];
        }
    }
    return {a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]};
}

}  // namespace sabr::theory
