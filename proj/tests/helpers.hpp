#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sabr/box.hpp"
#include "sabr/network.hpp"
#include "sabr/rng.hpp"
#include "sabr/tensor.hpp"

namespace sabr::test {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// Random 2-5 layer net mixing Conv2d/Linear/ReLU (Conv only for image
// inputs), with randomised weights and biases.
template <typename T>
Layer<T> bare_layer(LayerKind kind) {
    Layer<T> l;
    l.kind = kind;
    return l;
}

template <typename T>
Network<T> random_net(Rng& rng, bool allow_conv = true) {
    Network<T> net;
    const int classes = 2 + static_cast<int>(rng.below(9));
    const bool conv = allow_conv && rng.uniform() < 0.5;
    if (conv) {
        const int c = 1 + static_cast<int>(rng.below(2));
        const int hw = 5 + static_cast<int>(rng.below(4));
        net.input_shape = {c, hw, hw};
        int cur_c = c, cur_hw = hw;
        const int n_conv = 1 + static_cast<int>(rng.below(2));
        for (int i = 0; i < n_conv; ++i) {
            const int oc = 2 + static_cast<int>(rng.below(4));
            const int stride = 1 + static_cast<int>(rng.below(2));
            Layer<T> l;
            l.kind = LayerKind::Conv2d;
            l.weight = Tensor<T>({oc, cur_c, 3, 3});
            l.bias = Tensor<T>({oc});
            l.stride = stride;
            l.padding = 1;
            net.layers.push_back(std::move(l));
            net.layers.push_back(bare_layer<T>(LayerKind::ReLU));
            cur_c = oc;
            cur_hw = (cur_hw + 2 - 3) / stride + 1;
        }
        net.layers.push_back(bare_layer<T>(LayerKind::Flatten));
        const int flat = cur_c * cur_hw * cur_hw;
        const int mid = 4 + static_cast<int>(rng.below(12));
        Layer<T> fc1;
        fc1.kind = LayerKind::Linear;
        fc1.weight = Tensor<T>({flat, mid});
        fc1.bias = Tensor<T>({mid});
        net.layers.push_back(std::move(fc1));
        net.layers.push_back(bare_layer<T>(LayerKind::ReLU));
        Layer<T> fc2;
        fc2.kind = LayerKind::Linear;
        fc2.weight = Tensor<T>({mid, classes});
        fc2.bias = Tensor<T>({classes});
        net.layers.push_back(std::move(fc2));
        net.num_classes = classes;
    } else {
        const int d = 3 + static_cast<int>(rng.below(8));
        std::vector<int> dims = {d};
        const int hidden = 1 + static_cast<int>(rng.below(2));
        for (int i = 0; i < hidden; ++i) dims.push_back(3 + static_cast<int>(rng.below(10)));
        dims.push_back(classes);
        net = make_mlp<T>(dims);
    }
    for (auto& l : net.layers) {
        if (l.kind != LayerKind::Linear && l.kind != LayerKind::Conv2d) continue;
        const double fan_in = l.kind == LayerKind::Linear
                                  ? l.weight.dim(0)
                                  : static_cast<double>(l.weight.size()) / l.weight.dim(0);
        const double s = 1.0 / std::sqrt(fan_in);
        for (size_t i = 0; i < l.weight.size(); ++i) l.weight[i] = static_cast<T>(rng.normal(0.0, s));
        for (size_t i = 0; i < l.bias.size(); ++i) l.bias[i] = static_cast<T>(rng.uniform(-0.1, 0.1));
    }
    net.refresh_cache();
    net.validate();
    return net;
}

// Smallest |pre-activation interval endpoint| across all ReLU layers of
// a box propagation; used to keep finite-difference probes away from the
// transformer's case boundaries.
template <typename T>
double relu_boundary_margin(const Network<T>& net, const BoxTensor<T>& in) {
    double margin = 1e300;
    BoxTensor<T> cur = in;
    const BoxTrace<T> tr = propagate_box(net, in, T(1));
    for (size_t i = 0; i < net.layers.size(); ++i) {
        if (net.layers[i].kind != LayerKind::ReLU) continue;
        const BoxTensor<T>& pre = i == 0 ? in : tr.boxes[i - 1];
        for (size_t k = 0; k < pre.centre.size(); ++k) {
            const double lo = static_cast<double>(pre.centre[k]) - static_cast<double>(pre.radius[k]);
            const double hi = static_cast<double>(pre.centre[k]) + static_cast<double>(pre.radius[k]);
            margin = std::min(margin, std::abs(lo));
            margin = std::min(margin, std::abs(hi));
        }
    }
    return margin;
}

// Flat parameter vector helpers for finite-difference probes.
template <typename T>
size_t flat_param_count(const Network<T>& net) {
    size_t n = 0;
    for (const auto& r : trainable_params(net)) n += param_tensor(net, r).size();
    return n;
}

template <typename T>
void add_flat_direction(Network<T>& net, const std::vector<double>& dir, double h) {
    size_t off = 0;
    for (const auto& r : trainable_params(net)) {
        Tensor<T>& p = param_tensor(net, r);
        for (size_t i = 0; i < p.size(); ++i) p[i] = static_cast<T>(static_cast<double>(p[i]) + h * dir[off + i]);
        off += p.size();
    }
    net.refresh_cache();
}

template <typename T>
double flat_dot(const std::vector<Tensor<T>>& grads, const std::vector<double>& dir) {
    double acc = 0.0;
    size_t off = 0;
    for (const auto& g : grads) {
        for (size_t i = 0; i < g.size(); ++i) acc += static_cast<double>(g[i]) * dir[off + i];
        off += g.size();
    }
    return acc;
}

// Central finite difference of f along dir.
template <typename T>
double central_diff(const Network<T>& net, const std::vector<double>& dir, double h,
                    const std::function<double(const Network<T>&)>& f) {
    Network<T> plus = net.clone();
    add_flat_direction(plus, dir, h);
    Network<T> minus = net.clone();
    add_flat_direction(minus, dir, -h);
    return (f(plus) - f(minus)) / (2.0 * h);
}

inline double rel_error(double a, double b) {
    const double denom = std::max(std::abs(a), std::abs(b));
    if (denom == 0.0) return 0.0;
    return std::abs(a - b) / denom;
}

}  // namespace sabr::test
