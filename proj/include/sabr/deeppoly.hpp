#pragma once

#include <vector>

#include "sabr/box.hpp"
#include "sabr/network.hpp"

namespace sabr {

// Linear-relaxation verifier: per-neuron symbolic affine lower/upper
// bounds over the previous layer, concrete intervals from full
// backsubstitution to the input box, intersected with the interval
// (Box) bounds so DeepPoly is tighter-or-equal by construction.
// Certification math runs in double.

struct LinearBoundsElement {
    // Symbolic bounds of this layer's neurons over the previous layer's
    // neurons. For affine layers lower == upper (exact map, coef [n,
    // n_prev]); for ReLU layers they are diagonal (stored as vectors).
    bool diagonal = false;
    Tensor<double> lower_coef, upper_coef;    // dense [n, n_prev] when !diagonal
    Tensor<double> lower_diag, upper_diag;    // [n] when diagonal
    Tensor<double> lower_const, upper_const;  // [n]
    // Concrete interval for each neuron (backsubstituted, Box-intersected).
    Tensor<double> concrete_lo, concrete_hi;
};

struct DeepPolyResult {
    std::vector<LinearBoundsElement> layers;  // one per network layer
    const Tensor<double>& out_lo() const { return layers.back().concrete_lo; }
    const Tensor<double>& out_hi() const { return layers.back().concrete_hi; }
};

DeepPolyResult deeppoly_bounds(const Network<double>& net, const BoxTensor<double>& in);

// Backsubstituted upper bound on logit differences y - y_t (entry t = 0).
Tensor<double> deeppoly_logit_diff_upper(const Network<double>& net, const BoxTensor<double>& in, int target);

enum class Verdict { Certified, Unknown };

struct DeepPolyCert {
    Verdict verdict;
    double margin;  // max_{i != t} backsubstituted upper bound
};

DeepPolyCert certify_deeppoly(const Network<double>& net, const BoxTensor<double>& region, int target);
DeepPolyCert certify_deeppoly(const Network<double>& net, const Tensor<double>& x, double eps, int target);

}  // namespace sabr
