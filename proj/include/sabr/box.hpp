#pragma once

#include <vector>

#include "sabr/network.hpp"
#include "sabr/tensor.hpp"

namespace sabr {

// Interval abstraction as (centre, radius); concretises to
// [centre - radius, centre + radius]. Radius is elementwise >= 0.
template <typename T>
struct BoxTensor {
    Tensor<T> centre, radius;
};

template <typename T>
BoxTensor<T> make_box(Tensor<T> centre, Tensor<T> radius);

// Point box (radius 0).
template <typename T>
BoxTensor<T> point_box(const Tensor<T>& x);

// Tightest box around B_inf^eps(x) intersected with [0,1]^d, i.e.
// [max(x-eps,0), min(x+eps,1)]; the input region used for certification.
template <typename T>
BoxTensor<T> input_region(const Tensor<T>& x, T eps);

// --- layer transformers ---
// weight layout [in,out]: centre' = c@W + b, radius' = r@|W|.
template <typename T>
BoxTensor<T> box_linear(const Tensor<T>& weight, const Tensor<T>* bias, const BoxTensor<T>& in);

template <typename T>
BoxTensor<T> box_conv2d(const Tensor<T>& kernel, const Tensor<T>* bias, int stride, int padding,
                        const BoxTensor<T>& in);

// cs in (0,1]; cs = 1 is the exact interval transformer, cs < 1 shrinks
// the output of unstable units (training heuristic, deliberately unsound).
template <typename T>
BoxTensor<T> box_relu(const BoxTensor<T>& in, T cs);

template <typename T>
BoxTensor<T> box_bn_affine(const Tensor<T>& gamma, const Tensor<T>& beta, const Tensor<T>& mean, const Tensor<T>& var,
                           const BoxTensor<T>& in);

// Layer-by-layer interval propagation. boxes[i] is the box after
// layers[i]; out() is the logit box.
template <typename T>
struct BoxTrace {
    std::vector<BoxTensor<T>> boxes;
    const BoxTensor<T>& out() const { return boxes.back(); }
};

template <typename T>
BoxTrace<T> propagate_box(const Network<T>& net, const BoxTensor<T>& in, T cs);

// Logit-difference bounds y - y_t via the difference matrix pushed
// through the interval affine rule; all entries at t are exactly 0 and
// upper[i] == centre_diff[i] + radius_diff[i].
template <typename T>
struct LogitDiffBounds {
    int target;
    Tensor<T> centre_diff, radius_diff, upper;
};

template <typename T>
LogitDiffBounds<T> logit_diff_bounds(const BoxTensor<T>& out, int target);

// Upper bound only; entry t is exactly 0.
template <typename T>
Tensor<T> logit_diff_upper(const BoxTensor<T>& out, int target);

// max_{i != t} u_i; certified iff < 0.
template <typename T>
T worst_margin(const Tensor<T>& logit_diff, int target);

template <typename T>
struct CertResult {
    bool certified;
    T margin;  // max_{i != t} upper logit difference
};

template <typename T>
CertResult<T> certify_box(const Network<T>& net, const Tensor<T>& x, T eps, int target, T cs = T(1));

// ln(1 + sum_{i != t} exp(u_i)) evaluated on a logit-difference vector
// whose t entry is 0; identical code path to the pointwise cross-entropy.
template <typename T>
T robust_ce_from_diff(const Tensor<T>& logit_diff, int target);

// All layer outputs of a point forward pass (for activation analysis).
template <typename T>
std::vector<Tensor<T>> forward_trace(const Network<T>& net, const Tensor<T>& x);

}  // namespace sabr
