#include "sabr/box.hpp"

#include <cmath>
#include <limits>

#include "sabr/error.hpp"
#include "sabr/kernels.hpp"
#include "sabr/ops.hpp"

namespace sabr {

template <typename T>
BoxTensor<T> make_box(Tensor<T> centre, Tensor<T> radius) {
    require_same_shape(centre, radius, "make_box");
    for (size_t i = 0; i < radius.size(); ++i)
        if (!(radius[i] >= T(0))) throw Error("box radius must be elementwise >= 0");
    return {std::move(centre), std::move(radius)};
}

template <typename T>
BoxTensor<T> point_box(const Tensor<T>& x) {
    return {x, Tensor<T>(x.shape())};
}

template <typename T>
BoxTensor<T> input_region(const Tensor<T>& x, T eps) {
    if (eps < T(0)) throw Error("input_region: eps must be >= 0");
    Tensor<T> lo(x.shape()), hi(x.shape());
    kernels::vscale(lo.data(), x.data(), T(1), -eps, x.size());
    kernels::vclamp_const(lo.data(), lo.data(), T(0), T(1), x.size());
    kernels::vscale(hi.data(), x.data(), T(1), eps, x.size());
    kernels::vclamp_const(hi.data(), hi.data(), T(0), T(1), x.size());
    Tensor<T> centre(x.shape()), radius(x.shape());
    for (size_t i = 0; i < x.size(); ++i) {
        centre[i] = (lo[i] + hi[i]) * T(0.5);
        radius[i] = (hi[i] - lo[i]) * T(0.5);
    }
    return {std::move(centre), std::move(radius)};
}

template <typename T>
BoxTensor<T> box_linear(const Tensor<T>& weight, const Tensor<T>* bias, const BoxTensor<T>& in) {
    const int d_in = weight.dim(0), d_out = weight.dim(1);
    if (static_cast<int>(in.centre.size()) != d_in)
        throw ShapeError("box_linear: input " + shape_str(in.centre.shape()) + " vs weight " +
                         shape_str(weight.shape()));
    const Tensor<T> w_abs = ops::abs(weight);
    Tensor<T> c({d_out}), r({d_out});
    kernels::gemm(in.centre.data(), weight.data(), c.data(), 1, d_in, d_out);
    if (bias) kernels::vadd(c.data(), c.data(), bias->data(), c.size());
    kernels::gemm(in.radius.data(), w_abs.data(), r.data(), 1, d_in, d_out);
    return {std::move(c), std::move(r)};
}

template <typename T>
BoxTensor<T> box_conv2d(const Tensor<T>& kernel, const Tensor<T>* bias, int stride, int padding,
                        const BoxTensor<T>& in) {
    const Tensor<T> k_abs = ops::abs(kernel);
    Tensor<T> c = ops::conv2d(in.centre, kernel, bias, stride, padding);
    Tensor<T> r = ops::conv2d(in.radius, k_abs, static_cast<const Tensor<T>*>(nullptr), stride, padding);
    return {std::move(c), std::move(r)};
}

template <typename T>
BoxTensor<T> box_relu(const BoxTensor<T>& in, T cs) {
    if (!(cs > T(0) && cs <= T(1))) throw Error("box_relu: shrink coefficient must be in (0,1]");
    Tensor<T> c(in.centre.shape()), r(in.centre.shape());
    std::vector<uint8_t> mask(in.centre.size());
    kernels::box_relu(c.data(), r.data(), mask.data(), in.centre.data(), in.radius.data(), cs, in.centre.size());
    return {std::move(c), std::move(r)};
}

template <typename T>
BoxTensor<T> box_bn_affine(const Tensor<T>& gamma, const Tensor<T>& beta, const Tensor<T>& mean, const Tensor<T>& var,
                           const BoxTensor<T>& in, const Tensor<T>* inv_std_cache) {
    const int ch = static_cast<int>(gamma.size());
    const int spatial = static_cast<int>(in.centre.size()) / ch;
    Tensor<T> c(in.centre.shape()), r(in.centre.shape());
    for (int k = 0; k < ch; ++k) {
        const T inv =
            inv_std_cache ? (*inv_std_cache)[static_cast<size_t>(k)]
                          : T(1) / std::sqrt(var[static_cast<size_t>(k)] + T(kBnVarFloor));
        const T a = gamma[static_cast<size_t>(k)] * inv;
        const T b = beta[static_cast<size_t>(k)] - a * mean[static_cast<size_t>(k)];
        const T a_abs = a < T(0) ? -a : a;
        const size_t off = static_cast<size_t>(k) * spatial;
        kernels::vscale(c.data() + off, in.centre.data() + off, a, b, static_cast<size_t>(spatial));
        kernels::vscale(r.data() + off, in.radius.data() + off, a_abs, T(0), static_cast<size_t>(spatial));
    }
    return {std::move(c), std::move(r)};
}

template <typename T>
BoxTensor<T> box_bn_affine(const Tensor<T>& gamma, const Tensor<T>& beta, const Tensor<T>& mean, const Tensor<T>& var,
                           const BoxTensor<T>& in) {
    return box_bn_affine(gamma, beta, mean, var, in, static_cast<const Tensor<T>*>(nullptr));
}

template <typename T>
BoxTrace<T> propagate_box(const Network<T>& net, const BoxTensor<T>& in, T cs) {
    if (in.centre.shape() != net.input_shape)
        throw ShapeError("propagate_box: input " + shape_str(in.centre.shape()) + " vs network input " +
                         shape_str(net.input_shape));
    BoxTrace<T> trace;
    trace.boxes.reserve(net.layers.size());
    BoxTensor<T> cur = in;
    for (const auto& l : net.layers) {
        switch (l.kind) {
            case LayerKind::Linear: {
                // cached |W| instead of recomputing it per call
                const int d_in = l.weight.dim(0), d_out = l.weight.dim(1);
                Tensor<T> c({d_out}), r({d_out});
                kernels::gemm(cur.centre.data(), l.weight.data(), c.data(), 1, d_in, d_out);
                kernels::vadd(c.data(), c.data(), l.bias.data(), c.size());
                kernels::gemm(cur.radius.data(), l.w_abs.data(), r.data(), 1, d_in, d_out);
                cur = {std::move(c), std::move(r)};
                break;
            }
            case LayerKind::Conv2d: {
                Tensor<T> c = ops::conv2d(cur.centre, l.weight, &l.bias, l.stride, l.padding);
                Tensor<T> r =
                    ops::conv2d(cur.radius, l.w_abs, static_cast<const Tensor<T>*>(nullptr), l.stride, l.padding);
                cur = {std::move(c), std::move(r)};
                break;
            }
            case LayerKind::ReLU: {
                const T layer_cs = static_cast<T>(l.cs_override ? *l.cs_override : static_cast<double>(cs));
                cur = box_relu(cur, layer_cs);
                break;
            }
            case LayerKind::Flatten: {
                const Shape flat = {static_cast<int>(cur.centre.size())};
                cur = {cur.centre.reshaped(flat), cur.radius.reshaped(flat)};
                break;
            }
            case LayerKind::BatchNormAffine:
                cur = box_bn_affine(l.weight, l.bias, l.run_mean, l.run_var, cur, &l.bn_inv_std);
                break;
        }
        trace.boxes.push_back(cur);
    }
    return trace;
}

namespace {

// Difference matrix pair in [in,out] layout: column j = e_j - e_t
// (zero column at j = t) and its elementwise absolute value.
template <typename T>
void difference_matrices(int n, int target, Tensor<T>& cmat, Tensor<T>& cabs) {
    cmat = Tensor<T>({n, n});
    cabs = Tensor<T>({n, n});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            T v = T(0);
            if (j != target) {
                if (i == j) v = T(1);
                if (i == target) v = v - T(1);
            }
            cmat.data()[static_cast<size_t>(i) * n + j] = v;
            cabs.data()[static_cast<size_t>(i) * n + j] = v < T(0) ? -v : v;
        }
    }
}

}  // namespace

template <typename T>
LogitDiffBounds<T> logit_diff_bounds(const BoxTensor<T>& out, int target) {
    const int n = static_cast<int>(out.centre.size());
    if (target < 0 || target >= n) throw Error("logit_diff_bounds: target out of range");
    Tensor<T> cmat, cabs;
    difference_matrices(n, target, cmat, cabs);
    LogitDiffBounds<T> b;
    b.target = target;
    b.centre_diff = Tensor<T>({n});
    b.radius_diff = Tensor<T>({n});
    b.upper = Tensor<T>({n});
    kernels::gemm(out.centre.data(), cmat.data(), b.centre_diff.data(), 1, n, n);
    kernels::gemm(out.radius.data(), cabs.data(), b.radius_diff.data(), 1, n, n);
    kernels::vadd(b.upper.data(), b.centre_diff.data(), b.radius_diff.data(), b.upper.size());
    return b;
}

template <typename T>
Tensor<T> logit_diff_upper(const BoxTensor<T>& out, int target) {
    return logit_diff_bounds(out, target).upper;
}

template <typename T>
T worst_margin(const Tensor<T>& logit_diff, int target) {
    T m = -std::numeric_limits<T>::infinity();
    for (size_t i = 0; i < logit_diff.size(); ++i)
        if (static_cast<int>(i) != target && logit_diff[i] > m) m = logit_diff[i];
    return m;
}

template <typename T>
CertResult<T> certify_box(const Network<T>& net, const Tensor<T>& x, T eps, int target, T cs) {
    const BoxTrace<T> trace = propagate_box(net, input_region(x, eps), cs);
    const Tensor<T> u = logit_diff_upper(trace.out(), target);
    const T margin = worst_margin(u, target);
    return {margin < T(0), margin};
}

template <typename T>
T robust_ce_from_diff(const Tensor<T>& logit_diff, int target) {
    return ops::softmax_cross_entropy(logit_diff, target);
}

template <typename T>
std::vector<Tensor<T>> forward_trace(const Network<T>& net, const Tensor<T>& x) {
    std::vector<Tensor<T>> acts;
    acts.reserve(net.layers.size());
    Tensor<T> cur = x;
    for (const auto& l : net.layers) {
        switch (l.kind) {
            case LayerKind::Linear: {
                const int in = l.weight.dim(0), out = l.weight.dim(1);
                Tensor<T> y = ops::matmul(cur.reshaped({1, in}), l.weight).reshaped({out});
                kernels::vadd(y.data(), y.data(), l.bias.data(), y.size());
                cur = y;
                break;
            }
            case LayerKind::Conv2d:
                cur = ops::conv2d(cur, l.weight, &l.bias, l.stride, l.padding);
                break;
            case LayerKind::ReLU:
                cur = ops::relu(cur);
                break;
            case LayerKind::Flatten:
                cur = cur.reshaped({static_cast<int>(cur.size())});
                break;
            case LayerKind::BatchNormAffine: {
                const int c = l.weight.dim(0);
                const int spatial = static_cast<int>(cur.size()) / c;
                Tensor<T> y(cur.shape());
                for (int ch = 0; ch < c; ++ch) {
                    const T a = l.bn_scale[ch];
                    const T b = l.bias[ch] - a * l.run_mean[ch];
                    kernels::vscale(y.data() + static_cast<size_t>(ch) * spatial,
                                    cur.data() + static_cast<size_t>(ch) * spatial, a, b,
                                    static_cast<size_t>(spatial));
                }
                cur = y;
                break;
            }
        }
        acts.push_back(cur);
    }
    return acts;
}

#define SABR_INSTANTIATE(T)                                                                                       \
    template BoxTensor<T> make_box<T>(Tensor<T>, Tensor<T>);                                                      \
    template BoxTensor<T> point_box<T>(const Tensor<T>&);                                                         \
    template BoxTensor<T> input_region<T>(const Tensor<T>&, T);                                                   \
    template BoxTensor<T> box_linear<T>(const Tensor<T>&, const Tensor<T>*, const BoxTensor<T>&);                 \
    template BoxTensor<T> box_conv2d<T>(const Tensor<T>&, const Tensor<T>*, int, int, const BoxTensor<T>&);       \
    template BoxTensor<T> box_relu<T>(const BoxTensor<T>&, T);                                                    \
    template BoxTensor<T> box_bn_affine<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                           const BoxTensor<T>&);                                                  \
    template struct BoxTrace<T>;                                                                                  \
    template BoxTrace<T> propagate_box<T>(const Network<T>&, const BoxTensor<T>&, T);                             \
    template LogitDiffBounds<T> logit_diff_bounds<T>(const BoxTensor<T>&, int);                                   \
    template Tensor<T> logit_diff_upper<T>(const BoxTensor<T>&, int);                                             \
    template T worst_margin<T>(const Tensor<T>&, int);                                                            \
    template CertResult<T> certify_box<T>(const Network<T>&, const Tensor<T>&, T, int, T);                        \
    template T robust_ce_from_diff<T>(const Tensor<T>&, int);                                                     \
    template std::vector<Tensor<T>> forward_trace<T>(const Network<T>&, const Tensor<T>&);

SABR_INSTANTIATE(float)
SABR_INSTANTIATE(double)

#undef SABR_INSTANTIATE

}  // namespace sabr
