#include "sabr/region.hpp"

#include <cmath>
#include <limits>

#include "sabr/error.hpp"
#include "sabr/kernels.hpp"
#include "sabr/ops.hpp"

namespace sabr {

template <typename T>
RegionSpec<T> project_region(const Tensor<T>& x, const Tensor<T>& preliminary_centre, T eps, T lambda) {
    if (eps < T(0)) throw Error("select_region: eps must be >= 0");
    if (!(lambda > T(0) && lambda <= T(1))) throw Error("select_region: lambda must be in (0,1]");
    const T tau = lambda * eps;
    const size_t d = x.size();

    Tensor<T> lo(x.shape()), hi(x.shape());
    kernels::vscale(lo.data(), x.data(), T(1), -(eps - tau), d);
    kernels::vscale(hi.data(), x.data(), T(1), eps - tau, d);

    Tensor<T> centre(x.shape());
    kernels::vclamp(centre.data(), preliminary_centre.data(), lo.data(), hi.data(), d);
    kernels::vclamp_const(centre.data(), centre.data(), tau, T(1) - tau, d);

    RegionSpec<T> r;
    r.anchor = x;
    r.eps = eps;
    r.lambda = lambda;
    r.tau = tau;
    r.centre = std::move(centre);
    return r;
}

template <typename T>
RegionSpec<T> select_region(const Network<T>& net, const Tensor<T>& x, int target, T eps, T lambda,
                            const AttackConfig& attack_cfg) {
    Tensor<T> prelim = x;
    if (attack_cfg.steps > 0 && eps > T(0)) prelim = pgd(net, x, target, eps, attack_cfg).x_best;
    return project_region(x, prelim, eps, lambda);
}

template <typename T>
RegionCheck<T> check_region(const RegionSpec<T>& r) {
    // Bounds recomputed with the same expressions as project_region, so a
    // clipped coordinate compares exactly equal to its bound.
    RegionCheck<T> c{true, true};
    const T slack = r.eps - r.tau;
    for (size_t i = 0; i < r.anchor.size(); ++i) {
        const T xc = r.centre[i];
        if (xc < r.tau || xc > T(1) - r.tau) c.domain_ok = false;
        if (xc < T(1) * r.anchor[i] + (-slack) || xc > T(1) * r.anchor[i] + slack) c.ball_ok = false;
    }
    return c;
}

template <typename T>
BoxTensor<T> region_box(const RegionSpec<T>& r) {
    return {r.centre, Tensor<T>::full(r.centre.shape(), r.tau)};
}

template <typename T>
Val robust_loss_on_tape(Tape<T>& tape, TapeNet<T>& tnet, const RegionSpec<T>& region, int target, T cs) {
    const Val centre = tape.leaf(region.centre, false);
    const Val radius = tape.leaf(Tensor<T>::full(region.centre.shape(), region.tau), false);
    auto [oc, orr] = tnet.forward_box(centre, radius, cs);
    const Val u = logit_diff_upper(tape, oc, orr, target);
    return tape.softmax_cross_entropy(u, target);
}

template <typename T>
T robust_loss_value(const Network<T>& net, const RegionSpec<T>& region, int target, T cs) {
    const BoxTrace<T> trace = propagate_box(net, region_box(region), cs);
    const Tensor<T> u = logit_diff_upper(trace.out(), target);
    return robust_ce_from_diff(u, target);
}

template <typename T>
LossDecomposition<T> loss_decomposition(const Network<T>& net, const RegionSpec<T>& region, int target, T cs) {
    const BoxTrace<T> trace = propagate_box(net, region_box(region), cs);
    const LogitDiffBounds<T> b = logit_diff_bounds(trace.out(), target);
    const int n = static_cast<int>(b.upper.size());
    int worst = -1;
    T best = -std::numeric_limits<T>::infinity();
    for (int i = 0; i < n; ++i) {
        if (i == target) continue;
        if (b.upper[static_cast<size_t>(i)] > best) {
            best = b.upper[static_cast<size_t>(i)];
            worst = i;
        }
    }
    return {b.centre_diff[static_cast<size_t>(worst)], b.radius_diff[static_cast<size_t>(worst)], worst};
}

#define SABR_INSTANTIATE(T)                                                                                 \
    template struct RegionSpec<T>;                                                                          \
    template RegionSpec<T> project_region<T>(const Tensor<T>&, const Tensor<T>&, T, T);                     \
    template RegionSpec<T> select_region<T>(const Network<T>&, const Tensor<T>&, int, T, T,                 \
                                            const AttackConfig&);                                           \
    template RegionCheck<T> check_region<T>(const RegionSpec<T>&);                                          \
    template BoxTensor<T> region_box<T>(const RegionSpec<T>&);                                              \
    template Val robust_loss_on_tape<T>(Tape<T>&, TapeNet<T>&, const RegionSpec<T>&, int, T);               \
    template T robust_loss_value<T>(const Network<T>&, const RegionSpec<T>&, int, T);                       \
    template LossDecomposition<T> loss_decomposition<T>(const Network<T>&, const RegionSpec<T>&, int, T);

SABR_INSTANTIATE(float)
SABR_INSTANTIATE(double)

#undef SABR_INSTANTIATE

}  // namespace sabr
