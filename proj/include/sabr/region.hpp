#pragma once

#include "sabr/attack.hpp"
#include "sabr/autodiff.hpp"
#include "sabr/box.hpp"
#include "sabr/network.hpp"

namespace sabr {

// Propagation region: the tau-ball around the projected adversarial
// centre that actually gets pushed through the interval domain.
template <typename T>
struct RegionSpec {
    Tensor<T> anchor;  // original input x
    T eps;
    T lambda;
    T tau;             // lambda * eps
    Tensor<T> centre;  // x', projected onto B^{eps-tau}(x) then [tau, 1-tau]
};

// tau = lambda*eps; the centre starts from the PGD point (or x itself
// when cfg.steps == 0 or eps == 0), is clipped onto B^{eps-tau}(x) and
// then into [tau, 1-tau] so the region respects the input domain.
template <typename T>
RegionSpec<T> select_region(const Network<T>& net, const Tensor<T>& x, int target, T eps, T lambda,
                            const AttackConfig& attack_cfg);

// As above with an externally supplied preliminary centre (used by
// analysis paths that want clean or custom centres).
template <typename T>
RegionSpec<T> project_region(const Tensor<T>& x, const Tensor<T>& preliminary_centre, T eps, T lambda);

template <typename T>
struct RegionCheck {
    bool domain_ok;  // B_tau(x') inside [0,1]^d
    bool ball_ok;    // ||x - x'||_inf <= eps - tau
};

// Exact containment checks. ball_ok can legitimately fail for
// lambda > 0.5 on inputs within 2*tau - eps of the domain boundary,
// where the domain clip takes precedence.
template <typename T>
RegionCheck<T> check_region(const RegionSpec<T>& r);

template <typename T>
BoxTensor<T> region_box(const RegionSpec<T>& r);

// Robust cross-entropy over the region on a tape: interval forward from
// B_tau(x'), logit-difference upper bound, stabilised log-sum-exp.
template <typename T>
Val robust_loss_on_tape(Tape<T>& tape, TapeNet<T>& tnet, const RegionSpec<T>& region, int target, T cs);

// Value-only robust loss (no gradients).
template <typename T>
T robust_loss_value(const Network<T>& net, const RegionSpec<T>& region, int target, T cs);

// Split of the worst-class bound u = max_i (centre + radius) into the
// centre margin and the radius term; margin + delta == max_i u exactly.
template <typename T>
struct LossDecomposition {
    T margin;  // centre part at the worst non-target class
    T delta;   // radius part at the same class
    int worst_class;
};

template <typename T>
LossDecomposition<T> loss_decomposition(const Network<T>& net, const RegionSpec<T>& region, int target, T cs);

}  // namespace sabr
