#include "sabr/attack.hpp"

#include <cmath>
#include <limits>

#include "sabr/autodiff.hpp"
#include "sabr/error.hpp"
#include "sabr/kernels.hpp"
#include "sabr/ops.hpp"
#include "sabr/parallel.hpp"
#include "sabr/rng.hpp"

#include <cassert>

namespace sabr {

namespace {

// every iterate must stay in the ball intersected with the domain
template <typename T>
void assert_feasible(const Tensor<T>& cur, const Tensor<T>& lo, const Tensor<T>& hi) {
#ifndef SABR_NO_FEASIBILITY_CHECK
    for (size_t i = 0; i < cur.size(); ++i) {
        assert(cur[i] >= lo[i] && cur[i] <= hi[i]);
        assert(cur[i] >= T(0) && cur[i] <= T(1));
    }
#else
    (void)cur;
    (void)lo;
    (void)hi;
#endif
}

}  // namespace

void AttackConfig::validate() const {
    if (steps < 1) throw Error("AttackConfig: steps must be >= 1");
    if (!(alpha > 0.0)) throw Error("AttackConfig: alpha must be > 0");
    if (restarts < 1) throw Error("AttackConfig: restarts must be >= 1");
    for (const auto& [k, f] : decay)
        if (k < 1 || !(f > 0.0)) throw Error("AttackConfig: decay entries must be (step >= 1, factor > 0)");
}

namespace {

// attack class for a restart when round-robin targeting is active
int nth_non_true(int target_true, int num_classes, int idx) {
    int k = idx % (num_classes - 1);
    for (int c = 0; c < num_classes; ++c) {
        if (c == target_true) continue;
        if (k-- == 0) return c;
    }
    return (target_true + 1) % num_classes;
}

template <typename T>
T step_alpha(const AttackConfig& cfg, int step_1based) {
    double a = cfg.alpha;
    for (const auto& [k, f] : cfg.decay)
        if (step_1based > k) a *= f;
    return static_cast<T>(a);
}

}  // namespace

template <typename T>
PgdResult<T> pgd(const Network<T>& net, const Tensor<T>& x, int target, T radius, const AttackConfig& cfg) {
    cfg.validate();
    if (radius < T(0)) throw Error("pgd: radius must be >= 0");
    const size_t d = x.size();

    Tensor<T> lo(x.shape()), hi(x.shape());
    kernels::vscale(lo.data(), x.data(), T(1), -radius, d);
    kernels::vscale(hi.data(), x.data(), T(1), radius, d);

    PgdResult<T> res;
    res.best_loss = -std::numeric_limits<T>::infinity();
    res.found_misclass = false;

    for (int restart = 0; restart < cfg.restarts; ++restart) {
        Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(restart)));
        const int attack_class =
            cfg.loss == AttackLoss::TargetedMargin
                ? (cfg.margin_target >= 0 ? cfg.margin_target : nth_non_true(target, net.num_classes, restart))
                : -1;

        Tensor<T> cur(x.shape());
        for (size_t i = 0; i < d; ++i)
            cur[i] = x[i] + static_cast<T>(rng.uniform(-static_cast<double>(radius), static_cast<double>(radius)));
        kernels::vclamp(cur.data(), cur.data(), lo.data(), hi.data(), d);
        kernels::vclamp_const(cur.data(), cur.data(), T(0), T(1), d);
        assert_feasible(cur, lo, hi);

        for (int step = 0; step <= cfg.steps; ++step) {
            Tape<T> tape;
            TapeNet<T> tnet(tape, net, false);
            const Val xin = tape.leaf(cur, step < cfg.steps);  // final iterate needs no gradient
            const Val logits = tnet.forward(xin);
            const Val loss = cfg.loss == AttackLoss::TargetedMargin
                                 ? tape.margin(logits, target, attack_class)
                                 : tape.softmax_cross_entropy(logits, target);
            const T loss_v = tape.value(loss)[0];
            if (ops::argmax(tape.value(logits)) != target) {
                if (!res.found_misclass) res.x_misclass = cur.clone();
                res.found_misclass = true;
            }
            if (loss_v > res.best_loss || !res.x_best.size()) {
                res.best_loss = loss_v;
                res.x_best = cur.clone();
            }
            if (step == cfg.steps) break;

            tape.backward(loss);
            const Tensor<T>& g = tape.grad(xin);
            Tensor<T> next = cur.clone();
            kernels::sign_step(next.data(), g.data(), step_alpha<T>(cfg, step + 1) * radius, d);
            kernels::vclamp(next.data(), next.data(), lo.data(), hi.data(), d);
            kernels::vclamp_const(next.data(), next.data(), T(0), T(1), d);
            assert_feasible(next, lo, hi);
            cur = next;
        }
    }
    return res;
}

template <typename T>
double standard_accuracy(const Network<T>& net, const Dataset& data, int count, int workers) {
    if (count > data.n) count = data.n;
    std::vector<uint8_t> ok(static_cast<size_t>(count));
    parallel_for(static_cast<size_t>(count), workers, [&](size_t begin, size_t end, int) {
        for (size_t i = begin; i < end; ++i) {
            const Tensor<T> logits = forward(net, data.image<T>(static_cast<int>(i)).reshaped(net.input_shape));
            ok[i] = ops::argmax(logits) == data.label(static_cast<int>(i)) ? 1 : 0;
        }
    });
    size_t correct = 0;
    for (uint8_t v : ok) correct += v;
    return static_cast<double>(correct) / static_cast<double>(count);
}

template <typename T>
double adversarial_accuracy(const Network<T>& net, const Dataset& data, int count, T eps, const AttackConfig& cfg,
                            int workers) {
    if (count > data.n) count = data.n;
    std::vector<uint8_t> robust(static_cast<size_t>(count));
    parallel_for(static_cast<size_t>(count), workers, [&](size_t begin, size_t end, int) {
        for (size_t i = begin; i < end; ++i) {
            const Tensor<T> x = data.image<T>(static_cast<int>(i)).reshaped(net.input_shape);
            const int t = data.label(static_cast<int>(i));
            if (ops::argmax(forward(net, x)) != t) {
                robust[i] = 0;
                continue;
            }
            if (eps <= T(0)) {
                robust[i] = 1;
                continue;
            }
            AttackConfig local = cfg;
            local.seed = mix_seed(cfg.seed, i);
            const PgdResult<T> r = pgd(net, x, t, eps, local);
            robust[i] = r.found_misclass ? 0 : 1;
        }
    });
    size_t n_rob = 0;
    for (uint8_t v : robust) n_rob += v;
    return static_cast<double>(n_rob) / static_cast<double>(count);
}

#define SABR_INSTANTIATE(T)                                                                              \
    template PgdResult<T> pgd<T>(const Network<T>&, const Tensor<T>&, int, T, const AttackConfig&);      \
    template double standard_accuracy<T>(const Network<T>&, const Dataset&, int, int);                   \
    template double adversarial_accuracy<T>(const Network<T>&, const Dataset&, int, T, const AttackConfig&, int);

SABR_INSTANTIATE(float)
SABR_INSTANTIATE(double)

#undef SABR_INSTANTIATE

}  // namespace sabr
