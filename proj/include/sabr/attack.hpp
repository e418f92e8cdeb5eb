#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sabr/data.hpp"
#include "sabr/network.hpp"
#include "sabr/tensor.hpp"

namespace sabr {

enum class AttackLoss { CrossEntropy, TargetedMargin };

// alpha is a fraction of the ball radius; decay entries (k, f) multiply
// the step size by f for all steps after the k-th (1-based).
struct AttackConfig {
    int steps = 8;
    double alpha = 0.5;
    std::vector<std::pair<int, double>> decay = {{4, 0.1}, {7, 0.1}};
    int restarts = 1;
    AttackLoss loss = AttackLoss::CrossEntropy;
    uint64_t seed = 0;
    // TargetedMargin: fixed attack class, or -1 for round-robin over the
    // non-true classes across restarts.
    int margin_target = -1;

    void validate() const;
};

template <typename T>
struct PgdResult {
    Tensor<T> x_best;      // iterate with the highest attack loss seen
    T best_loss;
    bool found_misclass;   // any evaluated iterate had argmax != target
    Tensor<T> x_misclass;  // first such iterate (empty when none)
};

// Projected gradient descent over B_inf^radius(x) intersected with
// [0,1]^d. Uniform random init per restart, deterministic per seed;
// evaluates steps+1 iterates per restart and returns the best.
template <typename T>
PgdResult<T> pgd(const Network<T>& net, const Tensor<T>& x, int target, T radius, const AttackConfig& cfg);

// Fraction of the first `count` samples with a correct clean prediction
// and no misclassifying iterate across restarts/targets. Per-sample seeds
// derive from (cfg.seed, sample index).
template <typename T>
double adversarial_accuracy(const Network<T>& net, const Dataset& data, int count, T eps, const AttackConfig& cfg,
                            int workers);

template <typename T>
double standard_accuracy(const Network<T>& net, const Dataset& data, int count, int workers);

}  // namespace sabr
