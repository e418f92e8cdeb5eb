#pragma once

#include <string>
#include <vector>

#include "sabr/attack.hpp"
#include "sabr/data.hpp"
#include "sabr/network.hpp"

namespace sabr {

struct TrainConfig {
    std::string arch = "cnn-small";
    int epochs = 20;
    double eps_final = 0.1;
    int warm_epochs = 1;  // clean training before the ramp
    int ramp_epochs = 6;  // per-step linear ramp of eps after the warm epochs
    double lambda = 0.4;
    double cs = 1.0;

    double lr = 5e-4;
    int decay_epoch_1 = 14, decay_epoch_2 = 17;  // lr *= decay_factor at the start of these epochs
    double decay_factor = 0.2;
    double l1 = 1e-5;       // weights only (not biases / BN)
    double grad_clip = 10;  // global l2 threshold
    int batch_size = 256;
    uint64_t seed = 0;
    int workers = 1;

    AttackConfig attack;  // region-selection attack (8-step by default)

    // per-epoch monitoring
    int monitor_samples = 200;
    AttackConfig monitor_attack{8, 0.5, {{4, 0.1}, {7, 0.1}}, 1, AttackLoss::CrossEntropy, 0, -1};
    std::string metrics_csv;  // optional output path

    void validate() const;
};

inline const char* kMetricsCsvHeader = "epoch,eps,lambda,loss,std_acc,pgd_acc,box_cert_acc,mean_margin,mean_delta";

struct EpochMetrics {
    int epoch;
    double eps, lambda, loss, std_acc, pgd_acc, box_cert_acc, mean_margin, mean_delta;
};

struct TrainResult {
    std::vector<EpochMetrics> history;
};

// Adam with bias correction; state mirrors the trainable parameter list.
template <typename T>
class Adam {
public:
    Adam(const Network<T>& net, double lr);
    void step(Network<T>& net, const std::vector<Tensor<T>>& grads, double lr_now);
    int64_t t() const { return t_; }

    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

private:
    double lr_;
    int64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

// eps at a global step for the 1-clean-epoch + linear-ramp schedule.
double eps_at_step(const TrainConfig& cfg, long step, long steps_per_epoch);

// Certified training: per step, per-sample region selection at the
// current eps, mean robust loss + l1 on weights, Adam with global
// gradient clipping. Deterministic per (seed, workers); bit-reproducible
// single-worker. Throws TrainDivergence on NaN loss.
TrainResult train(Network<float>& net, const Dataset& train_data, const Dataset& eval_data, const TrainConfig& cfg);

}  // namespace sabr
