#pragma once

#include <string>
#include <vector>

#include "sabr/attack.hpp"
#include "sabr/data.hpp"
#include "sabr/network.hpp"

namespace sabr {

enum class EvalMode { Point, Region };

// Fractions of (stably) active / inactive / unstable ReLU units, per
// layer and neuron-weighted overall. Point mode classifies by the sign of
// the pre-activation (unstable is identically 0); region mode by the
// interval pre-activation bounds at radius eps.
struct ReluStateStats {
    struct LayerRow {
        int layer;
        double active, inactive, unstable;
    };
    std::vector<LayerRow> per_layer;
    double active = 0, inactive = 0, unstable = 0;
};

ReluStateStats relu_state_stats(const Network<double>& net, const Dataset& data, int count, EvalMode mode, double eps,
                                double cs = 1.0);

// Loss whose parameter gradient feeds the cosine comparison.
struct LossSpec {
    enum class Kind { CleanCE, AdvCE, RobustBox } kind = Kind::CleanCE;
    double lambda = 1.0;     // RobustBox region size (fraction of eps)
    bool adv_centre = true;  // RobustBox: PGD centre vs clean centre
    double cs = 1.0;
};

// Mean cosine over samples between flattened parameter gradients of the
// two losses; a zero gradient vector yields cosine 0 (with a warning).
double grad_cosine(const Network<float>& net, const Dataset& data, int count, const LossSpec& loss_a,
                   const LossSpec& loss_b, double eps, const AttackConfig& attack, uint64_t seed, int workers);

enum class BoundMethod { Box, DeepPoly };

struct LossCurveRow {
    double lambda;
    double loss_clean_centre;  // regions of radius lambda*eps at the inputs
    double loss_adv_centre;    // same radius at projected PGD centres
    double std_ce;             // pointwise cross-entropy reference
};

std::vector<LossCurveRow> loss_curve(const Network<float>& net, const Dataset& data, int count,
                                     const std::vector<double>& lambdas, BoundMethod method, double eps, double cs,
                                     const AttackConfig& attack, uint64_t seed, int workers);

// Per-sample (margin, delta) decomposition rows for CSV output.
struct LossDecompRow {
    int sample;
    int label;
    double margin, delta, upper;
};

std::vector<LossDecompRow> loss_decomp_rows(const Network<float>& net, const Dataset& data, int count, double eps,
                                            double lambda, double cs, const AttackConfig& attack, uint64_t seed,
                                            int workers);

}  // namespace sabr
