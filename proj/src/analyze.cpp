#include "sabr/analyze.hpp"

#include <cmath>
#include <cstdio>

#include "sabr/autodiff.hpp"
#include "sabr/box.hpp"
#include "sabr/deeppoly.hpp"
#include "sabr/error.hpp"
#include "sabr/kernels.hpp"
#include "sabr/ops.hpp"
#include "sabr/parallel.hpp"
#include "sabr/region.hpp"
#include "sabr/rng.hpp"

namespace sabr {

ReluStateStats relu_state_stats(const Network<double>& net, const Dataset& data, int count, EvalMode mode, double eps,
                                double cs) {
    std::vector<int> relu_layers;
    for (size_t i = 0; i < net.layers.size(); ++i)
        if (net.layers[i].kind == LayerKind::ReLU) relu_layers.push_back(static_cast<int>(i));
    if (relu_layers.empty()) throw Error("relu_state_stats: network has no ReLU layers");
    if (count > data.n) count = data.n;

    std::vector<double> act(relu_layers.size(), 0.0), inact(relu_layers.size(), 0.0), unst(relu_layers.size(), 0.0);
    std::vector<double> tot(relu_layers.size(), 0.0);

    for (int s = 0; s < count; ++s) {
        const Tensor<double> x = data.image<double>(s).reshaped(net.input_shape);
        if (mode == EvalMode::Point) {
            const std::vector<Tensor<double>> acts = forward_trace(net, x);
            for (size_t k = 0; k < relu_layers.size(); ++k) {
                const int li = relu_layers[k];
                const Tensor<double>& pre = li == 0 ? x : acts[static_cast<size_t>(li - 1)];
                for (size_t i = 0; i < pre.size(); ++i) {
                    if (pre[i] > 0.0)
                        act[k] += 1.0;
                    else
                        inact[k] += 1.0;
                }
                tot[k] += static_cast<double>(pre.size());
            }
        } else {
            const BoxTrace<double> tr = propagate_box(net, input_region(x, eps), cs);
            for (size_t k = 0; k < relu_layers.size(); ++k) {
                const int li = relu_layers[k];
                const BoxTensor<double> pre =
                    li == 0 ? input_region(x, eps) : tr.boxes[static_cast<size_t>(li - 1)];
                for (size_t i = 0; i < pre.centre.size(); ++i) {
                    const double lo = pre.centre[i] - pre.radius[i];
                    const double hi = pre.centre[i] + pre.radius[i];
                    if (lo < 0.0 && hi > 0.0)
                        unst[k] += 1.0;
                    else if (hi <= 0.0)
                        inact[k] += 1.0;
                    else
                        act[k] += 1.0;
                }
                tot[k] += static_cast<double>(pre.centre.size());
            }
        }
    }

    ReluStateStats st;
    double a = 0, i = 0, u = 0, t = 0;
    for (size_t k = 0; k < relu_layers.size(); ++k) {
        st.per_layer.push_back(
            {relu_layers[k], act[k] / tot[k], inact[k] / tot[k], unst[k] / tot[k]});
        a += act[k];
        i += inact[k];
        u += unst[k];
        t += tot[k];
    }
    st.active = a / t;
    st.inactive = i / t;
    st.unstable = u / t;
    return st;
}

namespace {

// flattened parameter gradient of a loss spec for one sample
std::vector<Tensor<float>> loss_grad(const Network<float>& net, const Tensor<float>& x, int t, const LossSpec& spec,
                                     double eps, const AttackConfig& attack, uint64_t sample_seed) {
    std::vector<Tensor<float>> grads = make_grad_buffers(net);
    Tape<float> tape;
    TapeNet<float> tnet(tape, net, true);
    Val loss;
    switch (spec.kind) {
        case LossSpec::Kind::CleanCE: {
            const Val xin = tape.leaf(x, false);
            loss = tape.softmax_cross_entropy(tnet.forward(xin), t);
            break;
        }
        case LossSpec::Kind::AdvCE: {
            AttackConfig acfg = attack;
            acfg.seed = sample_seed;
            const Tensor<float> xa =
                eps > 0.0 && acfg.steps > 0 ? pgd(net, x, t, static_cast<float>(eps), acfg).x_best : x;
            const Val xin = tape.leaf(xa, false);
            loss = tape.softmax_cross_entropy(tnet.forward(xin), t);
            break;
        }
        case LossSpec::Kind::RobustBox: {
            AttackConfig acfg = attack;
            acfg.seed = sample_seed;
            if (!spec.adv_centre) acfg.steps = 0;
            const RegionSpec<float> region =
                select_region(net, x, t, static_cast<float>(eps), static_cast<float>(spec.lambda), acfg);
            loss = robust_loss_on_tape(tape, tnet, region, t, static_cast<float>(spec.cs));
            break;
        }
    }
    tape.backward(loss);
    tnet.add_param_grads(grads);
    return grads;
}

double cosine(const std::vector<Tensor<float>>& a, const std::vector<Tensor<float>>& b, bool* zero_seen) {
    double dot = 0, na = 0, nb = 0;
    for (size_t k = 0; k < a.size(); ++k) {
        dot += static_cast<double>(kernels::dot(a[k].data(), b[k].data(), a[k].size()));
        na += static_cast<double>(kernels::dot(a[k].data(), a[k].data(), a[k].size()));
        nb += static_cast<double>(kernels::dot(b[k].data(), b[k].data(), b[k].size()));
    }
    if (na == 0.0 || nb == 0.0) {
        *zero_seen = true;
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double grad_cosine(const Network<float>& net, const Dataset& data, int count, const LossSpec& loss_a,
                   const LossSpec& loss_b, double eps, const AttackConfig& attack, uint64_t seed, int workers) {
    if (count > data.n) count = data.n;
    std::vector<double> cos(static_cast<size_t>(count), 0.0);
    std::vector<uint8_t> zero(static_cast<size_t>(count), 0);
    parallel_for(static_cast<size_t>(count), workers, [&](size_t begin, size_t end, int) {
        for (size_t s = begin; s < end; ++s) {
            const Tensor<float> x = data.image<float>(static_cast<int>(s)).reshaped(net.input_shape);
            const int t = data.label(static_cast<int>(s));
            const uint64_t sa = mix_seed(seed, s, 1);
            const uint64_t sb = mix_seed(seed, s, 2);
            bool z = false;
            const auto ga = loss_grad(net, x, t, loss_a, eps, attack, sa);
            const auto gb = loss_grad(net, x, t, loss_b, eps, attack, sb);
            cos[s] = cosine(ga, gb, &z);
            zero[s] = z ? 1 : 0;
        }
    });
    size_t zeros = 0;
    double acc = 0.0;
    for (size_t s = 0; s < cos.size(); ++s) {
        acc += cos[s];
        zeros += zero[s];
    }
    if (zeros > 0)
        std::fprintf(stderr, "grad_cosine: %zu sample(s) had a zero gradient vector (cosine set to 0)\n", zeros);
    return acc / static_cast<double>(count);
}

std::vector<LossCurveRow> loss_curve(const Network<float>& net, const Dataset& data, int count,
                                     const std::vector<double>& lambdas, BoundMethod method, double eps, double cs,
                                     const AttackConfig& attack, uint64_t seed, int workers) {
    if (count > data.n) count = data.n;
    const Network<double> net64 = method == BoundMethod::DeepPoly ? net.cast<double>() : Network<double>{};

    // adversarial preliminary centres, shared across lambdas
    std::vector<Tensor<float>> adv(static_cast<size_t>(count));
    parallel_for(static_cast<size_t>(count), workers, [&](size_t begin, size_t end, int) {
        for (size_t s = begin; s < end; ++s) {
            const Tensor<float> x = data.image<float>(static_cast<int>(s)).reshaped(net.input_shape);
            const int t = data.label(static_cast<int>(s));
            AttackConfig acfg = attack;
            acfg.seed = mix_seed(seed, s);
            adv[s] = (eps > 0.0 && acfg.steps > 0) ? pgd(net, x, t, static_cast<float>(eps), acfg).x_best : x;
        }
    });

    double std_ce = 0.0;
    for (int s = 0; s < count; ++s)
        std_ce += static_cast<double>(ops::softmax_cross_entropy(
            forward(net, data.image<float>(s).reshaped(net.input_shape)), data.label(s)));
    std_ce /= count;

    std::vector<LossCurveRow> rows;
    for (double lam : lambdas) {
        std::vector<double> lc(static_cast<size_t>(count), 0.0), la(static_cast<size_t>(count), 0.0);
        parallel_for(static_cast<size_t>(count), workers, [&](size_t begin, size_t end, int) {
            for (size_t s = begin; s < end; ++s) {
                const Tensor<float> x = data.image<float>(static_cast<int>(s)).reshaped(net.input_shape);
                const int t = data.label(static_cast<int>(s));
                const RegionSpec<float> clean =
                    project_region(x, x, static_cast<float>(eps), static_cast<float>(lam));
                const RegionSpec<float> advr =
                    project_region(x, adv[s], static_cast<float>(eps), static_cast<float>(lam));
                if (method == BoundMethod::Box) {
                    lc[s] = static_cast<double>(robust_loss_value(net, clean, t, static_cast<float>(cs)));
                    la[s] = static_cast<double>(robust_loss_value(net, advr, t, static_cast<float>(cs)));
                } else {
                    auto dp_loss = [&](const RegionSpec<float>& r) {
                        BoxTensor<double> box{r.centre.cast<double>(),
                                              Tensor<double>::full(r.centre.shape(), static_cast<double>(r.tau))};
                        const Tensor<double> u = deeppoly_logit_diff_upper(net64, box, t);
                        return robust_ce_from_diff(u, t);
                    };
                    lc[s] = dp_loss(clean);
                    la[s] = dp_loss(advr);
                }
            }
        });
        double mc = 0.0, ma = 0.0;
        for (int s = 0; s < count; ++s) {
            mc += lc[static_cast<size_t>(s)];
            ma += la[static_cast<size_t>(s)];
        }
        rows.push_back({lam, mc / count, ma / count, std_ce});
    }
    return rows;
}

std::vector<LossDecompRow> loss_decomp_rows(const Network<float>& net, const Dataset& data, int count, double eps,
                                            double lambda, double cs, const AttackConfig& attack, uint64_t seed,
                                            int workers) {
    if (count > data.n) count = data.n;
    std::vector<LossDecompRow> rows(static_cast<size_t>(count));
    parallel_for(static_cast<size_t>(count), workers, [&](size_t begin, size_t end, int) {
        for (size_t s = begin; s < end; ++s) {
            const Tensor<float> x = data.image<float>(static_cast<int>(s)).reshaped(net.input_shape);
            const int t = data.label(static_cast<int>(s));
            AttackConfig acfg = attack;
            acfg.seed = mix_seed(seed, s);
            const RegionSpec<float> region =
                select_region(net, x, t, static_cast<float>(eps), static_cast<float>(lambda), acfg);
            const LossDecomposition<float> d = loss_decomposition(net, region, t, static_cast<float>(cs));
            rows[s] = {static_cast<int>(s), t, static_cast<double>(d.margin), static_cast<double>(d.delta),
                       static_cast<double>(d.margin) + static_cast<double>(d.delta)};
        }
    });
    return rows;
}

}  // namespace sabr
