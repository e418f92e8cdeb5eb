#include "sabr/train.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "sabr/box.hpp"
#include "sabr/error.hpp"
#include "sabr/kernels.hpp"
#include "sabr/ops.hpp"
#include "sabr/parallel.hpp"
#include "sabr/region.hpp"
#include "sabr/rng.hpp"

namespace sabr {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (eps_final < 0) throw ConfigError("TrainConfig: eps must be >= 0");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("TrainConfig: lambda must be in (0,1]");
    if (!(cs > 0.0 && cs <= 1.0)) throw ConfigError("TrainConfig: cs must be in (0,1]");
    if (!(lr > 0.0)) throw ConfigError("TrainConfig: lr must be > 0");
    if (ramp_epochs < 0) throw ConfigError("TrainConfig: ramp_epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (workers < 1) throw ConfigError("TrainConfig: workers must be >= 1");
    if (attack.steps > 0) attack.validate();
}

template <typename T>
Adam<T>::Adam(const Network<T>& net, double lr) : lr_(lr) {
    m_ = make_grad_buffers(net);
    v_ = make_grad_buffers(net);
}

template <typename T>
void Adam<T>::step(Network<T>& net, const std::vector<Tensor<T>>& grads, double lr_now) {
    ++t_;
    const auto params = trainable_params(net);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (size_t k = 0; k < params.size(); ++k) {
        Tensor<T>& p = param_tensor(net, params[k]);
        const Tensor<T>& g = grads[k];
        Tensor<T>& m = m_[k];
        Tensor<T>& v = v_[k];
        for (size_t i = 0; i < p.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * gi;
            const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p[i] = static_cast<T>(static_cast<double>(p[i]) - lr_now * mhat / (std::sqrt(vhat) + eps));
        }
    }
    net.refresh_cache();
}

template class Adam<float>;
template class Adam<double>;

double eps_at_step(const TrainConfig& cfg, long step, long steps_per_epoch) {
    const long warm = static_cast<long>(cfg.warm_epochs) * steps_per_epoch;
    if (step < warm || cfg.eps_final <= 0.0) return 0.0;
    const long ramp = static_cast<long>(cfg.ramp_epochs) * steps_per_epoch;
    if (ramp <= 0) return cfg.eps_final;
    const double t = static_cast<double>(step - warm + 1) / static_cast<double>(ramp);
    return cfg.eps_final * (t < 1.0 ? t : 1.0);
}

namespace {

bool has_bn(const Network<float>& net) {
    for (const auto& l : net.layers)
        if (l.kind == LayerKind::BatchNormAffine) return true;
    return false;
}

std::string format_csv_row(const EpochMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g", m.epoch, m.eps, m.lambda,
                  m.loss, m.std_acc, m.pgd_acc, m.box_cert_acc, m.mean_margin, m.mean_delta);
    return buf;
}

std::string divergence_diagnostics(const Network<float>& net, double eps_cur, long step) {
    std::ostringstream os;
    os << "NaN loss at step " << step << " (eps=" << eps_cur << "); layer l2 norms:";
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        if (l.weight.empty()) continue;
        const double n2 = std::sqrt(static_cast<double>(kernels::dot(l.weight.data(), l.weight.data(), l.weight.size())));
        os << " [" << i << "]" << layer_kind_name(l.kind) << "=" << n2;
    }
    return os.str();
}

}  // namespace

TrainResult train(Network<float>& net, const Dataset& train_data, const Dataset& eval_data, const TrainConfig& cfg) {
    cfg.validate();
    const int n = train_data.n;
    const int bs = cfg.batch_size;
    const long steps_per_epoch = (n + bs - 1) / bs;
    const bool bn = has_bn(net);

    Adam<float> adam(net, cfg.lr);
    const auto params = trainable_params(net);

    std::ofstream csv;
    if (!cfg.metrics_csv.empty()) {
        csv.open(cfg.metrics_csv, std::ios::trunc);
        if (!csv) throw Error("cannot write " + cfg.metrics_csv);
        csv << kMetricsCsvHeader << "\n";
        csv.flush();
    }

    TrainResult result;
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // deterministic shuffle per (seed, epoch)
        Rng shuffle_rng(mix_seed(cfg.seed, 0x5f00ff1eULL, static_cast<uint64_t>(epoch)));
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.below(static_cast<uint64_t>(i + 1)));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }

        double lr_now = cfg.lr;
        if (epoch >= cfg.decay_epoch_1) lr_now *= cfg.decay_factor;
        if (epoch >= cfg.decay_epoch_2) lr_now *= cfg.decay_factor;

        double epoch_loss = 0.0, epoch_margin = 0.0, epoch_delta = 0.0;
        long batches = 0;
        double eps_cur = 0.0;

        for (int batch_start = 0; batch_start < n; batch_start += bs, ++step) {
            const int bsz = std::min(bs, n - batch_start);
            eps_cur = eps_at_step(cfg, step, steps_per_epoch);
            const float eps_f = static_cast<float>(eps_cur);

            if (bn) {
                const Tensor<float> batch = [&] {
                    Shape bshape = net.input_shape;
                    bshape.insert(bshape.begin(), bsz);
                    Tensor<float> b(bshape);
                    const size_t isz = train_data.item_size();
                    for (int i = 0; i < bsz; ++i) {
                        const int idx = order[static_cast<size_t>(batch_start + i)];
                        const float* src = train_data.pixels.data() + static_cast<size_t>(idx) * isz;
                        std::memcpy(b.data() + static_cast<size_t>(i) * isz, src, isz * sizeof(float));
                    }
                    return b;
                }();
                bn_update_stats(net, batch);
            }

            // per-worker gradient buffers reduced in worker order
            const int workers = cfg.workers;
            std::vector<std::vector<Tensor<float>>> wgrads(static_cast<size_t>(workers));
            std::vector<double> wloss(static_cast<size_t>(workers), 0.0);
            std::vector<double> wmargin(static_cast<size_t>(workers), 0.0);
            std::vector<double> wdelta(static_cast<size_t>(workers), 0.0);
            for (auto& g : wgrads) g = make_grad_buffers(net);

            parallel_for(static_cast<size_t>(bsz), workers, [&](size_t begin, size_t end, int w) {
                for (size_t i = begin; i < end; ++i) {
                    const int idx = order[static_cast<size_t>(batch_start + static_cast<int>(i))];
                    const Tensor<float> x = train_data.image<float>(idx).reshaped(net.input_shape);
                    const int t = train_data.label(idx);

                    AttackConfig acfg = cfg.attack;
                    acfg.seed = mix_seed(cfg.seed, static_cast<uint64_t>(step), static_cast<uint64_t>(idx));
                    RegionSpec<float> region =
                        select_region(net, x, t, eps_f, static_cast<float>(cfg.lambda), acfg);
                    // containment invariants; the eps-ball one needs
                    // lambda <= 0.5 near the domain boundary
                    assert(check_region(region).domain_ok);
                    assert(cfg.lambda > 0.5 || check_region(region).ball_ok);

                    Tape<float> tape;
                    TapeNet<float> tnet(tape, net, true);
                    const Val centre = tape.leaf(region.centre, false);
                    const Val radius = tape.leaf(Tensor<float>::full(region.centre.shape(), region.tau), false);
                    auto [oc, orr] = tnet.forward_box(centre, radius, static_cast<float>(cfg.cs));
                    const Val u = logit_diff_upper(tape, oc, orr, t);
                    const Val loss = tape.softmax_cross_entropy(u, t);
                    tape.backward(loss);
                    tnet.add_param_grads(wgrads[static_cast<size_t>(w)]);
                    wloss[static_cast<size_t>(w)] += static_cast<double>(tape.value(loss)[0]);

                    // margin/delta decomposition from the output box on the tape
                    const BoxTensor<float> out_box{tape.value(oc), tape.value(orr)};
                    const LogitDiffBounds<float> b = logit_diff_bounds(out_box, t);
                    int worst = -1;
                    float best = -std::numeric_limits<float>::infinity();
                    for (size_t c = 0; c < b.upper.size(); ++c) {
                        if (static_cast<int>(c) == t) continue;
                        if (b.upper[c] > best) {
                            best = b.upper[c];
                            worst = static_cast<int>(c);
                        }
                    }
                    wmargin[static_cast<size_t>(w)] += static_cast<double>(b.centre_diff[static_cast<size_t>(worst)]);
                    wdelta[static_cast<size_t>(w)] += static_cast<double>(b.radius_diff[static_cast<size_t>(worst)]);
                }
            });

            // ordered reduction
            std::vector<Tensor<float>> grads = std::move(wgrads[0]);
            for (int w = 1; w < workers; ++w)
                for (size_t k = 0; k < grads.size(); ++k)
                    kernels::axpy(grads[k].data(), 1.0f, wgrads[static_cast<size_t>(w)][k].data(), grads[k].size());
            double loss_sum = 0.0, margin_sum = 0.0, delta_sum = 0.0;
            for (int w = 0; w < workers; ++w) {
                loss_sum += wloss[static_cast<size_t>(w)];
                margin_sum += wmargin[static_cast<size_t>(w)];
                delta_sum += wdelta[static_cast<size_t>(w)];
            }

            const float inv_b = 1.0f / static_cast<float>(bsz);
            for (auto& g : grads)
                kernels::vscale(g.data(), g.data(), inv_b, 0.0f, g.size());

            double l1_term = 0.0;
            if (cfg.l1 > 0.0) {
                for (size_t k = 0; k < params.size(); ++k) {
                    const auto& pr = params[k];
                    const auto& layer = net.layers[static_cast<size_t>(pr.layer)];
                    if (!pr.is_weight) continue;
                    if (layer.kind != LayerKind::Linear && layer.kind != LayerKind::Conv2d) continue;
                    const Tensor<float>& wv = layer.weight;
                    l1_term += static_cast<double>(kernels::sum_abs(wv.data(), wv.size()));
                    kernels::sign_step(grads[k].data(), wv.data(), static_cast<float>(cfg.l1), wv.size());
                }
            }

            double mean_loss = loss_sum / bsz + cfg.l1 * l1_term;
            if (std::isnan(mean_loss))
                throw TrainDivergence(divergence_diagnostics(net, eps_cur, step));

            // global l2 clip
            double sq = 0.0;
            for (const auto& g : grads) sq += static_cast<double>(kernels::dot(g.data(), g.data(), g.size()));
            const double norm = std::sqrt(sq);
            if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) {
                const float s = static_cast<float>(cfg.grad_clip / norm);
                for (auto& g : grads) kernels::vscale(g.data(), g.data(), s, 0.0f, g.size());
            }

            adam.step(net, grads, lr_now);

            epoch_loss += mean_loss;
            epoch_margin += margin_sum / bsz;
            epoch_delta += delta_sum / bsz;
            ++batches;
        }

        // per-epoch monitors on the eval subset
        const int mcount = std::min(cfg.monitor_samples, eval_data.n);
        EpochMetrics m;
        m.epoch = epoch + 1;
        m.eps = eps_cur;
        m.lambda = cfg.lambda;
        m.loss = epoch_loss / static_cast<double>(batches);
        m.mean_margin = epoch_margin / static_cast<double>(batches);
        m.mean_delta = epoch_delta / static_cast<double>(batches);
        m.std_acc = standard_accuracy(net, eval_data, mcount, cfg.workers);
        AttackConfig macfg = cfg.monitor_attack;
        macfg.seed = mix_seed(cfg.seed, 0xa77ac4ULL, static_cast<uint64_t>(epoch));
        m.pgd_acc = eps_cur > 0.0 ? adversarial_accuracy(net, eval_data, mcount, static_cast<float>(eps_cur), macfg,
                                                         cfg.workers)
                                  : m.std_acc;
        // certification monitor in double
        if (eps_cur > 0.0) {
            const Network<double> net64 = net.cast<double>();
            std::vector<uint8_t> cert(static_cast<size_t>(mcount));
            parallel_for(static_cast<size_t>(mcount), cfg.workers, [&](size_t begin, size_t end, int) {
                for (size_t i = begin; i < end; ++i) {
                    const Tensor<double> x = eval_data.image<double>(static_cast<int>(i)).reshaped(net64.input_shape);
                    const int t = eval_data.label(static_cast<int>(i));
                    cert[i] = certify_box(net64, x, eps_cur, t).certified ? 1 : 0;
                }
            });
            size_t certified = 0;
            for (uint8_t v : cert) certified += v;
            m.box_cert_acc = static_cast<double>(certified) / mcount;
        } else {
            m.box_cert_acc = m.std_acc;
        }

        result.history.push_back(m);
        if (csv.is_open()) {
            csv << format_csv_row(m) << "\n";
            csv.flush();
        }
        std::fprintf(stderr,
                     "epoch %d/%d eps=%.4f loss=%.4f std=%.4f pgd=%.4f cert=%.4f margin=%.3f delta=%.3f\n",
                     m.epoch, cfg.epochs, m.eps, m.loss, m.std_acc, m.pgd_acc, m.box_cert_acc, m.mean_margin,
                     m.mean_delta);
    }
    return result;
}

}  // namespace sabr
