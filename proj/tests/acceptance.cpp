// Acceptance suite: ten criteria, one test case each, every case printing
// a single [PASS]/[FAIL] line. Criteria 7-9 train (or reuse) six
// desk-scale MNIST checkpoints under desk_runs/ and cache their
// evaluations; everything else runs from scratch in minutes.
//
// MNIST IDX files are looked up in $SABR_DATA_DIR, ./data/mnist,
// ../data/mnist, ../../data/mnist, then $HOME/data/mnist.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "sabr/analyze.hpp"
#include "sabr/attack.hpp"
#include "sabr/box.hpp"
#include "sabr/checkpoint.hpp"
#include "sabr/config.hpp"
#include "sabr/deeppoly.hpp"
#include "sabr/kernels.hpp"
#include "sabr/ops.hpp"
#include "sabr/parallel.hpp"
#include "sabr/region.hpp"
#include "sabr/theory.hpp"
#include "sabr/train.hpp"

using namespace sabr;
using nlohmann::json;

namespace {

void report(int n, const std::string& desc, bool ok, const std::string& detail = "") {
    std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", n, desc.c_str(), detail.empty() ? "" : " — ",
                detail.c_str());
    std::fflush(stdout);
    CHECK_MESSAGE(ok, "criterion ", n, ": ", desc, " ", detail);
}

int env_workers() {
    if (const char* w = std::getenv("SABR_WORKERS")) return std::max(1, std::atoi(w));
    return 2;
}

std::optional<std::string> find_mnist() {
    std::vector<std::string> candidates;
    if (const char* env = std::getenv("SABR_DATA_DIR")) candidates.push_back(env);
    candidates.push_back("data/mnist");
    candidates.push_back("../data/mnist");
    candidates.push_back("../../data/mnist");
    if (const char* home = std::getenv("HOME")) candidates.push_back(std::string(home) + "/data/mnist");
    for (const auto& c : candidates)
        if (std::filesystem::exists(c + "/train-images-idx3-ubyte")) return c;
    return std::nullopt;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

// FNV-1a of a file, used to tie evaluation caches to checkpoint bytes
std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    // appends "12.3s (budget 300s)" and folds the budget into ok
    std::string finish(bool& ok, double budget_s) const {
        const double s = seconds();
        if (s >= budget_s) ok = false;
        char buf[64];
        std::snprintf(buf, sizeof(buf), ", %.1fs (budget %.0fs)", s, budget_s);
        return buf;
    }
};

constexpr double kSoundnessSlack = 1e-6;

}  // namespace

TEST_CASE("criterion 1") {
    const std::string desc = "interval soundness on 100 random nets, 1e4 sampled points each";
    Stopwatch watch;
    std::vector<uint8_t> ok(100, 1);
    parallel_for(100, env_workers(), [&](size_t begin, size_t end, int) {
        for (size_t nidx = begin; nidx < end; ++nidx) {
            Rng rng(mix_seed(1000, nidx));
            const Network<double> net = test::random_net<double>(rng);
            const Tensor<double> centre = test::random_tensor<double>(net.input_shape, rng, 0.1, 0.9);
            const Tensor<double> radius = test::random_tensor<double>(net.input_shape, rng, 0.0, 0.3);
            const BoxTensor<double> in = make_box(centre, radius);
            const BoxTrace<double> tr = propagate_box(net, in, 1.0);
            for (int s = 0; s < 10000 && ok[nidx]; ++s) {
                Tensor<double> x(centre.shape());
                for (size_t i = 0; i < x.size(); ++i)
                    x[i] = rng.uniform(centre[i] - radius[i], centre[i] + radius[i]);
                const std::vector<Tensor<double>> acts = forward_trace(net, x);
                for (size_t li = 0; li < acts.size() && ok[nidx]; ++li) {
                    const BoxTensor<double>& b = tr.boxes[li];
                    for (size_t i = 0; i < acts[li].size(); ++i) {
                        const double lo = b.centre[i] - b.radius[i], hi = b.centre[i] + b.radius[i];
                        if (acts[li][i] < lo - kSoundnessSlack || acts[li][i] > hi + kSoundnessSlack) {
                            ok[nidx] = 0;
                            break;
                        }
                    }
                }
            }
        }
    });
    int violations = 0;
    for (uint8_t v : ok) violations += v ? 0 : 1;
    bool pass = violations == 0;
    const std::string timing = watch.finish(pass, 300);
    report(1, desc, pass, std::to_string(violations) + " nets with containment violations" + timing);
}

TEST_CASE("criterion 2") {
    const std::string desc = "gradient fidelity vs central differences on 50 instances (rel < 1e-5)";
    Stopwatch watch;
    Rng rng(2000);
    int done = 0;
    double worst = 0.0;
    bool ok = true;
    while (done < 50) {
        Network<double> net = test::random_net<double>(rng, false);
        const Tensor<double> x = test::random_tensor<double>(net.input_shape, rng, 0.2, 0.8);
        const int t = static_cast<int>(rng.below(static_cast<uint64_t>(net.num_classes)));
        RegionSpec<double> region;
        region.anchor = x;
        region.eps = 0.06;
        region.lambda = 0.5;
        region.tau = 0.03;
        region.centre = x;
        // keep the probe away from ReLU stability boundaries
        if (test::relu_boundary_margin(net, region_box(region)) < 1e-3) continue;
        const int kind = done % 3;
        ++done;

        std::vector<Tensor<double>> grads = make_grad_buffers(net);
        std::function<double(const Network<double>&)> eval;
        {
            Tape<double> tape;
            TapeNet<double> tnet(tape, net, true);
            Val loss;
            if (kind == 0) {  // pointwise forward + cross-entropy
                const Val xin = tape.leaf(x, false);
                loss = tape.softmax_cross_entropy(tnet.forward(xin), t);
                eval = [&x, t](const Network<double>& n) { return ops::softmax_cross_entropy(forward(n, x), t); };
            } else if (kind == 1) {  // smooth scalar of the propagated box
                const Val vc = tape.leaf(region.centre, false);
                const Val vr = tape.leaf(Tensor<double>::full(x.shape(), region.tau), false);
                auto [oc, orr] = tnet.forward_box(vc, vr, 1.0);
                loss = tape.add(tape.sum(oc), tape.sum(orr));
                eval = [&region](const Network<double>& n) {
                    const BoxTrace<double> tr = propagate_box(n, region_box(region), 1.0);
                    double s = 0;
                    for (size_t i = 0; i < tr.out().centre.size(); ++i)
                        s += tr.out().centre[i] + tr.out().radius[i];
                    return s;
                };
            } else {  // robust loss
                loss = robust_loss_on_tape(tape, tnet, region, t, 1.0);
                eval = [&region, t](const Network<double>& n) { return robust_loss_value(n, region, t, 1.0); };
            }
            tape.backward(loss);
            tnet.add_param_grads(grads);
        }
        std::vector<double> dir(test::flat_param_count(net));
        for (auto& d : dir) d = rng.normal();
        const double analytic = test::flat_dot(grads, dir);
        const double fd = test::central_diff<double>(net, dir, 1e-5, eval);
        const double err = test::rel_error(analytic, fd);
        worst = std::max(worst, err);
        if (err >= 1e-5) ok = false;
    }
    const std::string timing = watch.finish(ok, 120);
    report(2, desc, ok, "worst relative error " + fmt(worst) + timing);
}

TEST_CASE("criterion 3") {
    const std::string desc = "DeepPoly dominance (100 nets) and affine exactness vs corner oracle";
    Stopwatch watch;
    std::vector<uint8_t> ok(100, 1);
    parallel_for(100, env_workers(), [&](size_t begin, size_t end, int) {
        for (size_t nidx = begin; nidx < end; ++nidx) {
            Rng rng(mix_seed(3000, nidx));
            const Network<double> net = test::random_net<double>(rng);
            const BoxTensor<double> in = make_box(test::random_tensor<double>(net.input_shape, rng, 0.2, 0.8),
                                                  test::random_tensor<double>(net.input_shape, rng, 0.0, 0.2));
            const DeepPolyResult res = deeppoly_bounds(net, in);
            const BoxTrace<double> box = propagate_box(net, in, 1.0);
            for (size_t li = 0; li < net.layers.size() && ok[nidx]; ++li)
                for (size_t i = 0; i < res.layers[li].concrete_lo.size(); ++i) {
                    const double blo = box.boxes[li].centre[i] - box.boxes[li].radius[i];
                    const double bhi = box.boxes[li].centre[i] + box.boxes[li].radius[i];
                    if (res.layers[li].concrete_lo[i] < blo - 1e-9 || res.layers[li].concrete_hi[i] > bhi + 1e-9) {
                        ok[nidx] = 0;
                        break;
                    }
                }
        }
    });
    bool dominance = true;
    for (uint8_t v : ok)
        if (!v) dominance = false;

    bool exact = true;
    double worst = 0.0;
    Rng rng(3333);
    for (int iter = 0; iter < 30; ++iter) {
        const int d = 2 + static_cast<int>(rng.below(9));
        std::vector<int> dims = {d};
        const int depth = 1 + static_cast<int>(rng.below(3));
        for (int i = 0; i < depth - 1; ++i) dims.push_back(2 + static_cast<int>(rng.below(6)));
        dims.push_back(3);
        Network<double> net;
        net.input_shape = {d};
        net.num_classes = 3;
        for (size_t i = 0; i + 1 < dims.size(); ++i) {
            Layer<double> l;
            l.kind = LayerKind::Linear;
            l.weight = test::random_tensor<double>({dims[i], dims[i + 1]}, rng);
            l.bias = test::random_tensor<double>({dims[i + 1]}, rng);
            net.layers.push_back(std::move(l));
        }
        net.refresh_cache();
        const BoxTensor<double> in =
            make_box(test::random_tensor<double>({d}, rng), test::random_tensor<double>({d}, rng, 0.0, 0.5));
        const DeepPolyResult res = deeppoly_bounds(net, in);
        Tensor<double> lo = Tensor<double>::full({3}, 1e300), hi = Tensor<double>::full({3}, -1e300);
        for (long mask = 0; mask < (1L << d); ++mask) {
            Tensor<double> x(in.centre.shape());
            for (int i = 0; i < d; ++i)
                x[static_cast<size_t>(i)] =
                    in.centre[static_cast<size_t>(i)] +
                    (((mask >> i) & 1) ? in.radius[static_cast<size_t>(i)] : -in.radius[static_cast<size_t>(i)]);
            const Tensor<double> y = forward(net, x);
            for (size_t k = 0; k < 3; ++k) {
                lo[k] = std::min(lo[k], y[k]);
                hi[k] = std::max(hi[k], y[k]);
            }
        }
        for (size_t k = 0; k < 3; ++k) {
            worst = std::max(worst, test::rel_error(res.out_lo()[k], lo[k]));
            worst = std::max(worst, test::rel_error(res.out_hi()[k], hi[k]));
        }
        if (worst >= 1e-9) exact = false;
    }
    bool pass = dominance && exact;
    const std::string timing = watch.finish(pass, 300);
    report(3, desc, pass,
           std::string(dominance ? "dominance ok" : "dominance VIOLATED") + ", affine worst rel err " + fmt(worst) +
               timing);
}

TEST_CASE("criterion 4") {
    const std::string desc = "growth theory: derivative formula, closed form vs MC, strict convexity";
    Stopwatch watch;
    bool a_ok = true;
    double a_worst = 0;
    const theory::CentreDistribution gauss = theory::Gaussian{-1.0, std::sqrt(0.5)};
    for (double d = 0.05; d <= 3.0 + 1e-9; d += 0.05) {
        const double h = 1e-4;
        const double numeric =
            (theory::expected_output_radius(gauss, d + h) - theory::expected_output_radius(gauss, d - h)) / (2 * h);
        const double formula = theory::growth_rate_derivative(gauss, d).first;
        const double err = test::rel_error(numeric, formula);
        a_worst = std::max(a_worst, err);
        if (err >= 1e-3) a_ok = false;
    }

    bool b_ok = true;
    const theory::PiecewiseUniform pw{3.0, 1.0};
    const double support = pw.support();
    for (int i = 1; i <= 10; ++i) {
        const double d = support * i / 10.5;
        const theory::McEstimate mc =
            theory::mc_expected_output_radius(theory::CentreDistribution(pw), d, 1000000, 40 + i, env_workers());
        const double closed = theory::expected_output_radius(theory::CentreDistribution(pw), d);
        if (std::abs(mc.mean - closed) >= 3.0 * mc.std_error) b_ok = false;
    }

    bool c_ok = true;
    std::vector<theory::CentreDistribution> dists = {
        theory::PiecewiseUniform{2.0, 1.0}, theory::PiecewiseUniform{4.0, 1.0}, theory::PiecewiseUniform{8.0, 2.0},
        theory::Gaussian{-1.0, std::sqrt(0.5)}, theory::Gaussian{-0.5, 1.0}};
    for (const auto& dist : dists) {
        std::vector<double> deltas, values;
        const bool pw_dist = std::holds_alternative<theory::PiecewiseUniform>(dist);
        const double hi = pw_dist ? std::get<theory::PiecewiseUniform>(dist).support() * 0.98 : 2.5;
        for (double d = hi / 40; d <= hi; d += hi / 40) {
            deltas.push_back(d);
            values.push_back(theory::expected_output_radius(dist, d));
        }
        for (size_t i = 2; i < deltas.size(); ++i) {
            const double s1 = (values[i - 1] - values[i - 2]) / (deltas[i - 1] - deltas[i - 2]);
            const double s2 = (values[i] - values[i - 1]) / (deltas[i] - deltas[i - 1]);
            if (!(s2 > s1)) c_ok = false;  // strictly increasing slopes
        }
        if (theory::growth_rate_derivative(dist, hi * 0.5).second <= 0.0) c_ok = false;
    }
    bool pass = a_ok && b_ok && c_ok;
    const std::string timing = watch.finish(pass, 180);
    report(4, desc, pass,
           "derivative worst rel err " + fmt(a_worst) + (b_ok ? ", MC ok" : ", MC MISMATCH") +
               (c_ok ? ", convexity ok" : ", convexity VIOLATED") + timing);
}

TEST_CASE("criterion 5") {
    const std::string desc = "loss sandwich m < L < m + ln(n) on 1000 positive-margin triples";
    Stopwatch watch;
    Rng rng(5000);
    int checked = 0, violations = 0;
    while (checked < 1000) {
        const Network<double> net = test::random_net<double>(rng);
        const Tensor<double> x = test::random_tensor<double>(net.input_shape, rng, 0, 1);
        const int t = static_cast<int>(rng.below(static_cast<uint64_t>(net.num_classes)));
        const double eps = rng.uniform(0.01, 0.25);
        RegionSpec<double> r;
        r.anchor = x;
        r.eps = eps;
        r.lambda = 1;
        r.tau = eps;
        r.centre = x;
        const BoxTrace<double> tr = propagate_box(net, region_box(r), 1.0);
        const Tensor<double> u = logit_diff_upper(tr.out(), t);
        const double m = worst_margin(u, t);
        if (!(m > 0)) continue;
        ++checked;
        const double loss = robust_ce_from_diff(u, t);
        if (!(loss > m && loss < m + std::log(static_cast<double>(net.num_classes)))) ++violations;
    }
    bool pass = violations == 0;
    const std::string timing = watch.finish(pass, 60);
    report(5, desc, pass, std::to_string(violations) + " violations" + timing);
}

TEST_CASE("criterion 6") {
    const std::string desc = "reductions: lambda=1/0-step equals direct interval training; tau=0 equals CE";
    Stopwatch watch;
    bool a_ok = true;
    {
        Dataset data;
        data.n = 12;
        data.channels = 1;
        data.height = 3;
        data.width = 3;
        data.split = "synthetic";
        Rng drng(66);
        data.pixels.resize(static_cast<size_t>(data.n) * 9);
        for (auto& p : data.pixels) p = static_cast<float>(drng.uniform(0, 1));
        data.labels.resize(static_cast<size_t>(data.n));
        for (auto& l : data.labels) l = static_cast<int>(drng.below(3));

        Network<float> net_a = make_mlp<float>({9, 6, 3});
        init_params(net_a, 4);
        Network<float> net_b = net_a.clone();

        TrainConfig cfg;
        cfg.epochs = 1;
        cfg.eps_final = 0.08;
        cfg.warm_epochs = 0;
        cfg.ramp_epochs = 0;
        cfg.lambda = 1.0;
        cfg.attack.steps = 0;
        cfg.batch_size = 4;
        cfg.l1 = 1e-5;
        cfg.seed = 8;
        cfg.workers = 1;
        cfg.monitor_samples = 4;
        cfg.monitor_attack.steps = 1;
        cfg.decay_epoch_1 = 100;
        cfg.decay_epoch_2 = 100;
        train(net_a, data, data, cfg);

        Adam<float> adam(net_b, cfg.lr);
        std::vector<int> order(12);
        for (int i = 0; i < 12; ++i) order[static_cast<size_t>(i)] = i;
        Rng shuffle_rng(mix_seed(cfg.seed, 0x5f00ff1eULL, 0));
        for (int i = 11; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.below(static_cast<uint64_t>(i + 1)));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
        const float eps = 0.08f;
        for (int batch_start = 0; batch_start < 12; batch_start += 4) {
            std::vector<Tensor<float>> grads = make_grad_buffers(net_b);
            for (int i = 0; i < 4; ++i) {
                const int idx = order[static_cast<size_t>(batch_start + i)];
                const Tensor<float> x = data.image<float>(idx).reshaped({9});
                const int t = data.label(idx);
                Tensor<float> centre(x.shape());
                for (size_t k = 0; k < x.size(); ++k) centre[k] = std::min(std::max(x[k], eps), 1.0f - eps);
                Tape<float> tape;
                TapeNet<float> tnet(tape, net_b, true);
                const Val vc = tape.leaf(centre, false);
                const Val vr = tape.leaf(Tensor<float>::full(x.shape(), eps), false);
                auto [oc, orr] = tnet.forward_box(vc, vr, 1.0f);
                const Val u = logit_diff_upper(tape, oc, orr, t);
                const Val loss = tape.softmax_cross_entropy(u, t);
                tape.backward(loss);
                tnet.add_param_grads(grads);
            }
            for (auto& g : grads) kernels::vscale(g.data(), g.data(), 0.25f, 0.0f, g.size());
            const auto params = trainable_params(net_b);
            for (size_t k = 0; k < params.size(); ++k) {
                if (!params[k].is_weight) continue;
                kernels::sign_step(grads[k].data(), net_b.layers[static_cast<size_t>(params[k].layer)].weight.data(),
                                   1e-5f, grads[k].size());
            }
            double sq = 0;
            for (const auto& g : grads) sq += static_cast<double>(kernels::dot(g.data(), g.data(), g.size()));
            if (std::sqrt(sq) > 10.0) {
                const float s = static_cast<float>(10.0 / std::sqrt(sq));
                for (auto& g : grads) kernels::vscale(g.data(), g.data(), s, 0.0f, g.size());
            }
            adam.step(net_b, grads, cfg.lr);
        }
        for (size_t li = 0; li < net_a.layers.size() && a_ok; ++li) {
            const auto& la = net_a.layers[li];
            const auto& lb = net_b.layers[li];
            for (size_t i = 0; i < la.weight.size(); ++i)
                if (la.weight[i] != lb.weight[i]) a_ok = false;
            for (size_t i = 0; i < la.bias.size(); ++i)
                if (la.bias[i] != lb.bias[i]) a_ok = false;
        }
    }

    bool b_ok = true;
    Rng rng(6060);
    for (int iter = 0; iter < 50; ++iter) {
        const Network<double> net = test::random_net<double>(rng);
        const Tensor<double> x = test::random_tensor<double>(net.input_shape, rng, 0, 1);
        const int t = static_cast<int>(rng.below(static_cast<uint64_t>(net.num_classes)));
        RegionSpec<double> r;
        r.anchor = x;
        r.eps = 0;
        r.lambda = 1;
        r.tau = 0;
        r.centre = x;
        if (robust_loss_value(net, r, t, 1.0) != ops::softmax_cross_entropy(forward(net, x), t)) b_ok = false;
    }
    bool pass = a_ok && b_ok;
    const std::string timing = watch.finish(pass, 60);
    report(6, desc, pass,
           std::string(a_ok ? "bit-exact trainer match" : "trainer MISMATCH") +
               (b_ok ? ", tau=0 bit-exact" : ", tau=0 MISMATCH") + timing);
}

// ---------------------------------------------------------------- desk lab

namespace {

struct DeskEval {
    double std_acc = 0, box_cert = 0, dp_cert = 0, pgd_acc = 0;
    bool chain_ok = false;
    double relu_active_point = 0;
    double cos_robust_clean = 0;
    std::vector<double> curve_lambdas, curve_loss;  // clean-centre box losses
};

struct DeskLab {
    std::string data_dir;
    Dataset test_set;
    std::string run_dir = "desk_runs";
    int workers = env_workers();
    bool ready = false;

    static DeskLab& instance() {
        static DeskLab lab;
        return lab;
    }

    bool init() {
        if (ready) return true;
        const auto dir = find_mnist();
        if (!dir) return false;
        data_dir = *dir;
        test_set = load_mnist(data_dir, "test");
        std::filesystem::create_directories(run_dir);
        ready = true;
        return true;
    }

    std::string ckpt_base(const std::string& method, int seed) const {
        return run_dir + "/desk-" + method + "-s" + std::to_string(seed);
    }

    void ensure_trained(const std::string& method, int seed) {
        const std::string base = ckpt_base(method, seed);
        if (std::filesystem::exists(base + ".bin")) return;
        std::fprintf(stderr, "== training %s seed %d (20 epochs, full train set) ==\n", method.c_str(), seed);
        const Dataset train_set = load_mnist(data_dir, "train");
        TrainConfig cfg = preset(method == "ibp" ? "desk-ibp-0.1" : "desk-sabr-0.1");
        cfg.seed = static_cast<uint64_t>(seed);
        cfg.workers = workers;
        cfg.metrics_csv = base + ".metrics.csv";
        cfg.monitor_samples = 200;
        Network<float> net = make_by_name<float>(cfg.arch, train_set.item_shape(), 10);
        init_params(net, cfg.seed);
        train(net, train_set, test_set, cfg);
        save_checkpoint(net, base);
    }

    DeskEval evaluate(const std::string& method, int seed) {
        ensure_trained(method, seed);
        const std::string base = ckpt_base(method, seed);
        const std::string cache_path = base + ".eval.json";
        const std::string ckpt_hash = file_hash_hex(base + ".bin");
        const std::vector<double> lambdas = {0.0125, 0.025, 0.05, 0.1, 0.2, 0.4, 0.8, 1.0};
        if (std::filesystem::exists(cache_path)) {
            const json j = load_json_file(cache_path);
            if (j.value("eval_version", 0) == 3 && j.value("checkpoint_hash", "") == ckpt_hash) {
                DeskEval e;
                e.std_acc = j["std_acc"];
                e.box_cert = j["box_cert"];
                e.dp_cert = j["dp_cert"];
                e.pgd_acc = j["pgd_acc"];
                e.chain_ok = j["chain_ok"];
                e.relu_active_point = j["relu_active_point"];
                e.cos_robust_clean = j["cos_robust_clean"];
                e.curve_lambdas = j["curve_lambdas"].get<std::vector<double>>();
                e.curve_loss = j["curve_loss"].get<std::vector<double>>();
                return e;
            }
        }

        std::fprintf(stderr, "== evaluating %s seed %d on the first 1000 test samples ==\n", method.c_str(), seed);
        const double eps = 0.1;
        const int count = 1000;
        const Network<float> net32 = load_checkpoint<float>(base);
        const Network<double> net64 = load_checkpoint<double>(base);
        DeskEval e;

        std::vector<uint8_t> std_ok(count), box_ok(count), dp_ok(count), pgd_ok(count), chain(count, 1);
        parallel_for(static_cast<size_t>(count), workers, [&](size_t begin, size_t end, int) {
            for (size_t i = begin; i < end; ++i) {
                const Tensor<double> x64 = test_set.image<double>(static_cast<int>(i));
                const Tensor<float> x32 = test_set.image<float>(static_cast<int>(i));
                const int label = test_set.label(static_cast<int>(i));
                const bool std_c = ops::argmax(forward(net64, x64)) == label;
                std_ok[i] = std_c;
                const bool box_c = std_c && certify_box(net64, x64, eps, label).certified;
                const bool dp_c = std_c && certify_deeppoly(net64, x64, eps, label).verdict == Verdict::Certified;
                box_ok[i] = box_c;
                dp_ok[i] = dp_c;
                bool pgd_c = std_c;
                if (std_c) {
                    AttackConfig atk;
                    atk.steps = 50;
                    atk.restarts = 5;
                    atk.alpha = 0.5;
                    atk.decay = {{25, 0.1}, {44, 0.1}};
                    atk.loss = AttackLoss::TargetedMargin;
                    atk.seed = mix_seed(9090, i);
                    const PgdResult<float> r = pgd(net32, x32, label, static_cast<float>(eps), atk);
                    if (r.found_misclass) {
                        // confirm the candidate in double before counting it
                        const Tensor<double> cand = r.x_misclass.cast<double>();
                        if (ops::argmax(forward(net64, cand)) != label) pgd_c = false;
                    }
                }
                pgd_ok[i] = pgd_c;
                if ((box_c && !dp_c) || (dp_c && !pgd_c) || (pgd_c && !std_c)) chain[i] = 0;
            }
        });
        int n_std = 0, n_box = 0, n_dp = 0, n_pgd = 0;
        bool chain_all = true;
        for (int i = 0; i < count; ++i) {
            n_std += std_ok[static_cast<size_t>(i)];
            n_box += box_ok[static_cast<size_t>(i)];
            n_dp += dp_ok[static_cast<size_t>(i)];
            n_pgd += pgd_ok[static_cast<size_t>(i)];
            chain_all = chain_all && chain[static_cast<size_t>(i)];
        }
        e.std_acc = static_cast<double>(n_std) / count;
        e.box_cert = static_cast<double>(n_box) / count;
        e.dp_cert = static_cast<double>(n_dp) / count;
        e.pgd_acc = static_cast<double>(n_pgd) / count;
        e.chain_ok = chain_all;

        e.relu_active_point = relu_state_stats(net64, test_set, count, EvalMode::Point, eps).active;

        LossSpec robust;
        robust.kind = LossSpec::Kind::RobustBox;
        robust.lambda = method == "ibp" ? 1.0 : 0.4;
        robust.adv_centre = method != "ibp";
        LossSpec clean;
        clean.kind = LossSpec::Kind::CleanCE;
        AttackConfig atk8;
        e.cos_robust_clean = grad_cosine(net32, test_set, count, robust, clean, eps, atk8, 777, workers);

        AttackConfig none;
        none.steps = 0;
        const auto rows = loss_curve(net32, test_set, count, lambdas, BoundMethod::Box, eps, 1.0, none, 0, workers);
        for (const auto& r : rows) {
            e.curve_lambdas.push_back(r.lambda);
            e.curve_loss.push_back(r.loss_clean_centre);
        }

        json j;
        j["eval_version"] = 3;
        j["checkpoint_hash"] = ckpt_hash;
        j["std_acc"] = e.std_acc;
        j["box_cert"] = e.box_cert;
        j["dp_cert"] = e.dp_cert;
        j["pgd_acc"] = e.pgd_acc;
        j["chain_ok"] = e.chain_ok;
        j["relu_active_point"] = e.relu_active_point;
        j["cos_robust_clean"] = e.cos_robust_clean;
        j["curve_lambdas"] = e.curve_lambdas;
        j["curve_loss"] = e.curve_loss;
        std::ofstream(cache_path, std::ios::trunc) << j.dump(2) << "\n";
        return e;
    }
};

// Super-linear growth with positive curvature on the log plot, checked
// three ways: the least-squares quadratic of ln(L) curves upward, the
// divided differences of L itself are non-decreasing, and the last slope
// exceeds 1.5x the first. A linearly growing curve fails the first and
// third checks decisively (ln of an affine function is concave). Exact
// per-interval log-slope monotonicity is deliberately not required: nets
// trained at small ratios blow up by orders of magnitude past their
// training ratio, and the log compresses that tail into a slope drop.
bool super_linear_curve(const std::vector<double>& xs, const std::vector<double>& ys) {
    std::vector<double> ln(ys.size());
    for (size_t i = 0; i < ys.size(); ++i) ln[i] = std::log(ys[i]);
    if (theory::fit_quadratic(xs, ln)[0] <= 0.0) return false;
    std::vector<double> slopes;
    for (size_t i = 1; i < xs.size(); ++i) slopes.push_back((ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]));
    for (size_t i = 1; i < slopes.size(); ++i)
        if (slopes[i] < slopes[i - 1] * (1.0 - 1e-9)) return false;
    return slopes.back() > 1.5 * slopes.front();
}

}  // namespace

TEST_CASE("criterion 7") {
    const std::string desc = "desk-scale MNIST trend: SABR std acc gain, both >= 85% certified, DP >= Box";
    DeskLab& lab = DeskLab::instance();
    if (!lab.init()) {
        report(7, desc, false, "MNIST data not found (set SABR_DATA_DIR)");
        return;
    }
    std::vector<DeskEval> ibp, sabr;
    for (int seed : {0, 1, 2}) {
        ibp.push_back(lab.evaluate("ibp", seed));
        sabr.push_back(lab.evaluate("sabr", seed));
    }
    int gap_wins = 0;
    double mean_gap = 0;
    double min_cert = 1.0;
    bool dp_ge_box = true;
    std::ostringstream detail;
    for (int s = 0; s < 3; ++s) {
        const double gap = (sabr[static_cast<size_t>(s)].std_acc - ibp[static_cast<size_t>(s)].std_acc) * 100.0;
        mean_gap += gap / 3.0;
        if (gap >= 0.2) ++gap_wins;
        min_cert = std::min({min_cert, sabr[static_cast<size_t>(s)].box_cert, ibp[static_cast<size_t>(s)].box_cert});
        if (sabr[static_cast<size_t>(s)].dp_cert < sabr[static_cast<size_t>(s)].box_cert) dp_ge_box = false;
        detail << "s" << s << "[std " << fmt(ibp[static_cast<size_t>(s)].std_acc) << "->"
               << fmt(sabr[static_cast<size_t>(s)].std_acc) << " cert " << fmt(ibp[static_cast<size_t>(s)].box_cert)
               << "/" << fmt(sabr[static_cast<size_t>(s)].box_cert) << " dp "
               << fmt(sabr[static_cast<size_t>(s)].dp_cert) << "] ";
    }
    const bool a = gap_wins >= 2;
    const bool b = min_cert >= 0.85;
    const bool c = dp_ge_box;
    detail << "mean gap " << fmt(mean_gap) << "pt, wins " << gap_wins << "/3, min cert " << fmt(min_cert);
    report(7, desc, a && b && c, detail.str());
}

TEST_CASE("criterion 8") {
    const std::string desc = "ablation trends: active ReLUs, gradient alignment, loss curves";
    DeskLab& lab = DeskLab::instance();
    if (!lab.init()) {
        report(8, desc, false, "MNIST data not found (set SABR_DATA_DIR)");
        return;
    }
    int relu_wins = 0, cos_wins = 0, loss_wins = 0, convex_ok = 0;
    std::ostringstream detail;
    for (int seed : {0, 1, 2}) {
        const DeskEval ibp = lab.evaluate("ibp", seed);
        const DeskEval sabr = lab.evaluate("sabr", seed);
        if (sabr.relu_active_point > ibp.relu_active_point) ++relu_wins;
        if (sabr.cos_robust_clean > ibp.cos_robust_clean) ++cos_wins;
        const double sabr_loss = sabr.curve_loss[5];  // lambda = 0.4
        const double ibp_loss = ibp.curve_loss[7];    // lambda = 1.0
        if (sabr_loss < ibp_loss) ++loss_wins;
        if (super_linear_curve(sabr.curve_lambdas, sabr.curve_loss) &&
            super_linear_curve(ibp.curve_lambdas, ibp.curve_loss))
            ++convex_ok;
        detail << "s" << seed << "[act " << fmt(ibp.relu_active_point) << "/" << fmt(sabr.relu_active_point)
               << " cos " << fmt(ibp.cos_robust_clean) << "/" << fmt(sabr.cos_robust_clean) << " loss "
               << fmt(ibp_loss) << "/" << fmt(sabr_loss) << "] ";
    }
    const bool ok = relu_wins >= 2 && cos_wins >= 2 && loss_wins >= 2 && convex_ok >= 2;
    detail << "wins: relu " << relu_wins << " cos " << cos_wins << " loss " << loss_wins << " convex " << convex_ok;
    report(8, desc, ok, detail.str());
}

TEST_CASE("criterion 9") {
    const std::string desc = "ordering chain Box <= DeepPoly <= PGD <= standard on every checkpoint";
    DeskLab& lab = DeskLab::instance();
    if (!lab.init()) {
        report(9, desc, false, "MNIST data not found (set SABR_DATA_DIR)");
        return;
    }
    bool ok = true;
    std::ostringstream detail;
    for (const std::string method : {"ibp", "sabr"}) {
        for (int seed : {0, 1, 2}) {
            const DeskEval e = lab.evaluate(method, seed);
            const bool chain = e.chain_ok && e.box_cert <= e.dp_cert + 1e-12 && e.dp_cert <= e.pgd_acc + 1e-12 &&
                               e.pgd_acc <= e.std_acc + 1e-12;
            if (!chain) ok = false;
            detail << method << seed << "(" << fmt(e.box_cert) << "<=" << fmt(e.dp_cert) << "<=" << fmt(e.pgd_acc)
                   << "<=" << fmt(e.std_acc) << (chain ? ") " : " VIOLATED) ");
        }
    }
    report(9, desc, ok, detail.str());
}

TEST_CASE("criterion 10") {
    const std::string desc = "format round trips: checkpoint, IDX fixture, CLI manifest reproduction";
    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "sabr_accept_fmt").string();
    fs::create_directories(dir);
    auto read_file = [](const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };

    bool ckpt_ok = true;
    {
        Network<float> net = make_small_cnn<float>({1, 8, 8}, 10, {4, 8}, 16);
        init_params(net, 42);
        save_checkpoint(net, dir + "/a");
        const Network<float> loaded = load_checkpoint<float>(dir + "/a");
        save_checkpoint(loaded, dir + "/b");
        ckpt_ok = read_file(dir + "/a.bin") == read_file(dir + "/b.bin") &&
                  read_file(dir + "/a.manifest.json") == read_file(dir + "/b.manifest.json");
    }

    bool idx_ok = true;
    {
        Rng rng(10);
        std::vector<uint8_t> imgs(2 * 4 * 4);
        for (auto& b : imgs) b = static_cast<uint8_t>(rng.below(256));
        write_idx_images(dir + "/imgs", imgs, 2, 4, 4);
        int n, r, c;
        const std::vector<uint8_t> back = read_idx_images(dir + "/imgs", n, r, c);
        write_idx_images(dir + "/imgs2", back, n, r, c);
        idx_ok = read_file(dir + "/imgs") == read_file(dir + "/imgs2");
    }

    bool cli_ok = true;
    const char* cli = std::getenv("SABR_CLI");
    if (cli) {
        Rng rng(11);
        const int n = 16;
        std::vector<uint8_t> imgs(static_cast<size_t>(n) * 28 * 28);
        std::vector<uint8_t> labels(static_cast<size_t>(n));
        for (auto& b : imgs) b = static_cast<uint8_t>(rng.below(256));
        for (auto& l : labels) l = static_cast<uint8_t>(rng.below(10));
        write_idx_images(dir + "/t10k-images-idx3-ubyte", imgs, n, 28, 28);
        write_idx_labels(dir + "/t10k-labels-idx1-ubyte", labels);
        write_idx_images(dir + "/train-images-idx3-ubyte", imgs, n, 28, 28);
        write_idx_labels(dir + "/train-labels-idx1-ubyte", labels);
        Network<float> net = make_small_cnn<float>({1, 28, 28}, 10, {4, 8}, 32);
        init_params(net, 7);
        save_checkpoint(net, dir + "/net");
        const std::string cmd = std::string(cli) + " certify --method box --eps 0.03 --checkpoint " + dir +
                                "/net --data " + dir + " --count 8 --workers 1 --out " + dir + "/c.csv";
        cli_ok = std::system((cmd + " >/dev/null 2>&1").c_str()) == 0;
        const std::string first = read_file(dir + "/c.csv");
        cli_ok = cli_ok && std::system((cmd + " >/dev/null 2>&1").c_str()) == 0;
        cli_ok = cli_ok && read_file(dir + "/c.csv") == first && !first.empty();
    } else {
        std::fprintf(stderr, "criterion 10: SABR_CLI not set, CLI reproduction step skipped\n");
    }
    report(10, desc, ckpt_ok && idx_ok && cli_ok,
           std::string(ckpt_ok ? "checkpoint ok" : "checkpoint MISMATCH") +
               (idx_ok ? ", idx ok" : ", idx MISMATCH") + (cli ? (cli_ok ? ", cli ok" : ", cli MISMATCH") : ", cli skipped"));
}
