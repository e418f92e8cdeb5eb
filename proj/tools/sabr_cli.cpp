// Command-line front end: train / attack / certify / analyze / growth-sim.
// Every run resolves its configuration to JSON, writes the outputs, and
// drops a run manifest (<out>.run.json) sufficient to reproduce them.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "sabr/analyze.hpp"
#include "sabr/attack.hpp"
#include "sabr/box.hpp"
#include "sabr/checkpoint.hpp"
#include "sabr/config.hpp"
#include "sabr/deeppoly.hpp"
#include "sabr/error.hpp"
#include "sabr/kernels.hpp"
#include "sabr/ops.hpp"
#include "sabr/parallel.hpp"
#include "sabr/region.hpp"
#include "sabr/rng.hpp"
#include "sabr/theory.hpp"
#include "sabr/train.hpp"

using nlohmann::json;
using namespace sabr;

namespace {

std::string data_dir_default() {
    if (const char* env = std::getenv("SABR_DATA_DIR")) return env;
    return "data/mnist";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out << text;
}

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

struct CommonOpts {
    std::string data_dir = data_dir_default();
    std::string out;
    int workers = 2;
    uint64_t seed = 0;
    std::string kernels_backend;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--data", c.data_dir, "MNIST directory (IDX files); default $SABR_DATA_DIR or data/mnist");
    cmd->add_option("--out", c.out, "output path base")->required();
    cmd->add_option("--workers", c.workers, "worker threads");
    cmd->add_option("--seed", c.seed, "global seed");
    cmd->add_option("--kernels", c.kernels_backend, "kernel backend: scalar | avx2");
}

void apply_backend(const CommonOpts& c) {
    if (c.kernels_backend.empty()) return;
    if (c.kernels_backend == "scalar")
        kernels::set_backend(kernels::Backend::Scalar);
    else if (c.kernels_backend == "avx2")
        kernels::set_backend(kernels::Backend::Avx2);
    else
        throw ConfigError("unknown kernel backend '" + c.kernels_backend + "'");
}

json common_json(const CommonOpts& c) {
    json j;
    j["data"] = c.data_dir;
    j["out"] = c.out;
    j["workers"] = c.workers;
    j["seed"] = c.seed;
    return j;
}

// Fill a field from a config JSON unless its flag was given explicitly.
template <typename T>
void fill(const CLI::App* cmd, const char* flag, const json& j, const char* key, T& dst) {
    if (cmd->count(flag) > 0) return;
    if (j.contains(key)) dst = j[key].get<T>();
}

// Unwrap run manifests ({"config": {...}}) to their config block.
json unwrap_config(const std::string& path) {
    json j = load_json_file(path);
    if (j.contains("config")) j = j["config"];
    return j;
}

void fill_common(const CLI::App* cmd, const json& j, CommonOpts& c) {
    if (!j.contains("common")) return;
    const json& jc = j["common"];
    fill(cmd, "--data", jc, "data", c.data_dir);
    fill(cmd, "--workers", jc, "workers", c.workers);
    fill(cmd, "--seed", jc, "seed", c.seed);
}

// ---- train ----

struct TrainOpts {
    CommonOpts common;
    std::string preset_name;
    std::string config_path;
    TrainConfig cfg;
    int train_count = 0;  // 0 = full set
    int eval_count = 0;
    // flag presence markers
    CLI::App* cmd = nullptr;
};

int run_train(TrainOpts& o) {
    apply_backend(o.common);
    TrainConfig cfg;
    if (!o.preset_name.empty()) cfg = preset(o.preset_name);
    if (!o.config_path.empty()) {
        json j = load_json_file(o.config_path);
        if (j.contains("config")) j = j["config"];  // accept run manifests
        if (j.contains("train")) j = j["train"];
        cfg = train_from_json(j);
    }
    auto flag = [&](const char* name) { return o.cmd->count(name) > 0; };
    if (flag("--epochs")) cfg.epochs = o.cfg.epochs;
    if (flag("--eps")) cfg.eps_final = o.cfg.eps_final;
    if (flag("--lambda")) cfg.lambda = o.cfg.lambda;
    if (flag("--cs")) cfg.cs = o.cfg.cs;
    if (flag("--arch")) cfg.arch = o.cfg.arch;
    if (flag("--batch")) cfg.batch_size = o.cfg.batch_size;
    if (flag("--l1")) cfg.l1 = o.cfg.l1;
    if (flag("--ramp-epochs")) cfg.ramp_epochs = o.cfg.ramp_epochs;
    if (flag("--attack-steps")) cfg.attack.steps = o.cfg.attack.steps;
    if (flag("--monitor-samples")) cfg.monitor_samples = o.cfg.monitor_samples;
    cfg.seed = o.common.seed;
    cfg.workers = o.common.workers;
    cfg.metrics_csv = o.common.out + ".metrics.csv";
    cfg.validate();

    const Dataset train_full = load_mnist(o.common.data_dir, "train");
    const Dataset test_full = load_mnist(o.common.data_dir, "test");
    const Dataset train_set = o.train_count > 0 ? train_full.subset(o.train_count) : train_full;
    const Dataset eval_set = o.eval_count > 0 ? test_full.subset(o.eval_count) : test_full;

    Network<float> net = make_by_name<float>(cfg.arch, train_set.item_shape(), 10);
    init_params(net, cfg.seed);

    json resolved;
    resolved["common"] = common_json(o.common);
    resolved["train"] = train_to_json(cfg);
    resolved["train_count"] = o.train_count;
    resolved["eval_count"] = o.eval_count;
    // initialization is a simplification (fan-in normal, plain linear
    // eps ramp), flagged so runs are comparable
    resolved["init_scheme"] = "simplified-init (fan-in normal, linear eps ramp)";
    write_manifest(o.common.out + ".run.json", make_manifest("train", resolved));

    const TrainResult res = train(net, train_set, eval_set, cfg);
    save_checkpoint(net, o.common.out);
    std::fprintf(stderr, "checkpoint written to %s.bin (+ .manifest.json), metrics to %s\n", o.common.out.c_str(),
                 cfg.metrics_csv.c_str());
    (void)res;
    return 0;
}

// ---- certify ----

struct CertifyOpts {
    CommonOpts common;
    std::string config_path;
    std::string checkpoint;
    std::string method = "box";
    double eps = 0.1;
    double cs = 1.0;
    int count = 1000;
    std::string split = "test";
    CLI::App* cmd = nullptr;
};

int run_certify(CertifyOpts& o) {
    if (!o.config_path.empty()) {
        const json j = unwrap_config(o.config_path);
        fill_common(o.cmd, j, o.common);
        fill(o.cmd, "--checkpoint", j, "checkpoint", o.checkpoint);
        fill(o.cmd, "--method", j, "method", o.method);
        fill(o.cmd, "--eps", j, "eps", o.eps);
        fill(o.cmd, "--cs", j, "cs", o.cs);
        fill(o.cmd, "--count", j, "count", o.count);
        fill(o.cmd, "--split", j, "split", o.split);
    }
    apply_backend(o.common);
    if (o.checkpoint.empty()) throw ConfigError("certify: --checkpoint required (flag or config)");
    if (o.method != "box" && o.method != "deeppoly") throw ConfigError("--method must be box or deeppoly");
    const Network<double> net = load_checkpoint<double>(o.checkpoint);
    const Dataset data = load_mnist(o.common.data_dir, o.split);
    const int count = std::min(o.count, data.n);

    json resolved;
    resolved["common"] = common_json(o.common);
    resolved["checkpoint"] = o.checkpoint;
    resolved["method"] = o.method;
    resolved["eps"] = o.eps;
    resolved["cs"] = o.cs;
    resolved["count"] = count;
    resolved["split"] = o.split;
    write_manifest(o.common.out + ".run.json", make_manifest("certify", resolved));

    struct Row {
        int label, pred;
        bool certified;
        double margin;
    };
    std::vector<Row> rows(static_cast<size_t>(count));
    parallel_for(static_cast<size_t>(count), o.common.workers, [&](size_t begin, size_t end, int) {
        for (size_t i = begin; i < end; ++i) {
            const Tensor<double> x = data.image<double>(static_cast<int>(i)).reshaped(net.input_shape);
            const int label = data.label(static_cast<int>(i));
            const int pred = ops::argmax(forward(net, x));
            bool cert;
            double margin;
            if (o.method == "box") {
                const CertResult<double> c = certify_box(net, x, o.eps, label, o.cs);
                cert = c.certified;
                margin = c.margin;
            } else {
                const DeepPolyCert c = certify_deeppoly(net, x, o.eps, label);
                cert = c.verdict == Verdict::Certified;
                margin = c.margin;
            }
            rows[i] = {label, pred, cert && pred == label, margin};
        }
    });

    std::ostringstream csv;
    csv << "sample,label,predicted,certified,margin\n";
    int certified = 0, correct = 0;
    for (int i = 0; i < count; ++i) {
        const Row& r = rows[static_cast<size_t>(i)];
        csv << i << ',' << r.label << ',' << r.pred << ',' << (r.certified ? 1 : 0) << ',' << csv_num(r.margin)
            << "\n";
        certified += r.certified ? 1 : 0;
        correct += r.pred == r.label ? 1 : 0;
    }
    write_text(o.common.out, csv.str());
    std::fprintf(stderr, "certify(%s, eps=%g): std acc %.4f, certified %.4f (%d/%d) -> %s\n", o.method.c_str(), o.eps,
                 static_cast<double>(correct) / count, static_cast<double>(certified) / count, certified, count,
                 o.common.out.c_str());
    return 0;
}

// ---- attack ----

struct AttackOpts {
    CommonOpts common;
    std::string config_path;
    std::string checkpoint;
    double eps = 0.1;
    int count = 1000;
    int steps = 50;
    int restarts = 5;
    std::string loss = "margin";
    std::string split = "test";
    CLI::App* cmd = nullptr;
};

int run_attack(AttackOpts& o) {
    if (!o.config_path.empty()) {
        const json j = unwrap_config(o.config_path);
        fill_common(o.cmd, j, o.common);
        fill(o.cmd, "--checkpoint", j, "checkpoint", o.checkpoint);
        fill(o.cmd, "--eps", j, "eps", o.eps);
        fill(o.cmd, "--count", j, "count", o.count);
        fill(o.cmd, "--split", j, "split", o.split);
        if (j.contains("attack")) {
            const json& ja = j["attack"];
            fill(o.cmd, "--steps", ja, "steps", o.steps);
            fill(o.cmd, "--restarts", ja, "restarts", o.restarts);
            fill(o.cmd, "--loss", ja, "loss", o.loss);
        }
    }
    apply_backend(o.common);
    if (o.checkpoint.empty()) throw ConfigError("attack: --checkpoint required (flag or config)");
    const Network<float> net = load_checkpoint<float>(o.checkpoint);
    const Dataset data = load_mnist(o.common.data_dir, o.split);
    const int count = std::min(o.count, data.n);

    AttackConfig cfg;
    cfg.steps = o.steps;
    cfg.restarts = o.restarts;
    cfg.alpha = 0.5;
    cfg.decay = {{o.steps / 2, 0.1}, {(o.steps * 7) / 8, 0.1}};
    cfg.loss = o.loss == "margin" ? AttackLoss::TargetedMargin : AttackLoss::CrossEntropy;
    cfg.seed = o.common.seed;

    json resolved;
    resolved["common"] = common_json(o.common);
    resolved["checkpoint"] = o.checkpoint;
    resolved["eps"] = o.eps;
    resolved["count"] = count;
    resolved["attack"] = attack_to_json(cfg);
    resolved["split"] = o.split;
    write_manifest(o.common.out + ".run.json", make_manifest("attack", resolved));

    struct Row {
        int label, pred;
        bool robust;
    };
    std::vector<Row> rows(static_cast<size_t>(count));
    parallel_for(static_cast<size_t>(count), o.common.workers, [&](size_t begin, size_t end, int) {
        for (size_t i = begin; i < end; ++i) {
            const Tensor<float> x = data.image<float>(static_cast<int>(i)).reshaped(net.input_shape);
            const int label = data.label(static_cast<int>(i));
            const int pred = ops::argmax(forward(net, x));
            bool robust = pred == label;
            if (robust && o.eps > 0) {
                AttackConfig local = cfg;
                local.seed = mix_seed(cfg.seed, i);
                robust = !pgd(net, x, label, static_cast<float>(o.eps), local).found_misclass;
            }
            rows[i] = {label, pred, robust};
        }
    });

    std::ostringstream csv;
    csv << "sample,label,predicted,robust\n";
    int robust = 0;
    for (int i = 0; i < count; ++i) {
        const Row& r = rows[static_cast<size_t>(i)];
        csv << i << ',' << r.label << ',' << r.pred << ',' << (r.robust ? 1 : 0) << "\n";
        robust += r.robust ? 1 : 0;
    }
    write_text(o.common.out, csv.str());
    std::fprintf(stderr, "attack(eps=%g, %dx%d): adversarial accuracy %.4f -> %s\n", o.eps, o.steps, o.restarts,
                 static_cast<double>(robust) / count, o.common.out.c_str());
    return 0;
}

// ---- analyze ----

struct AnalyzeOpts {
    CommonOpts common;
    std::string config_path;
    std::string checkpoint;
    std::string mode;  // relu-states | grad-cosine | loss-curve | loss-decomp
    double eps = 0.1;
    double lambda = 0.4;
    double cs = 1.0;
    int count = 1000;
    std::string method = "box";
    std::string eval_mode = "region";  // relu-states
    std::string lambdas = "0.0125,0.025,0.05,0.1,0.2,0.4,0.8,1.0";
    std::string split = "test";
    CLI::App* cmd = nullptr;
};

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

int run_analyze(AnalyzeOpts& o) {
    if (!o.config_path.empty()) {
        const json j = unwrap_config(o.config_path);
        fill_common(o.cmd, j, o.common);
        fill(o.cmd, "--checkpoint", j, "checkpoint", o.checkpoint);
        fill(o.cmd, "mode", j, "mode", o.mode);
        fill(o.cmd, "--eps", j, "eps", o.eps);
        fill(o.cmd, "--lambda", j, "lambda", o.lambda);
        fill(o.cmd, "--cs", j, "cs", o.cs);
        fill(o.cmd, "--count", j, "count", o.count);
        fill(o.cmd, "--method", j, "method", o.method);
        fill(o.cmd, "--eval-mode", j, "eval_mode", o.eval_mode);
        fill(o.cmd, "--lambdas", j, "lambdas", o.lambdas);
        fill(o.cmd, "--split", j, "split", o.split);
    }
    apply_backend(o.common);
    if (o.checkpoint.empty()) throw ConfigError("analyze: --checkpoint required (flag or config)");
    if (o.mode.empty()) throw ConfigError("analyze: mode required (argument or config)");
    const Dataset data = load_mnist(o.common.data_dir, o.split);
    const int count = std::min(o.count, data.n);

    json resolved;
    resolved["common"] = common_json(o.common);
    resolved["checkpoint"] = o.checkpoint;
    resolved["mode"] = o.mode;
    resolved["eps"] = o.eps;
    resolved["lambda"] = o.lambda;
    resolved["cs"] = o.cs;
    resolved["count"] = count;
    resolved["method"] = o.method;
    resolved["eval_mode"] = o.eval_mode;
    resolved["lambdas"] = o.lambdas;
    resolved["split"] = o.split;
    write_manifest(o.common.out + ".run.json", make_manifest("analyze-" + o.mode, resolved));

    AttackConfig atk;  // 8-step selection attack
    atk.seed = o.common.seed;

    std::ostringstream csv;
    if (o.mode == "relu-states") {
        const Network<double> net = load_checkpoint<double>(o.checkpoint);
        const EvalMode mode = o.eval_mode == "point" ? EvalMode::Point : EvalMode::Region;
        const ReluStateStats st = relu_state_stats(net, data, count, mode, o.eps, o.cs);
        csv << "layer,active,inactive,unstable\n";
        for (const auto& row : st.per_layer)
            csv << row.layer << ',' << csv_num(row.active) << ',' << csv_num(row.inactive) << ','
                << csv_num(row.unstable) << "\n";
        csv << "all," << csv_num(st.active) << ',' << csv_num(st.inactive) << ',' << csv_num(st.unstable) << "\n";
    } else if (o.mode == "grad-cosine") {
        const Network<float> net = load_checkpoint<float>(o.checkpoint);
        LossSpec robust;
        robust.kind = LossSpec::Kind::RobustBox;
        robust.lambda = o.lambda;
        robust.cs = o.cs;
        LossSpec clean;
        clean.kind = LossSpec::Kind::CleanCE;
        LossSpec adv;
        adv.kind = LossSpec::Kind::AdvCE;
        const double cos_std = grad_cosine(net, data, count, robust, clean, o.eps, atk, o.common.seed, o.common.workers);
        const double cos_adv = grad_cosine(net, data, count, robust, adv, o.eps, atk, o.common.seed, o.common.workers);
        csv << "reference,cosine\n";
        csv << "std," << csv_num(cos_std) << "\n";
        csv << "adv," << csv_num(cos_adv) << "\n";
    } else if (o.mode == "loss-curve") {
        const Network<float> net = load_checkpoint<float>(o.checkpoint);
        const BoundMethod bm = o.method == "deeppoly" ? BoundMethod::DeepPoly : BoundMethod::Box;
        const auto rows = loss_curve(net, data, count, parse_list(o.lambdas), bm, o.eps, o.cs, atk, o.common.seed,
                                     o.common.workers);
        csv << "lambda,method,loss_clean_centre,loss_adv_centre,std_ce\n";
        for (const auto& r : rows)
            csv << csv_num(r.lambda) << ',' << o.method << ',' << csv_num(r.loss_clean_centre) << ','
                << csv_num(r.loss_adv_centre) << ',' << csv_num(r.std_ce) << "\n";
    } else if (o.mode == "loss-decomp") {
        const Network<float> net = load_checkpoint<float>(o.checkpoint);
        const auto rows = loss_decomp_rows(net, data, count, o.eps, o.lambda, o.cs, atk, o.common.seed,
                                           o.common.workers);
        csv << "sample,label,margin,delta,upper\n";
        double mm = 0, md = 0;
        for (const auto& r : rows) {
            csv << r.sample << ',' << r.label << ',' << csv_num(r.margin) << ',' << csv_num(r.delta) << ','
                << csv_num(r.upper) << "\n";
            mm += r.margin;
            md += r.delta;
        }
        std::fprintf(stderr, "loss-decomp: mean margin %.4f, mean delta %.4f\n", mm / rows.size(), md / rows.size());
    } else {
        throw ConfigError("analyze mode must be relu-states | grad-cosine | loss-curve | loss-decomp");
    }
    write_text(o.common.out, csv.str());
    std::fprintf(stderr, "analyze %s -> %s\n", o.mode.c_str(), o.common.out.c_str());
    return 0;
}

// ---- growth-sim ----

struct GrowthOpts {
    CommonOpts common;
    std::string config_path;
    std::string dist = "gaussian:-1,0.7071";
    std::string grid = "0.05:3:0.05";
    double anchor = 0.05;
    size_t mc_draws = 0;
    CLI::App* cmd = nullptr;
};

theory::CentreDistribution parse_dist(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("--dist must be kind:params, e.g. gaussian:-1,0.7071");
    const std::string kind = s.substr(0, colon);
    const std::vector<double> p = parse_list(s.substr(colon + 1));
    if (kind == "gaussian") {
        if (p.size() != 2) throw ConfigError("gaussian takes mu,sigma");
        return theory::Gaussian{p[0], p[1]};
    }
    if (kind == "uniform") {
        if (p.size() != 2) throw ConfigError("uniform takes a,b (densities left/right of 0)");
        return theory::PiecewiseUniform{p[0], p[1]};
    }
    throw ConfigError("unknown distribution kind '" + kind + "' (gaussian | uniform)");
}

std::vector<double> parse_grid(const std::string& s) {
    std::vector<double> parts = parse_list([&] {
        std::string t = s;
        for (auto& c : t)
            if (c == ':') c = ',';
        return t;
    }());
    if (parts.size() != 3 || parts[2] <= 0) throw ConfigError("--grid must be lo:hi:step");
    std::vector<double> grid;
    for (double d = parts[0]; d <= parts[1] + 1e-12; d += parts[2]) grid.push_back(d);
    return grid;
}

int run_growth(GrowthOpts& o) {
    if (!o.config_path.empty()) {
        const json j = unwrap_config(o.config_path);
        fill_common(o.cmd, j, o.common);
        fill(o.cmd, "--dist", j, "dist", o.dist);
        fill(o.cmd, "--grid", j, "grid", o.grid);
        fill(o.cmd, "--anchor", j, "anchor", o.anchor);
        fill(o.cmd, "--mc", j, "mc_draws", o.mc_draws);
    }
    apply_backend(o.common);
    const theory::CentreDistribution dist = parse_dist(o.dist);
    const std::vector<double> grid = parse_grid(o.grid);

    json resolved;
    resolved["common"] = common_json(o.common);
    resolved["dist"] = o.dist;
    resolved["grid"] = o.grid;
    resolved["anchor"] = o.anchor;
    resolved["mc_draws"] = o.mc_draws;
    write_manifest(o.common.out + ".run.json", make_manifest("growth-sim", resolved));

    const auto curve = theory::growth_curve(dist, grid, o.anchor);
    std::ostringstream csv;
    csv << "delta,expected_radius,linear_ref" << (o.mc_draws ? ",mc_mean,mc_stderr" : "") << "\n";
    for (const auto& r : curve) {
        csv << csv_num(r.delta) << ',' << csv_num(r.expected_radius) << ',' << csv_num(r.linear_ref);
        if (o.mc_draws) {
            const theory::McEstimate mc =
                theory::mc_expected_output_radius(dist, r.delta, o.mc_draws, o.common.seed, o.common.workers);
            csv << ',' << csv_num(mc.mean) << ',' << csv_num(mc.std_error);
        }
        csv << "\n";
    }
    write_text(o.common.out, csv.str());
    std::fprintf(stderr, "growth-sim: %zu grid points, super-linear beyond anchor: %s -> %s\n", curve.size(),
                 theory::super_linear(curve, o.anchor) ? "yes" : "no", o.common.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"certified training and verification toolkit"};
    app.require_subcommand(1);

    TrainOpts t;
    CLI::App* train_cmd = app.add_subcommand("train", "train a network (SABR / IBP / standard)");
    t.cmd = train_cmd;
    add_common(train_cmd, t.common);
    train_cmd->add_option("--preset", t.preset_name, "hyperparameter preset");
    train_cmd->add_option("--config", t.config_path, "JSON config (or run manifest) to start from");
    train_cmd->add_option("--epochs", t.cfg.epochs, "training epochs");
    train_cmd->add_option("--eps", t.cfg.eps_final, "perturbation radius");
    train_cmd->add_option("--lambda", t.cfg.lambda, "subselection ratio in (0,1]");
    train_cmd->add_option("--cs", t.cfg.cs, "ReLU shrink coefficient in (0,1]");
    train_cmd->add_option("--arch", t.cfg.arch, "cnn7 | cnn7-narrow | cnn-small | mlp-small");
    train_cmd->add_option("--batch", t.cfg.batch_size, "batch size");
    train_cmd->add_option("--l1", t.cfg.l1, "l1 coefficient on weights");
    train_cmd->add_option("--ramp-epochs", t.cfg.ramp_epochs, "epsilon ramp length");
    train_cmd->add_option("--attack-steps", t.cfg.attack.steps, "region-selection PGD steps (0 = clean centres)");
    train_cmd->add_option("--monitor-samples", t.cfg.monitor_samples, "per-epoch monitor subset size");
    train_cmd->add_option("--train-count", t.train_count, "limit training samples (0 = all)");
    train_cmd->add_option("--eval-count", t.eval_count, "limit eval samples (0 = all)");

    CertifyOpts c;
    CLI::App* cert_cmd = app.add_subcommand("certify", "verify robustness of a checkpoint");
    c.cmd = cert_cmd;
    add_common(cert_cmd, c.common);
    cert_cmd->add_option("--config", c.config_path, "JSON config or run manifest");
    cert_cmd->add_option("--checkpoint", c.checkpoint, "checkpoint base or .bin path");
    cert_cmd->add_option("--method", c.method, "box | deeppoly");
    cert_cmd->add_option("--eps", c.eps, "perturbation radius");
    cert_cmd->add_option("--cs", c.cs, "shrink coefficient (box only; 1 = sound)");
    cert_cmd->add_option("--count", c.count, "samples to certify");
    cert_cmd->add_option("--split", c.split, "train | test");

    AttackOpts a;
    CLI::App* atk_cmd = app.add_subcommand("attack", "PGD adversarial accuracy of a checkpoint");
    a.cmd = atk_cmd;
    add_common(atk_cmd, a.common);
    atk_cmd->add_option("--config", a.config_path, "JSON config or run manifest");
    atk_cmd->add_option("--checkpoint", a.checkpoint, "checkpoint base or .bin path");
    atk_cmd->add_option("--eps", a.eps, "perturbation radius");
    atk_cmd->add_option("--count", a.count, "samples to attack");
    atk_cmd->add_option("--steps", a.steps, "PGD steps");
    atk_cmd->add_option("--restarts", a.restarts, "random restarts");
    atk_cmd->add_option("--loss", a.loss, "margin | ce");
    atk_cmd->add_option("--split", a.split, "train | test");

    AnalyzeOpts an;
    CLI::App* an_cmd = app.add_subcommand("analyze", "activation / gradient / loss analyses");
    an.cmd = an_cmd;
    add_common(an_cmd, an.common);
    an_cmd->add_option("--config", an.config_path, "JSON config or run manifest");
    an_cmd->add_option("mode", an.mode, "relu-states | grad-cosine | loss-curve | loss-decomp");
    an_cmd->add_option("--checkpoint", an.checkpoint, "checkpoint base or .bin path");
    an_cmd->add_option("--eps", an.eps, "perturbation radius");
    an_cmd->add_option("--lambda", an.lambda, "subselection ratio");
    an_cmd->add_option("--cs", an.cs, "shrink coefficient");
    an_cmd->add_option("--count", an.count, "sample count");
    an_cmd->add_option("--method", an.method, "loss-curve bound method: box | deeppoly");
    an_cmd->add_option("--eval-mode", an.eval_mode, "relu-states: point | region");
    an_cmd->add_option("--lambdas", an.lambdas, "comma list for loss-curve");
    an_cmd->add_option("--split", an.split, "train | test");

    GrowthOpts g;
    CLI::App* g_cmd = app.add_subcommand("growth-sim", "interval growth curves for centre distributions");
    g.cmd = g_cmd;
    add_common(g_cmd, g.common);
    g_cmd->add_option("--config", g.config_path, "JSON config or run manifest");
    g_cmd->add_option("--dist", g.dist, "gaussian:mu,sigma | uniform:a,b");
    g_cmd->add_option("--grid", g.grid, "lo:hi:step");
    g_cmd->add_option("--anchor", g.anchor, "tangent anchor point");
    g_cmd->add_option("--mc", g.mc_draws, "Monte-Carlo draws per grid point (0 = off)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors exit 1, help exits 0
    }

    try {
        if (*train_cmd) return run_train(t);
        if (*cert_cmd) return run_certify(c);
        if (*atk_cmd) return run_attack(a);
        if (*an_cmd) return run_analyze(an);
        if (*g_cmd) return run_growth(g);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
