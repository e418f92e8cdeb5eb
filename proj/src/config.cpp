#include "sabr/config.hpp"

#include <fstream>

#include "sabr/checkpoint.hpp"
#include "sabr/error.hpp"
#include "sabr/kernels.hpp"

namespace sabr {

using nlohmann::json;

json attack_to_json(const AttackConfig& cfg) {
    json j;
    j["steps"] = cfg.steps;
    j["alpha"] = cfg.alpha;
    json d = json::array();
    for (const auto& [k, f] : cfg.decay) d.push_back({{"after_step", k}, {"factor", f}});
    j["decay"] = d;
    j["restarts"] = cfg.restarts;
    j["loss"] = cfg.loss == AttackLoss::TargetedMargin ? "margin" : "ce";
    j["seed"] = cfg.seed;
    j["margin_target"] = cfg.margin_target;
    return j;
}

AttackConfig attack_from_json(const json& j) {
    AttackConfig cfg;
    cfg.steps = j.value("steps", cfg.steps);
    cfg.alpha = j.value("alpha", cfg.alpha);
    if (j.contains("decay")) {
        cfg.decay.clear();
        for (const auto& e : j["decay"]) cfg.decay.emplace_back(e.at("after_step").get<int>(), e.at("factor").get<double>());
    }
    cfg.restarts = j.value("restarts", cfg.restarts);
    if (j.contains("loss")) {
        const std::string l = j["loss"].get<std::string>();
        if (l == "margin")
            cfg.loss = AttackLoss::TargetedMargin;
        else if (l == "ce")
            cfg.loss = AttackLoss::CrossEntropy;
        else
            throw ConfigError("attack loss must be 'ce' or 'margin', got '" + l + "'");
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.margin_target = j.value("margin_target", cfg.margin_target);
    return cfg;
}

json train_to_json(const TrainConfig& cfg) {
    json j;
    j["arch"] = cfg.arch;
    j["epochs"] = cfg.epochs;
    j["eps"] = cfg.eps_final;
    j["warm_epochs"] = cfg.warm_epochs;
    j["ramp_epochs"] = cfg.ramp_epochs;
    j["lambda"] = cfg.lambda;
    j["cs"] = cfg.cs;
    j["lr"] = cfg.lr;
    j["decay_epoch_1"] = cfg.decay_epoch_1;
    j["decay_epoch_2"] = cfg.decay_epoch_2;
    j["decay_factor"] = cfg.decay_factor;
    j["l1"] = cfg.l1;
    j["grad_clip"] = cfg.grad_clip;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["workers"] = cfg.workers;
    j["attack"] = attack_to_json(cfg.attack);
    j["monitor_samples"] = cfg.monitor_samples;
    j["monitor_attack"] = attack_to_json(cfg.monitor_attack);
    return j;
}

TrainConfig train_from_json(const json& j) {
    TrainConfig cfg;
    cfg.arch = j.value("arch", cfg.arch);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.eps_final = j.value("eps", cfg.eps_final);
    cfg.warm_epochs = j.value("warm_epochs", cfg.warm_epochs);
    cfg.ramp_epochs = j.value("ramp_epochs", cfg.ramp_epochs);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.cs = j.value("cs", cfg.cs);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.decay_epoch_1 = j.value("decay_epoch_1", cfg.decay_epoch_1);
    cfg.decay_epoch_2 = j.value("decay_epoch_2", cfg.decay_epoch_2);
    cfg.decay_factor = j.value("decay_factor", cfg.decay_factor);
    cfg.l1 = j.value("l1", cfg.l1);
    cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.workers = j.value("workers", cfg.workers);
    if (j.contains("attack")) cfg.attack = attack_from_json(j["attack"]);
    cfg.monitor_samples = j.value("monitor_samples", cfg.monitor_samples);
    if (j.contains("monitor_attack")) cfg.monitor_attack = attack_from_json(j["monitor_attack"]);
    return cfg;
}

TrainConfig preset(const std::string& name) {
    TrainConfig cfg;
    cfg.attack = AttackConfig{8, 0.5, {{4, 0.1}, {7, 0.1}}, 1, AttackLoss::CrossEntropy, 0, -1};
    auto mnist_schedule = [&] {
        cfg.arch = "cnn7";
        cfg.epochs = 70;
        cfg.warm_epochs = 1;
        cfg.ramp_epochs = 20;
        cfg.decay_epoch_1 = 50;
        cfg.decay_epoch_2 = 60;
        cfg.batch_size = 256;
        cfg.lr = 5e-4;
    };
    auto desk_schedule = [&] {
        cfg.arch = "cnn-small";
        cfg.epochs = 20;
        cfg.warm_epochs = 1;
        cfg.ramp_epochs = 6;
        cfg.decay_epoch_1 = 14;
        cfg.decay_epoch_2 = 17;
        cfg.batch_size = 256;
        cfg.lr = 5e-4;
    };
    if (name == "mnist-sabr-0.1") {
        mnist_schedule();
        cfg.eps_final = 0.1;
        cfg.lambda = 0.4;
        cfg.l1 = 1e-5;
    } else if (name == "mnist-sabr-0.3") {
        mnist_schedule();
        cfg.eps_final = 0.3;
        cfg.lambda = 0.6;
        cfg.l1 = 1e-6;
    } else if (name == "mnist-ibp-0.1") {
        mnist_schedule();
        cfg.eps_final = 0.1;
        cfg.lambda = 1.0;
        cfg.l1 = 1e-5;
        cfg.attack.steps = 0;
    } else if (name == "mnist-ibp-0.3") {
        mnist_schedule();
        cfg.eps_final = 0.3;
        cfg.lambda = 1.0;
        cfg.l1 = 1e-6;
        cfg.attack.steps = 0;
    } else if (name == "desk-sabr-0.1") {
        desk_schedule();
        cfg.eps_final = 0.1;
        cfg.lambda = 0.4;
        cfg.l1 = 1e-5;
    } else if (name == "desk-ibp-0.1") {
        desk_schedule();
        cfg.eps_final = 0.1;
        cfg.lambda = 1.0;
        cfg.l1 = 1e-5;
        cfg.attack.steps = 0;
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return cfg;
}

std::vector<std::string> preset_names() {
    return {"mnist-sabr-0.1", "mnist-sabr-0.3", "mnist-ibp-0.1", "mnist-ibp-0.3", "desk-sabr-0.1", "desk-ibp-0.1"};
}

uint64_t config_hash(const json& j) {
    const std::string s = j.dump();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash_hex(const json& j) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash(j)));
    return buf;
}

json make_manifest(const std::string& command, const json& resolved_config) {
    json m;
    m["command"] = command;
    m["config"] = resolved_config;
    m["config_hash"] = config_hash_hex(resolved_config);
    m["tool_version"] = kToolVersion;
    m["checkpoint_format_version"] = kCheckpointFormatVersion;
    m["kernel_backend"] = kernels::backend_name(kernels::active_backend());
    return m;
}

void write_manifest(const std::string& path, const json& manifest) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out << manifest.dump(2) << "\n";
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

}  // namespace sabr
