#pragma once

#include <string>

#include <json.hpp>

#include "sabr/attack.hpp"
#include "sabr/train.hpp"

namespace sabr {

inline constexpr const char* kToolVersion = "0.1.0";

nlohmann::json attack_to_json(const AttackConfig& cfg);
AttackConfig attack_from_json(const nlohmann::json& j);

nlohmann::json train_to_json(const TrainConfig& cfg);
TrainConfig train_from_json(const nlohmann::json& j);

// Named hyperparameter presets for the training CLI.
//   mnist-sabr-0.1 / mnist-sabr-0.3: cnn7, 70 epochs, lr decay at 50/60,
//     batch 256, 20-epoch ramp after 1 clean epoch, lambda 0.4 / 0.6 and
//     l1 1e-5 / 1e-6.
//   mnist-ibp-0.1 / mnist-ibp-0.3: same schedule with lambda = 1 and no
//     region-selection attack.
//   desk-sabr-0.1 / desk-ibp-0.1: cnn-small, 20 epochs, decay at 14/17,
//     6-epoch ramp; the desk-scale experiment pair.
TrainConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// FNV-1a over the canonical dump; identifies a resolved configuration.
uint64_t config_hash(const nlohmann::json& j);
std::string config_hash_hex(const nlohmann::json& j);

// Run manifest written next to every CLI output: resolved config plus
// seed/version/backend, sufficient to reproduce the run.
nlohmann::json make_manifest(const std::string& command, const nlohmann::json& resolved_config);
void write_manifest(const std::string& path, const nlohmann::json& manifest);
nlohmann::json load_json_file(const std::string& path);

}  // namespace sabr
