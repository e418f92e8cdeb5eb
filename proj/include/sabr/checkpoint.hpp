#pragma once

#include <string>

#include "sabr/network.hpp"

namespace sabr {

inline constexpr int kCheckpointFormatVersion = 1;

// Checkpoints are a pair of files derived from a base path:
//   <base>.manifest.json  — architecture manifest + parameter counts
//   <base>.bin            — little-endian float32 scalars, layer order,
//                           row-major within each tensor; per layer:
//                           Linear/Conv: weight, bias
//                           BatchNormAffine: gamma, beta, run_mean, run_var
// Accepts "<base>", "<base>.bin" or "<base>.manifest.json" and strips the
// suffix.
std::string checkpoint_base(const std::string& path);

std::string manifest_json(const Network<float>& net);

template <typename T>
void save_checkpoint(const Network<T>& net, const std::string& path);

template <typename T>
Network<T> load_checkpoint(const std::string& path);

}  // namespace sabr
