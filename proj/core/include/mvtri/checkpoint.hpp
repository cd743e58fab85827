#pragma once

#include <string>

#include "mvtri/nn.hpp"

namespace mvtri {

// Checkpoint file: magic, little-endian u64 header length, JSON header
// (config, step, schedule variant, tensor names + shapes), then the raw
// 32-bit little-endian float tensor data in header order.
struct CheckpointMeta {
  std::string config_json;  // full resolved run configuration
  int64_t step = 0;
  int schedule_timesteps = 1000;
  std::string schedule_variant = "cosine";
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ad::ParamStore& params);

// Loads tensor data into an existing parameter store; every name and shape
// is validated against it.
CheckpointMeta load_checkpoint(const std::string& path, ad::ParamStore& params);

// Header only; used to recover the run configuration before building the model.
CheckpointMeta peek_checkpoint(const std::string& path);

}  // namespace mvtri
