#pragma once

#include <map>
#include <string>

#include "mvtri/denoiser.hpp"
#include "mvtri/training.hpp"

namespace mvtri {

// Union of the model, training, schedule and run parameters. Every
// checkpoint embeds the resolved config; loading against a conflicting
// model config is an error.
struct RunConfig {
  std::string preset = "micro";
  DenoiserConfig denoiser;
  TrainConfig train;
  int schedule_timesteps = 1000;
  std::string schedule_variant = "cosine";
  uint64_t seed = 0;

  std::string to_json() const;
  static RunConfig from_json(const std::string& json_text);

  // the fields that determine parameter shapes and meanings
  std::string model_fingerprint() const;
};

// named presets: "micro" (desk scale) and "small-paper"
RunConfig preset_config(const std::string& name);

// `key = value` lines, '#' comments. Keys use dotted paths
// (denoiser.patch_size, train.learning_rate, schedule.timesteps, seed,
// preset). A preset key is applied first, then the remaining entries.
RunConfig load_config_file(const std::string& path);

// apply one dotted key to a config; unknown keys throw
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace mvtri
