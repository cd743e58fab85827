#include "mvtri/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace mvtri {

using nlohmann::json;

namespace {

json denoiser_to_json(const DenoiserConfig& d) {
  return {{"image_resolution", d.image_resolution},
          {"patch_size", d.patch_size},
          {"encoder_layers", d.encoder_layers},
          {"encoder_width", d.encoder_width},
          {"triplane_token_res", d.triplane_token_res},
          {"decoder_width", d.decoder_width},
          {"decoder_layers", d.decoder_layers},
          {"triplane_upsample", d.triplane_upsample},
          {"triplane_channels", d.triplane_channels},
          {"num_views", d.num_views},
          {"mode", to_string(d.mode)},
          {"camera_cond", to_string(d.camera_cond)},
          {"head_dim", d.head_dim},
          {"nerf_mlp_layers", d.nerf_mlp_layers},
          {"nerf_mlp_width", d.nerf_mlp_width},
          {"render_steps", d.render_steps}};
}

DenoiserConfig denoiser_from_json(const json& j) {
  DenoiserConfig d;
  d.image_resolution = j.at("image_resolution").get<int>();
  d.patch_size = j.at("patch_size").get<int>();
  d.encoder_layers = j.at("encoder_layers").get<int>();
  d.encoder_width = j.at("encoder_width").get<int>();
  d.triplane_token_res = j.at("triplane_token_res").get<int>();
  d.decoder_width = j.at("decoder_width").get<int>();
  d.decoder_layers = j.at("decoder_layers").get<int>();
  d.triplane_upsample = j.at("triplane_upsample").get<int>();
  d.triplane_channels = j.at("triplane_channels").get<int>();
  d.num_views = j.at("num_views").get<int>();
  d.mode = condition_mode_from_string(j.at("mode").get<std::string>());
  d.camera_cond = camera_conditioning_from_string(j.at("camera_cond").get<std::string>());
  d.head_dim = j.at("head_dim").get<int>();
  d.nerf_mlp_layers = j.at("nerf_mlp_layers").get<int>();
  d.nerf_mlp_width = j.at("nerf_mlp_width").get<int>();
  d.render_steps = j.at("render_steps").get<int>();
  return d;
}

json train_to_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"warmup_steps", t.warmup_steps},
          {"total_steps", t.total_steps},
          {"weight_decay", t.weight_decay},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"batch_size", t.batch_size},
          {"num_input_views", t.num_input_views},
          {"num_novel_views", t.num_novel_views},
          {"render_patch", t.render_patch},
          {"lambda_l2", t.lambda_l2},
          {"lambda_perceptual", t.lambda_perceptual},
          {"cond_drop_prob", t.cond_drop_prob},
          {"grad_clip", t.grad_clip},
          {"checkpoint_every", t.checkpoint_every}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.learning_rate = j.at("learning_rate").get<double>();
  t.warmup_steps = j.at("warmup_steps").get<int>();
  t.total_steps = j.at("total_steps").get<int>();
  t.weight_decay = j.at("weight_decay").get<double>();
  t.beta1 = j.at("beta1").get<double>();
  t.beta2 = j.at("beta2").get<double>();
  t.batch_size = j.at("batch_size").get<int>();
  t.num_input_views = j.at("num_input_views").get<int>();
  t.num_novel_views = j.at("num_novel_views").get<int>();
  t.render_patch = j.at("render_patch").get<int>();
  t.lambda_l2 = j.at("lambda_l2").get<double>();
  t.lambda_perceptual = j.at("lambda_perceptual").get<double>();
  t.cond_drop_prob = j.at("cond_drop_prob").get<double>();
  t.grad_clip = j.at("grad_clip").get<double>();
  t.checkpoint_every = j.at("checkpoint_every").get<int>();
  return t;
}

}  // namespace

std::string RunConfig::to_json() const {
  json j;
  j["preset"] = preset;
  j["denoiser"] = denoiser_to_json(denoiser);
  j["train"] = train_to_json(train);
  j["schedule"] = {{"timesteps", schedule_timesteps}, {"variant", schedule_variant}};
  j["seed"] = seed;
  return j.dump();
}

RunConfig RunConfig::from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  RunConfig cfg;
  cfg.preset = j.at("preset").get<std::string>();
  cfg.denoiser = denoiser_from_json(j.at("denoiser"));
  cfg.train = train_from_json(j.at("train"));
  cfg.schedule_timesteps = j.at("schedule").at("timesteps").get<int>();
  cfg.schedule_variant = j.at("schedule").at("variant").get<std::string>();
  cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

std::string RunConfig::model_fingerprint() const {
  json j;
  j["denoiser"] = denoiser_to_json(denoiser);
  j["schedule"] = {{"timesteps", schedule_timesteps}, {"variant", schedule_variant}};
  return j.dump();
}

RunConfig preset_config(const std::string& name) {
  RunConfig cfg;
  cfg.preset = name;
  if (name == "micro") {
    // desk-scale defaults: the struct defaults are the micro preset
    return cfg;
  }
  if (name == "small-paper") {
    cfg.denoiser.image_resolution = 256;
    cfg.denoiser.patch_size = 16;
    cfg.denoiser.encoder_layers = 12;
    cfg.denoiser.encoder_width = 768;
    cfg.denoiser.triplane_token_res = 32;
    cfg.denoiser.decoder_width = 768;
    cfg.denoiser.decoder_layers = 24;
    cfg.denoiser.triplane_upsample = 1;
    cfg.denoiser.triplane_channels = 32;
    cfg.denoiser.num_views = 4;
    cfg.denoiser.nerf_mlp_layers = 10;
    cfg.denoiser.nerf_mlp_width = 64;
    cfg.denoiser.render_steps = 48;
    cfg.train.learning_rate = 4e-4;
    cfg.train.warmup_steps = 3000;
    cfg.train.total_steps = 200000;
    cfg.train.weight_decay = 0.05;
    cfg.train.beta1 = 0.9;
    cfg.train.beta2 = 0.95;
    cfg.train.batch_size = 8;
    cfg.train.num_input_views = 4;
    cfg.train.num_novel_views = 2;
    cfg.train.render_patch = 64;
    cfg.train.lambda_l2 = 1.0;
    cfg.train.lambda_perceptual = 2.0;
    cfg.train.checkpoint_every = 5000;
    cfg.schedule_timesteps = 1000;
    return cfg;
  }
  throw std::invalid_argument("unknown preset: " + name + " (expected micro or small-paper)");
}

namespace {

int to_int(const std::string& v) { return std::stoi(v); }
double to_double(const std::string& v) { return std::stod(v); }

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  DenoiserConfig& d = cfg.denoiser;
  TrainConfig& t = cfg.train;
  if (key == "preset") {
    cfg = preset_config(value);
  } else if (key == "seed") {
    cfg.seed = std::stoull(value);
  } else if (key == "schedule.timesteps") {
    cfg.schedule_timesteps = to_int(value);
  } else if (key == "schedule.variant") {
    if (value != "cosine") throw std::invalid_argument("schedule.variant: only cosine");
    cfg.schedule_variant = value;
  } else if (key == "denoiser.image_resolution") {
    d.image_resolution = to_int(value);
  } else if (key == "denoiser.patch_size") {
    d.patch_size = to_int(value);
  } else if (key == "denoiser.encoder_layers") {
    d.encoder_layers = to_int(value);
  } else if (key == "denoiser.encoder_width") {
    d.encoder_width = to_int(value);
  } else if (key == "denoiser.triplane_token_res") {
    d.triplane_token_res = to_int(value);
  } else if (key == "denoiser.decoder_width") {
    d.decoder_width = to_int(value);
  } else if (key == "denoiser.decoder_layers") {
    d.decoder_layers = to_int(value);
  } else if (key == "denoiser.triplane_upsample") {
    d.triplane_upsample = to_int(value);
  } else if (key == "denoiser.triplane_channels") {
    d.triplane_channels = to_int(value);
  } else if (key == "denoiser.num_views") {
    d.num_views = to_int(value);
  } else if (key == "denoiser.mode") {
    d.mode = condition_mode_from_string(value);
  } else if (key == "denoiser.camera_cond") {
    d.camera_cond = camera_conditioning_from_string(value);
  } else if (key == "denoiser.head_dim") {
    d.head_dim = to_int(value);
  } else if (key == "denoiser.nerf_mlp_layers") {
    d.nerf_mlp_layers = to_int(value);
  } else if (key == "denoiser.nerf_mlp_width") {
    d.nerf_mlp_width = to_int(value);
  } else if (key == "denoiser.render_steps") {
    d.render_steps = to_int(value);
  } else if (key == "train.learning_rate") {
    t.learning_rate = to_double(value);
  } else if (key == "train.warmup_steps") {
    t.warmup_steps = to_int(value);
  } else if (key == "train.total_steps") {
    t.total_steps = to_int(value);
  } else if (key == "train.weight_decay") {
    t.weight_decay = to_double(value);
  } else if (key == "train.beta1") {
    t.beta1 = to_double(value);
  } else if (key == "train.beta2") {
    t.beta2 = to_double(value);
  } else if (key == "train.batch_size") {
    t.batch_size = to_int(value);
  } else if (key == "train.num_input_views") {
    t.num_input_views = to_int(value);
  } else if (key == "train.num_novel_views") {
    t.num_novel_views = to_int(value);
  } else if (key == "train.render_patch") {
    t.render_patch = to_int(value);
  } else if (key == "train.lambda_l2") {
    t.lambda_l2 = to_double(value);
  } else if (key == "train.lambda_perceptual") {
    t.lambda_perceptual = to_double(value);
  } else if (key == "train.cond_drop_prob") {
    t.cond_drop_prob = to_double(value);
  } else if (key == "train.grad_clip") {
    t.grad_clip = to_double(value);
  } else if (key == "train.checkpoint_every") {
    t.checkpoint_every = to_int(value);
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);

  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (!blank)
        throw std::runtime_error("config: line " + std::to_string(line_no) +
                                 ": expected key = value");
      continue;
    }
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  // the preset is the base layer; explicit entries override it in file order
  RunConfig cfg;
  for (const auto& [k, v] : entries)
    if (k == "preset") cfg = preset_config(v);
  for (const auto& [k, v] : entries)
    if (k != "preset") apply_config_entry(cfg, k, v);
  return cfg;
}

}  // namespace mvtri
