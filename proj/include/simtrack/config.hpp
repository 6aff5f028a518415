#pragma once

// JSON run configuration: model + training schedule + dataset parameters +
// master seed. Unknown keys are rejected so typos cannot silently fall back
// to defaults.

#include <set>
#include <string>

#include <json.hpp>

#include "simtrack/pipeline.hpp"

namespace simtrack {

struct RunConfig {
  uint64_t seed = 1;
  ModelConfig model;  // spec default toy config
  TrainSchedule train;
  DatasetParams data;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& scope) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown config key \"" + (scope.empty() ? "" : scope + ".") + it.key() +
                        "\"");
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& dst, const std::string& scope) {
  if (!obj.contains(key)) return;
  try {
    dst = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key \"" + scope + "." + key + "\" has the wrong type");
  }
}

inline json interaction_to_json(const InteractionSchedule& s) {
  double frac = s.enabled_fraction();
  if (frac == 1.0) return "all";
  if (frac == 0.0) return "none";
  json arr = json::array();
  for (bool g : s.gates) arr.push_back(g);
  return arr;
}

inline InteractionSchedule interaction_from_json(const json& j, int layers) {
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    if (s == "all") return InteractionSchedule::all(layers, true);
    if (s == "none") return InteractionSchedule::all(layers, false);
    throw ConfigError("model.interaction string must be \"all\" or \"none\", got \"" + s + "\"");
  }
  if (j.is_number()) {
    double frac = j.get<double>();
    if (frac < 0.0 || frac > 1.0) {
      throw ConfigError("model.interaction density must lie in [0,1]");
    }
    return InteractionSchedule::density(layers, frac);
  }
  if (j.is_array()) {
    InteractionSchedule s;
    for (const auto& v : j) {
      if (!v.is_boolean()) throw ConfigError("model.interaction array must hold booleans");
      s.gates.push_back(v.get<bool>());
    }
    return s;
  }
  throw ConfigError("model.interaction must be \"all\", \"none\", a density or a boolean array");
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& cfg) {
  return {
      {"seed", cfg.seed},
      {"model",
       {{"patch_size", cfg.model.patch},
        {"embed_dim", cfg.model.dim},
        {"layers", cfg.model.layers},
        {"heads", cfg.model.heads},
        {"ffn_dim", cfg.model.ffn_dim},
        {"search_size", cfg.model.search_size},
        {"exemplar_size", cfg.model.exemplar_size},
        {"foveal_size", cfg.model.foveal_size},
        {"decoder_layers", cfg.model.decoder_layers},
        {"interaction", detail::interaction_to_json(cfg.model.interaction)}}},
      {"train",
       {{"epochs", cfg.train.epochs},
        {"steps_per_epoch", cfg.train.steps_per_epoch},
        {"batch_size", cfg.train.batch_size},
        {"lr", cfg.train.lr},
        {"warmup_steps", cfg.train.warmup_steps},
        {"lr_min_frac", cfg.train.lr_min_frac},
        {"cosine_decay", cfg.train.cosine_decay},
        {"weight_decay", cfg.train.weight_decay},
        {"beta1", cfg.train.beta1},
        {"beta2", cfg.train.beta2},
        {"lambda_iou", cfg.train.lambda_iou},
        {"lambda_l1", cfg.train.lambda_l1},
        {"exemplar_factor", cfg.train.exemplar_factor},
        {"search_factor", cfg.train.search_factor},
        {"frame_gap_max", cfg.train.frame_gap_max},
        {"center_jitter", cfg.train.center_jitter},
        {"scale_jitter", cfg.train.scale_jitter},
        {"aspect_jitter", cfg.train.aspect_jitter},
        {"train_videos", cfg.train.n_train_videos},
        {"eval_videos", cfg.train.eval_videos},
        {"eval_seq_length", cfg.train.eval_seq_length}}},
      {"data",
       {{"frame_size", cfg.data.frame_size},
        {"seq_length", cfg.data.seq_length},
        {"target_min", cfg.data.target_min},
        {"target_max", cfg.data.target_max},
        {"velocity_sigma", cfg.data.velocity_sigma},
        {"scale_jitter_sigma", cfg.data.scale_jitter_sigma},
        {"distractors", cfg.data.distractors}}},
  };
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  RunConfig cfg;
  detail::reject_unknown_keys(j, {"seed", "model", "train", "data"}, "");
  read_field(j, "seed", cfg.seed, "");

  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::reject_unknown_keys(
        m,
        {"patch_size", "embed_dim", "layers", "heads", "ffn_dim", "search_size", "exemplar_size",
         "foveal_size", "decoder_layers", "interaction"},
        "model");
    read_field(m, "patch_size", cfg.model.patch, "model");
    read_field(m, "embed_dim", cfg.model.dim, "model");
    read_field(m, "layers", cfg.model.layers, "model");
    read_field(m, "heads", cfg.model.heads, "model");
    read_field(m, "ffn_dim", cfg.model.ffn_dim, "model");
    read_field(m, "search_size", cfg.model.search_size, "model");
    read_field(m, "exemplar_size", cfg.model.exemplar_size, "model");
    read_field(m, "foveal_size", cfg.model.foveal_size, "model");
    read_field(m, "decoder_layers", cfg.model.decoder_layers, "model");
    if (m.contains("interaction")) {
      cfg.model.interaction = detail::interaction_from_json(m.at("interaction"), cfg.model.layers);
    } else {
      cfg.model.interaction = InteractionSchedule::all(cfg.model.layers);
    }
  }
  if (!j.contains("model")) {
    cfg.model.interaction = InteractionSchedule::all(cfg.model.layers);
  }

  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown_keys(
        t,
        {"epochs", "steps_per_epoch", "batch_size", "lr", "warmup_steps", "lr_min_frac",
         "cosine_decay", "weight_decay", "beta1", "beta2",
         "lambda_iou", "lambda_l1", "exemplar_factor", "search_factor", "frame_gap_max",
         "center_jitter", "scale_jitter", "aspect_jitter", "train_videos", "eval_videos",
         "eval_seq_length"},
        "train");
    read_field(t, "epochs", cfg.train.epochs, "train");
    read_field(t, "steps_per_epoch", cfg.train.steps_per_epoch, "train");
    read_field(t, "batch_size", cfg.train.batch_size, "train");
    read_field(t, "lr", cfg.train.lr, "train");
    read_field(t, "warmup_steps", cfg.train.warmup_steps, "train");
    read_field(t, "lr_min_frac", cfg.train.lr_min_frac, "train");
    read_field(t, "cosine_decay", cfg.train.cosine_decay, "train");
    read_field(t, "weight_decay", cfg.train.weight_decay, "train");
    read_field(t, "beta1", cfg.train.beta1, "train");
    read_field(t, "beta2", cfg.train.beta2, "train");
    read_field(t, "lambda_iou", cfg.train.lambda_iou, "train");
    read_field(t, "lambda_l1", cfg.train.lambda_l1, "train");
    read_field(t, "exemplar_factor", cfg.train.exemplar_factor, "train");
    read_field(t, "search_factor", cfg.train.search_factor, "train");
    read_field(t, "frame_gap_max", cfg.train.frame_gap_max, "train");
    read_field(t, "center_jitter", cfg.train.center_jitter, "train");
    read_field(t, "scale_jitter", cfg.train.scale_jitter, "train");
    read_field(t, "aspect_jitter", cfg.train.aspect_jitter, "train");
    read_field(t, "train_videos", cfg.train.n_train_videos, "train");
    read_field(t, "eval_videos", cfg.train.eval_videos, "train");
    read_field(t, "eval_seq_length", cfg.train.eval_seq_length, "train");
  }

  if (j.contains("data")) {
    const auto& d = j.at("data");
    detail::reject_unknown_keys(d,
                                {"frame_size", "seq_length", "target_min", "target_max",
                                 "velocity_sigma", "scale_jitter_sigma", "distractors"},
                                "data");
    read_field(d, "frame_size", cfg.data.frame_size, "data");
    read_field(d, "seq_length", cfg.data.seq_length, "data");
    read_field(d, "target_min", cfg.data.target_min, "data");
    read_field(d, "target_max", cfg.data.target_max, "data");
    read_field(d, "velocity_sigma", cfg.data.velocity_sigma, "data");
    read_field(d, "scale_jitter_sigma", cfg.data.scale_jitter_sigma, "data");
    read_field(d, "distractors", cfg.data.distractors, "data");
  }

  cfg.model.seed = cfg.seed;
  cfg.model.validate();
  return cfg;
}

inline RunConfig parse_config(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // nlohmann reports line/column in the message
    throw ConfigError(origin + ": " + e.what());
  }
  return config_from_json(j);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.string());
}

}  // namespace simtrack
