// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "slotfill/protocol.hpp"

namespace slotfill {

// Resolved experiment description: paths, sampler/model/train settings and
// the protocol grid. Serializable, so a run directory records exactly what
// was executed. Every field can be overridden with dotted key=value pairs.
struct ExperimentConfig {
  std::string train_data;
  std::string eval_data;
  std::string schemas;
  std::string embeddings;
  std::string out_dir = "runs/default";

  SamplerConfig sampler;
  ModelConfig model;
  TrainConfig train;

  std::string protocol = "leave-one-intent-out";
  ProtocolGrid grid;
  int jobs = 1;

  Json to_json() const {
    return Json{
        {"data",
         {{"train", train_data},
          {"eval", eval_data},
          {"schemas", schemas},
          {"embeddings", embeddings},
          {"out_dir", out_dir}}},
        {"sampler",
         {{"negative_ratio", sampler.negative_ratio},
          {"num_examples", sampler.num_examples},
          {"replacement_rate_max", sampler.replacement_rate_max},
          {"seed", sampler.seed},
          {"negatives_for_empty_frames", sampler.negatives_for_empty_frames}}},
        {"model", model_config_to_json(model)},
        {"train",
         {{"total_steps", train.total_steps},
          {"batch_size", train.batch_size},
          {"lr", train.lr},
          {"beta1", train.beta1},
          {"beta2", train.beta2},
          {"eps", train.eps},
          {"checkpoint_every", train.checkpoint_every},
          {"eval_every", train.eval_every},
          {"seed", train.seed},
          {"select_best", train.select_best},
          {"stop_after", train.stop_after}}},
        {"protocol",
         {{"name", protocol},
          {"targets", grid.targets},
          {"n_target", grid.n_target},
          {"k", grid.k_values},
          {"folds", grid.folds}}},
        {"jobs", jobs}};
  }

  static ExperimentConfig from_json(const Json& j) {
    ExperimentConfig cfg;
    if (j.contains("data")) {
      const Json& d = j.at("data");
      cfg.train_data = d.value("train", "");
      cfg.eval_data = d.value("eval", "");
      cfg.schemas = d.value("schemas", "");
      cfg.embeddings = d.value("embeddings", "");
      cfg.out_dir = d.value("out_dir", cfg.out_dir);
    }
    if (j.contains("sampler")) {
      const Json& s = j.at("sampler");
      cfg.sampler.negative_ratio = s.value("negative_ratio", cfg.sampler.negative_ratio);
      cfg.sampler.num_examples = s.value("num_examples", cfg.sampler.num_examples);
      cfg.sampler.replacement_rate_max =
          s.value("replacement_rate_max", cfg.sampler.replacement_rate_max);
      cfg.sampler.seed = s.value("seed", cfg.sampler.seed);
      cfg.sampler.negatives_for_empty_frames =
          s.value("negatives_for_empty_frames", cfg.sampler.negatives_for_empty_frames);
    }
    if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) {
      const Json& t = j.at("train");
      cfg.train.total_steps = t.value("total_steps", cfg.train.total_steps);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.lr = t.value("lr", cfg.train.lr);
      cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
      cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
      cfg.train.eps = t.value("eps", cfg.train.eps);
      cfg.train.checkpoint_every = t.value("checkpoint_every", cfg.train.checkpoint_every);
      cfg.train.eval_every = t.value("eval_every", cfg.train.eval_every);
      cfg.train.seed = t.value("seed", cfg.train.seed);
      cfg.train.select_best = t.value("select_best", cfg.train.select_best);
      cfg.train.stop_after = t.value("stop_after", cfg.train.stop_after);
    }
    if (j.contains("protocol")) {
      const Json& p = j.at("protocol");
      cfg.protocol = p.value("name", cfg.protocol);
      if (p.contains("targets")) cfg.grid.targets = p.at("targets").get<std::vector<std::string>>();
      if (p.contains("n_target")) cfg.grid.n_target = p.at("n_target").get<std::vector<int>>();
      if (p.contains("k")) cfg.grid.k_values = p.at("k").get<std::vector<int>>();
      cfg.grid.folds = p.value("folds", cfg.grid.folds);
    }
    cfg.jobs = j.value("jobs", cfg.jobs);
    return cfg;
  }

  // Loads the config file and applies dotted-path overrides such as
  // "train.total_steps=100" or "model.use_examples=false".
  static ExperimentConfig load(const std::string& path,
                               const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::exception& e) {
      throw ConfigError("bad config '" + path + "': " + e.what());
    }
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ConfigError("override '" + kv + "' is not of the form key=value");
      const std::string key = kv.substr(0, eq);
      const std::string value = kv.substr(eq + 1);
      Json parsed;
      try {
        parsed = Json::parse(value);
      } catch (const Json::exception&) {
        parsed = value;  // bare strings stay strings
      }
      Json* node = &j;
      std::size_t start = 0;
      for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot - start);
        if (part.empty()) throw ConfigError("override '" + kv + "' has an empty path segment");
        if (dot == std::string::npos) {
          (*node)[part] = parsed;
          break;
        }
        node = &(*node)[part];
        start = dot + 1;
      }
    }
    return from_json(j);
  }
};

}  // namespace slotfill
