// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "slotfill/checkpoint.hpp"
#include "slotfill/evaluator.hpp"
#include "slotfill/model.hpp"
#include "slotfill/nn/adam.hpp"
#include "slotfill/sampler.hpp"

namespace slotfill {

struct TrainConfig {
  long total_steps = 5000;  // the reference setup uses 150000
  int batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long checkpoint_every = 0;  // 0: only at the end (when run_dir is set)
  long eval_every = 0;        // 0: never
  std::uint64_t seed = 1;
  bool select_best = false;  // return the best-eval snapshot instead of the final step
  std::string run_dir;       // when set: checkpoints and metrics log live here
  long stop_after = 0;       // >0: pause this invocation at that step (resume later)

  void validate() const {
    if (total_steps < 0) throw ConfigError("train: total_steps must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (lr <= 0) throw ConfigError("train: lr must be positive");
  }
};

struct MetricsEntry {
  long step = 0;
  double loss = 0.0;
  double replacement_rate = 0.0;
  std::optional<double> eval_f1;
};

inline void append_metrics(const std::string& path, const MetricsEntry& e) {
  std::ofstream out(path, std::ios::app);
  Json j{{"step", e.step}, {"loss", e.loss}, {"replacement_rate", e.replacement_rate}};
  if (e.eval_f1) j["eval_f1"] = *e.eval_f1;
  out << j.dump() << "\n";
}

struct TrainResult {
  ModelParams<float> params;
  std::vector<MetricsEntry> log;
  long clamp_events = 0;
  double best_eval_f1 = -1.0;
};

// ---------------------------------------------------------------------------
// Deterministic instance stream: per epoch, every frame is expanded through
// the sampler, conditioning values are drawn per (seed, epoch, frame, slot),
// and the flattened instances are shuffled. Restartable by skipping.

class InstanceStream {
 public:
  struct Item {
    TaggedInstance instance;
    std::vector<TokenSeq> examples;
  };

  InstanceStream(const Dataset& data, const ValuePool& pool, const SamplerConfig& cfg,
                 int num_examples, std::uint64_t seed)
      : data_(data), pool_(pool), cfg_(cfg), k_(num_examples), seed_(seed) {}

  Item next() {
    while (pos_ >= buffer_.size()) refill();
    return buffer_[pos_++];
  }

  void skip(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      while (pos_ >= buffer_.size()) refill();
      ++pos_;
    }
  }

 private:
  void refill() {
    buffer_.clear();
    pos_ = 0;
    Rng base(seed_);
    for (std::size_t f = 0; f < data_.frames.size(); ++f) {
      const Frame& frame = data_.frames[f];
      auto reg_it = data_.registry.find(frame.intent);
      if (reg_it == data_.registry.end() || reg_it->second.empty())
        throw ConfigError("no registry for intent '" + frame.intent + "'");
      Rng rng = base.derived({Rng::hash("sample"), epoch_, f});
      for (auto& inst : sample_instances(frame, reg_it->second, cfg_, rng)) {
        inst.frame_index = f;
        Item item;
        if (k_ > 0) {
          Rng ex_rng = base.derived({Rng::hash("examples"), epoch_, f,
                                     Rng::hash(inst.schema.name)});
          try {
            item.examples = select_examples(pool_, frame.intent, inst.schema.name, k_, ex_rng);
          } catch (const EmptyPool&) {
            if (warned_.insert(frame.intent + "/" + inst.schema.name).second)
              log_warn("skipping instances of (" + frame.intent + ", " + inst.schema.name +
                       "): empty value pool");
            continue;
          }
        }
        item.instance = std::move(inst);
        buffer_.push_back(std::move(item));
      }
    }
    if (buffer_.empty())
      throw ConfigError("training data yields no instances (empty pools or frames)");
    Rng shuffle_rng = base.derived({Rng::hash("epoch-shuffle"), epoch_});
    shuffle_rng.shuffle(buffer_);
    ++epoch_;
  }

  const Dataset& data_;
  const ValuePool& pool_;
  SamplerConfig cfg_;
  int k_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::vector<Item> buffer_;
  std::size_t pos_ = 0;
  std::set<std::string> warned_;
};

// ---------------------------------------------------------------------------
// Splits: train keeps every frame of other intents plus the first n_target
// target frames under a seeded shuffle; eval gets the remaining target
// frames. Both sides keep the registry.

inline std::pair<Dataset, Dataset> make_split(const Dataset& dataset,
                                              const std::string& target_intent, int n_target,
                                              std::uint64_t seed) {
  auto by_intent = dataset.frames_by_intent();
  auto it = by_intent.find(target_intent);
  if (it == by_intent.end())
    throw ConfigError("make_split: unknown intent '" + target_intent + "'");
  if (n_target < 0 || static_cast<std::size_t>(n_target) > it->second.size())
    throw ConfigError("make_split: n_target out of range for '" + target_intent + "'");

  std::vector<std::size_t> target = it->second;
  Rng rng = Rng(seed).derived({Rng::hash("split"), Rng::hash(target_intent)});
  rng.shuffle(target);

  std::set<std::size_t> taken(target.begin(), target.begin() + n_target);
  Dataset train, eval;
  train.registry = dataset.registry;
  eval.registry = dataset.registry;
  train.split = "train";
  eval.split = "eval";
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    if (dataset.frames[i].intent != target_intent)
      train.frames.push_back(dataset.frames[i]);
    else if (taken.count(i))
      train.frames.push_back(dataset.frames[i]);
    else
      eval.frames.push_back(dataset.frames[i]);
  }
  if (eval.frames.empty())
    throw ConfigError("make_split: no evaluation frames left for '" + target_intent + "'");
  return {std::move(train), std::move(eval)};
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> collect_vocabulary(const Dataset& train_data,
                                                   const Dataset& eval_data,
                                                   const ValuePool& pool,
                                                   const ValuePool* eval_pool) {
  std::set<std::string> words;
  for (const auto& f : train_data.frames)
    for (const auto& tok : f.tokens) words.insert(tok);
  auto add_registry = [&](const SchemaRegistry& reg, bool with_examples) {
    for (const auto& [intent, slots] : reg) {
      for (const auto& s : slots) {
        for (const auto& tok : s.description) words.insert(tok);
        if (with_examples)
          for (const auto& v : s.examples)
            for (const auto& tok : v) words.insert(tok);
      }
    }
  };
  add_registry(train_data.registry, true);
  add_registry(eval_data.registry, false);  // descriptions are schema metadata
  auto add_pool = [&](const ValuePool& p) {
    for (const auto& [key, vals] : p.values)
      for (const auto& v : vals)
        for (const auto& tok : v) words.insert(tok);
  };
  add_pool(pool);
  if (eval_pool) add_pool(*eval_pool);
  return {words.begin(), words.end()};
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return Rng::mix(Rng::mix(seed ^ a) ^ b);
}

}  // namespace detail

// Runs the training loop: total_steps batches of sampled instances with the
// linear replacement ramp, token-averaged cross-entropy, and ADAM updates.
// The conditioning vocabulary covers the training frames, schema metadata and
// the value pools; with no embedding file a seeded random fixed table stands
// in for pretrained vectors.
inline TrainResult train(const Dataset& train_data, const Dataset& eval_data,
                         const SamplerConfig& sampler_cfg, const ModelConfig& model_cfg,
                         const TrainConfig& train_cfg, const std::string& embedding_path = "",
                         const ValuePool* eval_pool = nullptr, bool resume = false) {
  sampler_cfg.validate();
  model_cfg.validate();
  train_cfg.validate();
  if (train_data.frames.empty()) throw ConfigError("train: empty training data");

  ValuePool pool = build_value_pool(train_data, eval_data);

  nn::WordTable<float> table;
  if (!embedding_path.empty() && std::filesystem::exists(embedding_path)) {
    table = load_embedding_file<float>(embedding_path);
    if (table.dim() != model_cfg.d_w)
      throw ConfigError("embedding file dimension " + std::to_string(table.dim()) +
                        " does not match configured d_w");
  } else {
    if (!embedding_path.empty())
      log_warn("embedding file '" + embedding_path + "' not found; using a seeded random table");
    auto vocab = detail::collect_vocabulary(train_data, eval_data, pool, eval_pool);
    table = nn::random_word_table<float>(vocab, model_cfg.d_w, train_cfg.seed);
  }

  ModelParams<float> params = make_model(model_cfg, std::move(table), train_cfg.seed);
  ModelParams<float> grads = zeros_like(params);
  nn::AdamState<float> adam;
  nn::AdamConfig adam_cfg{train_cfg.lr, train_cfg.beta1, train_cfg.beta2, train_cfg.eps};

  long start_step = 0;
  double best_f1 = -1.0;
  const std::string ckpt_path =
      train_cfg.run_dir.empty() ? "" : train_cfg.run_dir + "/checkpoint.ckpt";
  const std::string best_path = train_cfg.run_dir.empty() ? "" : train_cfg.run_dir + "/best.ckpt";
  const std::string metrics_path =
      train_cfg.run_dir.empty() ? "" : train_cfg.run_dir + "/metrics.jsonl";

  if (resume) {
    if (ckpt_path.empty() || !std::filesystem::exists(ckpt_path))
      throw ConfigError("resume requested but no checkpoint found in run_dir");
    Checkpoint ck = load_checkpoint(ckpt_path);
    params = std::move(ck.params);
    start_step = ck.extra.value("step", 0L);
    best_f1 = ck.extra.value("best_eval_f1", -1.0);
    adam.step = ck.extra.value("adam_step", 0L);
    for (auto& [name, data] : ck.extra_arrays) {
      if (name.rfind("adam.m:", 0) == 0)
        adam.m[name.substr(7)] = std::move(data);
      else if (name.rfind("adam.v:", 0) == 0)
        adam.v[name.substr(7)] = std::move(data);
    }
    grads = zeros_like(params);
  }

  if (!train_cfg.run_dir.empty()) std::filesystem::create_directories(train_cfg.run_dir);

  const int k = model_cfg.use_examples ? sampler_cfg.num_examples : 0;
  if (model_cfg.use_examples && sampler_cfg.num_examples < 1)
    throw ConfigError("train: example conditioning enabled but num_examples < 1");
  InstanceStream stream(train_data, pool, sampler_cfg, k, sampler_cfg.seed);
  if (start_step > 0)
    stream.skip(static_cast<std::size_t>(start_step) *
                static_cast<std::size_t>(train_cfg.batch_size));

  TrainResult result{std::move(params), {}, 0, best_f1};
  std::optional<ModelParams<float>> best_params;

  auto save_run_state = [&](long step) {
    if (ckpt_path.empty()) return;
    std::map<std::string, std::vector<float>> extra_arrays;
    for (const auto& [name, data] : adam.m) extra_arrays["adam.m:" + name] = data;
    for (const auto& [name, data] : adam.v) extra_arrays["adam.v:" + name] = data;
    Json extra{{"step", step}, {"adam_step", adam.step}, {"best_eval_f1", result.best_eval_f1}};
    save_checkpoint(ckpt_path, result.params, extra, extra_arrays);
  };

  const long horizon = std::max<long>(1, train_cfg.total_steps - 1);
  const long stop_step = train_cfg.stop_after > 0
                             ? std::min(train_cfg.stop_after, train_cfg.total_steps)
                             : train_cfg.total_steps;
  long last_step = start_step;
  for (long step = start_step; step < stop_step; ++step) {
    const double rate = replacement_rate(std::min(step, horizon), horizon, sampler_cfg);
    double batch_loss = 0.0;
    for (int b = 0; b < train_cfg.batch_size; ++b) {
      InstanceStream::Item item = stream.next();
      Rng rep_rng = Rng(sampler_cfg.seed)
                        .derived({Rng::hash("replace"), static_cast<std::uint64_t>(step),
                                  static_cast<std::uint64_t>(b)});
      auto [inst, examples] = apply_replacement(item.instance, item.examples, rate, rep_rng);
      Rng drop_rng = Rng(train_cfg.seed)
                         .derived({Rng::hash("dropout"), static_cast<std::uint64_t>(step),
                                   static_cast<std::uint64_t>(b)});
      ForwardCache<float> cache;
      forward(result.params, inst.tokens, inst.schema, examples, &cache,
              model_cfg.dropout > 0 ? &drop_rng : nullptr);
      batch_loss += loss(cache.probs, inst.tags, &result.clamp_events);
      backward(result.params, cache, inst.tags, grads);
    }
    batch_loss /= train_cfg.batch_size;
    const float scale = 1.0f / static_cast<float>(train_cfg.batch_size);
    for (auto& ref : grads.trainable_refs())
      for (Eigen::Index i = 0; i < ref.size(); ++i) ref.data[i] *= scale;

    try {
      adam_step(result.params.trainable_refs(), grads.trainable_refs(), adam, adam_cfg);
    } catch (const NonFiniteGradient& e) {
      throw NonFiniteGradient(std::string(e.what()) + " at step " + std::to_string(step + 1));
    }
    zero_grads(grads);

    MetricsEntry entry{step + 1, batch_loss, rate, std::nullopt};
    if (train_cfg.eval_every > 0 && (step + 1) % train_cfg.eval_every == 0 &&
        !eval_data.frames.empty()) {
      EvalReport report = evaluate(result.params, eval_data, eval_pool ? *eval_pool : pool, k,
                                   train_cfg.seed);
      entry.eval_f1 = report.micro.f1();
      if (*entry.eval_f1 > result.best_eval_f1) {
        result.best_eval_f1 = *entry.eval_f1;
        if (train_cfg.select_best) best_params = result.params;
        if (!best_path.empty()) {
          Json extra{{"step", step + 1}, {"eval_f1", *entry.eval_f1}};
          save_checkpoint(best_path, result.params, extra);
        }
      }
    }
    result.log.push_back(entry);
    if (!metrics_path.empty()) append_metrics(metrics_path, entry);
    if (train_cfg.checkpoint_every > 0 && (step + 1) % train_cfg.checkpoint_every == 0)
      save_run_state(step + 1);
    last_step = step + 1;
  }

  save_run_state(last_step);
  if (train_cfg.select_best && best_params) result.params = std::move(*best_params);
  return result;
}

}  // namespace slotfill
