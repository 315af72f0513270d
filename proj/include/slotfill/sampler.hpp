// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "slotfill/corpus.hpp"
#include "slotfill/errors.hpp"
#include "slotfill/rng.hpp"

namespace slotfill {

struct SamplerConfig {
  int negative_ratio = 3;
  int num_examples = 2;          // K; 2 suits zero-shot, 10 otherwise
  double replacement_rate_max = 0.3;
  std::uint64_t seed = 0;
  // Negatives are drawn from the same intent's schema; frames without any
  // annotation still contribute negatives unless this is disabled.
  bool negatives_for_empty_frames = true;

  void validate() const {
    if (negative_ratio < 0) throw ConfigError("negative_ratio must be >= 0");
    if (num_examples < 0) throw ConfigError("num_examples must be >= 0");
    if (replacement_rate_max < 0.0 || replacement_rate_max > 1.0)
      throw ConfigError("replacement_rate_max must be in [0,1]");
  }
};

// Per (intent, slot) conditioning values harvested from training frames,
// with every value that appears in the evaluation set removed.
struct ValuePool {
  // (intent, slot) -> distinct values, sorted for determinism.
  std::map<std::pair<std::string, std::string>, std::vector<TokenSeq>> values;
  // slot -> eval gold values (the exclusion set, kept for leakage checks).
  std::map<std::string, std::set<TokenSeq>> excluded;

  const std::vector<TokenSeq>* find(const std::string& intent, const std::string& slot) const {
    auto it = values.find({intent, slot});
    return it == values.end() ? nullptr : &it->second;
  }

  // Merges registry-declared example values (used where conditioning values
  // are specified along with the slots rather than harvested). The eval
  // exclusion set still applies.
  void add_registry_examples(const SchemaRegistry& registry) {
    for (const auto& [intent, slots] : registry) {
      for (const auto& schema : slots) {
        if (schema.examples.empty()) continue;
        auto& pool = values[{intent, schema.name}];
        std::set<TokenSeq> seen(pool.begin(), pool.end());
        auto ex = excluded.find(schema.name);
        for (const auto& v : schema.examples) {
          if (ex != excluded.end() && ex->second.count(v)) continue;
          if (seen.insert(v).second) pool.push_back(v);
        }
        std::sort(pool.begin(), pool.end());
      }
    }
  }
};

inline TokenSeq span_value(const Frame& frame, const SlotSpan& span) {
  return TokenSeq(frame.tokens.begin() + span.start, frame.tokens.begin() + span.end);
}

// pool(intent, slot) = distinct train-span values minus every value the slot
// takes anywhere in the eval set. Slots whose pool comes out empty are
// permitted and reported via a warning.
inline ValuePool build_value_pool(const Dataset& train, const Dataset& eval) {
  ValuePool pool;
  for (const auto& f : eval.frames)
    for (const auto& span : f.annotations) pool.excluded[span.slot].insert(span_value(f, span));

  std::map<std::pair<std::string, std::string>, std::set<TokenSeq>> distinct;
  for (const auto& f : train.frames)
    for (const auto& span : f.annotations)
      distinct[{f.intent, span.slot}].insert(span_value(f, span));

  for (auto& [key, vals] : distinct) {
    auto ex = pool.excluded.find(key.second);
    std::vector<TokenSeq> kept;
    for (const auto& v : vals)
      if (ex == pool.excluded.end() || !ex->second.count(v)) kept.push_back(v);
    if (kept.empty())
      log_warn("value pool for (" + key.first + ", " + key.second + ") is empty");
    pool.values[key] = std::move(kept);  // std::set iteration is already sorted
  }
  return pool;
}

// One positive instance per annotated slot plus negative_ratio negatives per
// positive, drawn without replacement from the intent's slots absent from the
// frame. Deterministic given the rng state.
inline std::vector<TaggedInstance> sample_instances(const Frame& frame,
                                                    const std::vector<SlotSchema>& registry,
                                                    const SamplerConfig& cfg, Rng& rng) {
  if (registry.empty()) throw ConfigError("sample_instances: empty registry for intent");
  std::set<std::string> annotated;
  for (const auto& span : frame.annotations) annotated.insert(span.slot);

  std::vector<TaggedInstance> out;
  for (const auto& schema : registry)
    if (annotated.count(schema.name)) out.push_back(frame_to_instance(frame, schema));

  std::vector<const SlotSchema*> absent;
  for (const auto& schema : registry)
    if (!annotated.count(schema.name)) absent.push_back(&schema);

  std::size_t want = cfg.negative_ratio * out.size();
  if (out.empty() && cfg.negatives_for_empty_frames) want = cfg.negative_ratio;
  want = std::min(want, absent.size());
  for (std::size_t idx : rng.sample_indices(absent.size(), want))
    out.push_back(frame_to_instance(frame, *absent[idx]));
  return out;
}

// Uniform sample of K conditioning values without replacement; when the pool
// is smaller than K the remainder is drawn with replacement.
inline std::vector<TokenSeq> select_examples(const ValuePool& pool, const std::string& intent,
                                             const std::string& slot, int k, Rng& rng) {
  if (k == 0) return {};
  const std::vector<TokenSeq>* vals = pool.find(intent, slot);
  if (!vals || vals->empty())
    throw EmptyPool("no conditioning values for slot '" + slot + "' (intent '" + intent + "')");
  std::vector<TokenSeq> out;
  out.reserve(k);
  if (static_cast<std::size_t>(k) <= vals->size()) {
    for (std::size_t idx : rng.sample_indices(vals->size(), k)) out.push_back((*vals)[idx]);
  } else {
    out = *vals;
    while (out.size() < static_cast<std::size_t>(k))
      out.push_back((*vals)[rng.below(vals->size())]);
  }
  return out;
}

// Linear ramp from 0 to replacement_rate_max over the training horizon.
inline double replacement_rate(long step, long total_steps, const SamplerConfig& cfg) {
  if (total_steps < 1) throw ConfigError("replacement_rate: total_steps must be >= 1");
  if (step < 0) throw ConfigError("replacement_rate: negative step");
  if (step > total_steps) {
    log_warn("replacement_rate: step beyond total_steps, clamping to max");
    return cfg.replacement_rate_max;
  }
  return cfg.replacement_rate_max * static_cast<double>(step) / static_cast<double>(total_steps);
}

// Independently replaces each token inside a gold span and each example value
// token with the reserved token, with the given probability. Tags and tokens
// outside spans are untouched.
inline std::pair<TaggedInstance, std::vector<TokenSeq>> apply_replacement(
    const TaggedInstance& instance, const std::vector<TokenSeq>& examples, double rate,
    Rng& rng) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("apply_replacement: rate must be in [0,1]");
  TaggedInstance inst = instance;
  std::vector<TokenSeq> ex = examples;
  if (rate > 0.0) {
    for (std::size_t i = 0; i < inst.tokens.size(); ++i)
      if (inst.tags[i] != Tag::O && rng.next_real() < rate) inst.tokens[i] = kValueToken;
    for (auto& value : ex)
      for (auto& tok : value)
        if (rng.next_real() < rate) tok = kValueToken;
  }
  return {std::move(inst), std::move(ex)};
}

}  // namespace slotfill
