// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "slotfill/model.hpp"
#include "slotfill/sampler.hpp"

namespace slotfill {

struct SlotCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;

  double precision() const { return tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0; }
  double recall() const { return tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
};

struct EvalReport {
  std::map<std::string, SlotCounts> per_slot;
  SlotCounts micro;  // from summed counts, not per-slot averages
  bool partial = false;
  std::vector<std::string> skipped_slots;
  Json metadata = Json::object();

  Json to_json() const {
    Json slots = Json::object();
    for (const auto& [name, c] : per_slot)
      slots[name] = {{"tp", c.tp},       {"fp", c.fp},         {"fn", c.fn},
                     {"precision", c.precision()}, {"recall", c.recall()}, {"f1", c.f1()}};
    Json j{{"per_slot", slots},
           {"micro", {{"tp", micro.tp}, {"fp", micro.fp}, {"fn", micro.fn},
                      {"precision", micro.precision()}, {"recall", micro.recall()},
                      {"f1", micro.f1()}}},
           {"partial", partial},
           {"metadata", metadata}};
    if (!skipped_slots.empty()) j["skipped_slots"] = skipped_slots;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Exact-span slot F1 (CoNLL convention): a predicted (slot, start, end) is a
// true positive iff the identical triple exists in gold for the same frame.
// Gold and predicted spans are aligned by frame index.

inline EvalReport slot_f1(const std::vector<std::vector<SlotSpan>>& gold,
                          const std::vector<std::vector<SlotSpan>>& predicted) {
  if (gold.size() != predicted.size())
    throw ShapeError("slot_f1: gold and predicted cover different frame sets");
  EvalReport report;
  for (std::size_t f = 0; f < gold.size(); ++f) {
    std::set<SlotSpan> gold_set(gold[f].begin(), gold[f].end());
    std::set<SlotSpan> pred_set(predicted[f].begin(), predicted[f].end());
    for (const auto& span : pred_set) {
      if (gold_set.count(span))
        ++report.per_slot[span.slot].tp;
      else
        ++report.per_slot[span.slot].fp;
    }
    for (const auto& span : gold_set)
      if (!pred_set.count(span)) ++report.per_slot[span.slot].fn;
  }
  for (const auto& [name, c] : report.per_slot) {
    report.micro.tp += c.tp;
    report.micro.fp += c.fp;
    report.micro.fn += c.fn;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Model evaluation: every frame is scored against every slot of its intent's
// registry (so spurious predictions for absent slots count as false
// positives). Conditioning values are fixed per (slot, seed). Slots whose
// pool is empty are skipped and reported, flagging the result partial.

template <typename S>
inline EvalReport evaluate(const ModelParams<S>& params, const Dataset& eval_data,
                           const ValuePool& pool, int num_examples, std::uint64_t seed) {
  std::vector<std::vector<SlotSpan>> gold(eval_data.frames.size());
  std::vector<std::vector<SlotSpan>> pred(eval_data.frames.size());
  std::set<std::string> skipped;
  std::map<std::pair<std::string, std::string>, std::vector<TokenSeq>> chosen;

  for (std::size_t f = 0; f < eval_data.frames.size(); ++f) {
    const Frame& frame = eval_data.frames[f];
    auto reg_it = eval_data.registry.find(frame.intent);
    if (reg_it == eval_data.registry.end())
      throw ConfigError("evaluate: no registry for intent '" + frame.intent + "'");
    for (const SlotSchema& schema : reg_it->second) {
      const std::vector<TokenSeq>* examples = nullptr;
      if (params.cfg.use_examples) {
        auto key = std::make_pair(frame.intent, schema.name);
        auto it = chosen.find(key);
        if (it == chosen.end()) {
          try {
            Rng rng = Rng(seed).derived(
                {Rng::hash("eval-examples"), Rng::hash(frame.intent), Rng::hash(schema.name)});
            it = chosen.emplace(key, select_examples(pool, frame.intent, schema.name,
                                                     num_examples, rng))
                     .first;
          } catch (const EmptyPool&) {
            skipped.insert(frame.intent + "/" + schema.name);
            continue;
          }
        }
        examples = &it->second;
      }
      auto probs = forward(params, frame.tokens, schema,
                           examples ? *examples : std::vector<TokenSeq>{});
      for (auto [start, end] : decode(probs)) pred[f].push_back({schema.name, start, end});
    }
    for (const auto& span : frame.annotations) {
      if (skipped.count(frame.intent + "/" + span.slot)) continue;
      gold[f].push_back(span);
    }
  }

  EvalReport report = slot_f1(gold, pred);
  if (!skipped.empty()) {
    report.partial = true;
    report.skipped_slots.assign(skipped.begin(), skipped.end());
    for (const auto& s : skipped) log_warn("evaluate: skipped " + s + " (empty value pool)");
  }
  report.metadata = Json{{"k", num_examples}, {"seed", seed}, {"frames", eval_data.frames.size()}};
  return report;
}

// Multi-fold wrapper: one evaluation per seed, with the mean micro-F1.
struct FoldedReport {
  std::vector<EvalReport> folds;
  double mean_micro_f1 = 0.0;
};

template <typename S>
inline FoldedReport evaluate_folds(const ModelParams<S>& params, const Dataset& eval_data,
                                   const ValuePool& pool, int num_examples,
                                   const std::vector<std::uint64_t>& fold_seeds) {
  FoldedReport out;
  for (std::size_t i = 0; i < fold_seeds.size(); ++i) {
    EvalReport r = evaluate(params, eval_data, pool, num_examples, fold_seeds[i]);
    r.metadata["fold"] = i;
    out.mean_micro_f1 += r.micro.f1();
    out.folds.push_back(std::move(r));
  }
  if (!out.folds.empty()) out.mean_micro_f1 /= static_cast<double>(out.folds.size());
  return out;
}

// ---------------------------------------------------------------------------
// Misaligned-schema dataset synthesis: rewrites slot names per intent so that
// names collide across schemas while the underlying lexicons differ. Renamed
// registry entries get fresh descriptions (tokenized new name) and keep their
// example values (reordered by seed).

using RenameMap = std::map<std::string, std::map<std::string, std::string>>;

inline Dataset generate_xschema_like(const Dataset& base, const RenameMap& rename_map,
                                     std::uint64_t seed) {
  for (const auto& [intent, renames] : rename_map) {
    auto reg_it = base.registry.find(intent);
    if (reg_it == base.registry.end())
      throw ConfigError("generate_xschema_like: unknown intent '" + intent + "'");
    std::set<std::string> result_names;
    for (const auto& schema : reg_it->second) {
      auto it = renames.find(schema.name);
      const std::string& name = it == renames.end() ? schema.name : it->second;
      if (!result_names.insert(name).second)
        throw ConfigError("generate_xschema_like: rename makes '" + name +
                          "' ambiguous within intent '" + intent + "'");
    }
    for (const auto& [old_name, new_name] : renames) {
      bool found = false;
      for (const auto& schema : reg_it->second) found = found || schema.name == old_name;
      if (!found)
        throw ConfigError("generate_xschema_like: intent '" + intent + "' has no slot '" +
                          old_name + "'");
    }
  }

  Dataset out = base;
  out.split = "eval";
  for (auto& frame : out.frames) {
    auto map_it = rename_map.find(frame.intent);
    if (map_it == rename_map.end()) continue;
    for (auto& span : frame.annotations) {
      auto it = map_it->second.find(span.slot);
      if (it != map_it->second.end()) span.slot = it->second;
    }
  }
  for (auto& [intent, slots] : out.registry) {
    auto map_it = rename_map.find(intent);
    if (map_it == rename_map.end()) continue;
    for (auto& schema : slots) {
      auto it = map_it->second.find(schema.name);
      if (it == map_it->second.end()) continue;
      schema.name = it->second;
      schema.description = tokenize_slot_name(it->second);
      Rng rng = Rng(seed).derived({Rng::hash("xschema"), Rng::hash(intent),
                                   Rng::hash(it->second)});
      rng.shuffle(schema.examples);
    }
  }
  return out;
}

// Conditioning pool built from schema-declared example values (the path for
// slots whose values are specified with the slot definition rather than
// harvested from annotations). Eval gold values are excluded.
inline ValuePool pool_from_registry(const SchemaRegistry& registry, const Dataset& eval_data) {
  ValuePool pool;
  for (const auto& f : eval_data.frames)
    for (const auto& span : f.annotations) pool.excluded[span.slot].insert(span_value(f, span));
  pool.add_registry_examples(registry);
  return pool;
}

}  // namespace slotfill
