// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "slotfill/evaluator.hpp"
#include "slotfill/trainer.hpp"

namespace slotfill {

enum class ProtocolKind { LeaveOneIntentOut, CrossSchema };

inline ProtocolKind protocol_from_string(const std::string& s) {
  if (s == "leave-one-intent-out") return ProtocolKind::LeaveOneIntentOut;
  if (s == "cross-schema") return ProtocolKind::CrossSchema;
  throw ConfigError("unknown protocol '" + s + "'");
}

inline const char* protocol_name(ProtocolKind k) {
  return k == ProtocolKind::LeaveOneIntentOut ? "leave-one-intent-out" : "cross-schema";
}

struct ProtocolGrid {
  std::vector<std::string> targets;  // empty: every intent of the eval side
  std::vector<int> n_target = {0};
  std::vector<int> k_values = {2};  // 0 selects the description-only ablation
  int folds = 3;
};

struct ProtocolCell {
  std::string intent;
  int n_target = 0;
  int k = 0;
  int fold = 0;
  EvalReport report;
  std::string error;

  bool ok() const { return error.empty(); }
};

struct ProtocolReport {
  ProtocolKind kind = ProtocolKind::LeaveOneIntentOut;
  std::vector<ProtocolCell> cells;

  Json to_json() const {
    Json arr = Json::array();
    for (const auto& c : cells) {
      Json j{{"intent", c.intent}, {"n_target", c.n_target}, {"k", c.k}, {"fold", c.fold}};
      if (c.ok()) {
        j["micro_f1"] = c.report.micro.f1();
        j["report"] = c.report.to_json();
      } else {
        j["error"] = c.error;
      }
      arr.push_back(std::move(j));
    }
    return Json{{"protocol", protocol_name(kind)}, {"cells", arr}};
  }

  std::string to_csv() const {
    std::ostringstream out;
    out << "k,n_target,intent,fold,micro_f1\n";
    out.setf(std::ios::fixed);
    out.precision(4);
    for (const auto& c : cells) {
      out << c.k << "," << c.n_target << "," << c.intent << "," << c.fold << ",";
      if (c.ok())
        out << c.report.micro.f1();
      else
        out << "error";
      out << "\n";
    }
    return out.str();
  }

  // Table-2-style text: one row per intent, one column per (n_target, k),
  // fold-averaged micro F1 in percent.
  std::string render_table() const {
    std::map<std::string, std::map<std::pair<int, int>, std::pair<double, int>>> rows;
    std::set<std::pair<int, int>> columns;
    for (const auto& c : cells) {
      if (!c.ok()) continue;
      auto& cell = rows[c.intent][{c.n_target, c.k}];
      cell.first += c.report.micro.f1();
      cell.second += 1;
      columns.insert({c.n_target, c.k});
    }
    std::ostringstream out;
    out << "intent";
    for (const auto& [n, k] : columns)
      out << "\tn=" << n << (k > 0 ? "/+"+std::to_string(k)+"Ex" : "/CT");
    out << "\n";
    out.setf(std::ios::fixed);
    out.precision(1);
    for (const auto& [intent, cols] : rows) {
      out << intent;
      for (const auto& col : columns) {
        out << "\t";
        auto it = cols.find(col);
        if (it == cols.end() || it->second.second == 0)
          out << "-";
        else
          out << 100.0 * it->second.first / it->second.second;
      }
      out << "\n";
    }
    return out.str();
  }
};

// ---------------------------------------------------------------------------

namespace detail {

struct CellSpec {
  std::string intent;
  int n_target;
  int k;
  int fold;
};

// One full train+evaluate run for a grid cell. Deterministic per cell.
inline ProtocolCell run_cell(const Dataset& train_side, const Dataset& eval_side,
                             ProtocolKind kind, const CellSpec& cell, SamplerConfig sampler_cfg,
                             ModelConfig model_cfg, TrainConfig train_cfg,
                             const std::string& embedding_path) {
  ProtocolCell out{cell.intent, cell.n_target, cell.k, cell.fold, {}, ""};
  try {
    const std::uint64_t fold_seed =
        derive_seed(train_cfg.seed, Rng::hash("fold"), static_cast<std::uint64_t>(cell.fold));
    sampler_cfg.seed = fold_seed;
    train_cfg.seed = fold_seed;
    train_cfg.run_dir.clear();
    model_cfg.use_examples = model_cfg.use_examples && cell.k > 0;
    sampler_cfg.num_examples = cell.k;

    Dataset model_train;
    Dataset model_eval;
    ValuePool eval_pool;

    if (kind == ProtocolKind::LeaveOneIntentOut) {
      auto [train_part, leftover] = make_split(train_side, cell.intent, cell.n_target, fold_seed);
      model_train = std::move(train_part);
      if (!eval_side.frames.empty()) {
        model_eval.registry = eval_side.registry;
        model_eval.split = "eval";
        for (const auto& f : eval_side.frames)
          if (f.intent == cell.intent) model_eval.frames.push_back(f);
        if (model_eval.frames.empty())
          throw ConfigError("no eval-side frames for intent '" + cell.intent + "'");
      } else {
        model_eval = std::move(leftover);
      }
      // The target's train-side frames are the conditioning value inventory,
      // whether or not they were trained on.
      eval_pool = build_value_pool(train_side, model_eval);
    } else {
      // Cross-schema: train on the training schemas of every intent, evaluate
      // the target intent under its (differing) evaluation schema with
      // conditioning values published in that schema registry.
      model_train = train_side;
      model_eval.split = "eval";
      model_eval.registry = eval_side.registry;
      for (const auto& f : eval_side.frames)
        if (f.intent == cell.intent) model_eval.frames.push_back(f);
      if (model_eval.frames.empty())
        throw ConfigError("no eval-side frames for intent '" + cell.intent + "'");
      if (cell.n_target > 0) {
        // Few-shot: a seeded prefix of the eval-schema frames moves into
        // training under an aliased intent carrying the eval registry.
        std::vector<std::size_t> order(model_eval.frames.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng = Rng(fold_seed).derived({Rng::hash("xschema-split"), Rng::hash(cell.intent)});
        rng.shuffle(order);
        if (static_cast<std::size_t>(cell.n_target) >= order.size())
          throw ConfigError("n_target leaves no eval frames for '" + cell.intent + "'");
        const std::string alias = cell.intent + "@eval";
        std::set<std::size_t> taken(order.begin(), order.begin() + cell.n_target);
        Dataset remaining;
        remaining.split = "eval";
        remaining.registry = model_eval.registry;
        for (std::size_t i = 0; i < model_eval.frames.size(); ++i) {
          if (taken.count(i)) {
            Frame f = model_eval.frames[i];
            f.intent = alias;
            model_train.frames.push_back(std::move(f));
          } else {
            remaining.frames.push_back(model_eval.frames[i]);
          }
        }
        model_train.registry[alias] = eval_side.registry.at(cell.intent);
        model_eval = std::move(remaining);
      }
      eval_pool = pool_from_registry(model_eval.registry, model_eval);
      // Lookups happen under the target intent key regardless of alias.
    }

    TrainResult trained = train(model_train, model_eval, sampler_cfg, model_cfg, train_cfg,
                                embedding_path, &eval_pool);
    out.report = evaluate(trained.params, model_eval, eval_pool, cell.k, fold_seed);
    out.report.metadata["intent"] = cell.intent;
    out.report.metadata["n_target"] = cell.n_target;
    out.report.metadata["fold"] = cell.fold;
    out.report.metadata["final_loss"] = trained.log.empty() ? 0.0 : trained.log.back().loss;
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace detail

// Executes the full (target x n_target x K x fold) grid; cell failures are
// recorded without aborting the remaining cells. jobs > 1 runs cells in
// parallel (each cell is internally deterministic).
inline ProtocolReport run_protocol(const Dataset& train_side, const Dataset& eval_side,
                                   ProtocolKind kind, const ProtocolGrid& grid,
                                   const SamplerConfig& sampler_cfg, const ModelConfig& model_cfg,
                                   const TrainConfig& train_cfg,
                                   const std::string& embedding_path = "", int jobs = 1) {
  std::vector<std::string> targets = grid.targets;
  if (targets.empty()) {
    const Dataset& side = eval_side.frames.empty() ? train_side : eval_side;
    std::set<std::string> intents;
    for (const auto& f : side.frames) intents.insert(f.intent);
    targets.assign(intents.begin(), intents.end());
  }

  std::vector<detail::CellSpec> specs;
  for (const auto& intent : targets)
    for (int n : grid.n_target)
      for (int k : grid.k_values)
        for (int fold = 0; fold < grid.folds; ++fold) specs.push_back({intent, n, k, fold});

  ProtocolReport report;
  report.kind = kind;
  report.cells.resize(specs.size());

  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(specs.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < specs.size(); ++i)
      report.cells[i] = detail::run_cell(train_side, eval_side, kind, specs[i], sampler_cfg,
                                         model_cfg, train_cfg, embedding_path);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= specs.size()) return;
          report.cells[i] = detail::run_cell(train_side, eval_side, kind, specs[i], sampler_cfg,
                                             model_cfg, train_cfg, embedding_path);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  return report;
}

}  // namespace slotfill
