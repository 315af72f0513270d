// SPDX-License-Identifier: Apache-2.0
//
// slotfill command line: dataset conversion, training, evaluation, span
// prediction, example-count sweeps and a standalone slot-F1 scorer.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slotfill/config.hpp"
#include "slotfill/protocol.hpp"
#include "slotfill/synthdata.hpp"

namespace {

using namespace slotfill;

Dataset load_with_registry(const std::string& data_path, const std::string& schema_path,
                           const std::string& split) {
  Dataset ds = load_dataset(data_path, "native");
  ds.split = split;
  if (!schema_path.empty()) {
    ds.registry = load_registry(schema_path);
    validate_dataset(ds);
  }
  return ds;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << text;
}

int cmd_convert(const std::string& in_path, const std::string& format,
                const std::string& out_path) {
  Dataset ds = load_dataset(in_path, format);
  save_dataset(ds, out_path);
  std::cerr << "wrote " << ds.frames.size() << " frames to " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              bool resume) {
  ExperimentConfig cfg = ExperimentConfig::load(config_path, overrides);
  if (cfg.train_data.empty()) throw ConfigError("config: data.train is required");
  Dataset train_ds = load_with_registry(cfg.train_data, cfg.schemas, "train");
  Dataset eval_ds;
  if (!cfg.eval_data.empty()) eval_ds = load_with_registry(cfg.eval_data, cfg.schemas, "eval");

  std::filesystem::create_directories(cfg.out_dir);
  cfg.train.run_dir = cfg.out_dir;
  write_text(cfg.out_dir + "/config.json", cfg.to_json().dump(2) + "\n");

  TrainResult result = train(train_ds, eval_ds, cfg.sampler, cfg.model, cfg.train,
                             cfg.embeddings, nullptr, resume);
  save_checkpoint(cfg.out_dir + "/final.ckpt", result.params);
  std::cerr << "final loss " << (result.log.empty() ? 0.0 : result.log.back().loss)
            << ", checkpoint " << cfg.out_dir << "/final.ckpt\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path,
             const std::string& schema_path, const std::string& pool_data_path, int k,
             std::uint64_t seed, const std::string& out_path) {
  Checkpoint ck = load_checkpoint(checkpoint);
  Dataset eval_ds = load_with_registry(data_path, schema_path, "eval");
  ValuePool pool;
  if (!pool_data_path.empty()) {
    Dataset pool_ds = load_dataset(pool_data_path, "native");
    pool = build_value_pool(pool_ds, eval_ds);
    pool.add_registry_examples(eval_ds.registry);
  } else {
    pool = pool_from_registry(eval_ds.registry, eval_ds);
  }
  EvalReport report = evaluate(ck.params, eval_ds, pool, k, seed);
  const std::string text = report.to_json().dump(2) + "\n";
  if (out_path.empty())
    std::cout << text;
  else
    write_text(out_path, text);
  std::cerr << "micro F1 " << report.micro.f1() << (report.partial ? " (partial)" : "") << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& schema_path,
                const std::string& intent, const std::string& text, const std::string& only_slot,
                int k) {
  Checkpoint ck = load_checkpoint(checkpoint);
  SchemaRegistry registry = load_registry(schema_path);
  auto it = registry.find(intent);
  if (it == registry.end()) throw ConfigError("intent '" + intent + "' not in schema file");

  TokenSeq tokens = tokenize_utterance(text);
  if (tokens.empty()) throw ConfigError("empty utterance");

  Json slots = Json::object();
  for (const SlotSchema& schema : it->second) {
    if (!only_slot.empty() && schema.name != only_slot) continue;
    std::vector<TokenSeq> examples;
    if (ck.params.cfg.use_examples) {
      examples = schema.examples;
      if (examples.empty())
        throw EmptyExamples("slot '" + schema.name + "' has no example values in the schema file");
      if (k > 0 && static_cast<int>(examples.size()) > k) examples.resize(k);
    }
    auto probs = forward(ck.params, tokens, schema, examples);
    Json spans = Json::array();
    for (auto [start, end] : decode(probs)) {
      TokenSeq value(tokens.begin() + start, tokens.begin() + end);
      spans.push_back({{"start", start}, {"end", end}, {"value", value}});
    }
    slots[schema.name] = spans;
  }
  std::cout << Json{{"tokens", tokens}, {"slots", slots}}.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides,
              int jobs_override) {
  ExperimentConfig cfg = ExperimentConfig::load(config_path, overrides);
  if (jobs_override > 0) cfg.jobs = jobs_override;
  if (cfg.train_data.empty()) throw ConfigError("config: data.train is required");
  Dataset train_ds = load_with_registry(cfg.train_data, cfg.schemas, "train");
  Dataset eval_ds;
  if (!cfg.eval_data.empty()) eval_ds = load_with_registry(cfg.eval_data, cfg.schemas, "eval");

  ProtocolReport report =
      run_protocol(train_ds, eval_ds, protocol_from_string(cfg.protocol), cfg.grid, cfg.sampler,
                   cfg.model, cfg.train, cfg.embeddings, cfg.jobs);

  std::filesystem::create_directories(cfg.out_dir);
  write_text(cfg.out_dir + "/config.json", cfg.to_json().dump(2) + "\n");
  write_text(cfg.out_dir + "/report.json", report.to_json().dump(2) + "\n");
  write_text(cfg.out_dir + "/sweep.csv", report.to_csv());
  write_text(cfg.out_dir + "/table.txt", report.render_table());
  std::cout << report.render_table();
  int failures = 0;
  for (const auto& c : report.cells)
    if (!c.ok()) {
      ++failures;
      std::cerr << "cell (" << c.intent << ", n=" << c.n_target << ", k=" << c.k
                << ", fold=" << c.fold << ") failed: " << c.error << "\n";
    }
  return failures == 0 ? 0 : 1;
}

int cmd_f1(const std::string& gold_path, const std::string& pred_path,
           const std::string& out_path) {
  Dataset gold_ds = load_dataset(gold_path, "native");
  Dataset pred_ds = load_dataset(pred_path, "native");
  if (gold_ds.frames.size() != pred_ds.frames.size())
    throw ConfigError("gold and prediction files have different frame counts");
  std::vector<std::vector<SlotSpan>> gold(gold_ds.frames.size()), pred(pred_ds.frames.size());
  for (std::size_t i = 0; i < gold_ds.frames.size(); ++i) {
    gold[i] = gold_ds.frames[i].annotations;
    pred[i] = pred_ds.frames[i].annotations;
  }
  EvalReport report = slot_f1(gold, pred);
  const std::string text = report.to_json().dump(2) + "\n";
  if (out_path.empty())
    std::cout << text;
  else
    write_text(out_path, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zero-shot slot filling with example-value conditioning"};
  app.require_subcommand(1);

  // convert
  std::string in_path, in_format = "snips-public", out_path;
  auto* convert = app.add_subcommand("convert", "convert a dataset to the native JSONL format");
  convert->add_option("--in", in_path, "input file or directory")->required();
  convert->add_option("--format", in_format, "input format: native | snips-public");
  convert->add_option("--out", out_path, "output JSONL path")->required();

  // train
  std::string config_path;
  std::vector<std::string> overrides;
  bool resume = false;
  auto* train_cmd = app.add_subcommand("train", "train a tagger from an experiment config");
  train_cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
  train_cmd->add_option("--set", overrides, "override config fields, e.g. train.seed=7");
  train_cmd->add_flag("--resume", resume, "continue from the run directory's checkpoint");
  train_cmd->allow_extras();  // bare --key=value overrides

  // eval
  std::string checkpoint, data_path, schema_path, pool_data, report_out;
  int k = 2;
  std::uint64_t seed = 1;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint with slot F1");
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval_cmd->add_option("--data", data_path, "evaluation dataset (native JSONL)")->required();
  eval_cmd->add_option("--schemas", schema_path, "schema registry JSON")->required();
  eval_cmd->add_option("--pool-data", pool_data,
                       "dataset supplying conditioning values (default: schema examples)");
  eval_cmd->add_option("--k", k, "number of conditioning example values");
  eval_cmd->add_option("--seed", seed, "example-selection seed");
  eval_cmd->add_option("--out", report_out, "write the JSON report here instead of stdout");

  // predict
  std::string intent, text, only_slot;
  auto* predict = app.add_subcommand("predict", "tag a raw utterance for an intent's slots");
  predict->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  predict->add_option("--schemas", schema_path, "schema registry JSON")->required();
  predict->add_option("--intent", intent, "intent whose slots are queried")->required();
  predict->add_option("--text", text, "utterance text")->required();
  predict->add_option("--slot", only_slot, "restrict to one slot");
  predict->add_option("--k", k, "max example values per slot (0 = all)");

  // sweep
  int jobs = 0;
  auto* sweep = app.add_subcommand("sweep", "run the protocol grid from a config");
  sweep->add_option("--config", config_path, "experiment config (JSON)")->required();
  sweep->add_option("--set", overrides, "override config fields");
  sweep->add_option("--jobs", jobs, "parallel cells");
  sweep->allow_extras();

  // f1
  std::string gold_path, pred_path;
  auto* f1 = app.add_subcommand("f1", "score prediction spans against gold spans");
  f1->add_option("--gold", gold_path, "gold dataset (native JSONL)")->required();
  f1->add_option("--pred", pred_path, "predicted dataset (native JSONL)")->required();
  f1->add_option("--out", report_out, "write the JSON report here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  // Any config field can also be overridden directly: --train.total_steps=100.
  auto absorb_extras = [&](CLI::App* cmd) {
    for (std::string extra : cmd->remaining()) {
      if (extra.rfind("--", 0) == 0) extra = extra.substr(2);
      if (extra.find('=') == std::string::npos || extra.find('.') == std::string::npos) {
        std::cerr << "error: unrecognized argument '" << extra
                  << "' (expected --section.key=value)\n";
        std::exit(2);
      }
      overrides.push_back(extra);
    }
  };
  absorb_extras(train_cmd);
  absorb_extras(sweep);

  try {
    if (convert->parsed()) return cmd_convert(in_path, in_format, out_path);
    if (train_cmd->parsed()) return cmd_train(config_path, overrides, resume);
    if (eval_cmd->parsed())
      return cmd_eval(checkpoint, data_path, schema_path, pool_data, k, seed, report_out);
    if (predict->parsed())
      return cmd_predict(checkpoint, schema_path, intent, text, only_slot, k);
    if (sweep->parsed()) return cmd_sweep(config_path, overrides, jobs);
    if (f1->parsed()) return cmd_f1(gold_path, pred_path, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidSchema& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
