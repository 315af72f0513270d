// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "slotfill/model.hpp"

namespace slotfill {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

// Single-file checkpoint: a one-line JSON manifest (format version, model
// config, vocabulary, array names/shapes) followed by the raw little-endian
// float32 array payloads in manifest order.

inline constexpr int kCheckpointVersion = 1;

inline Json model_config_to_json(const ModelConfig& cfg) {
  return Json{{"use_examples", cfg.use_examples},
              {"use_description", cfg.use_description},
              {"d_w", cfg.d_w},
              {"d_c", cfg.d_c},
              {"d_en", cfg.d_en},
              {"char_emb_dim", cfg.char_emb_dim},
              {"dropout", cfg.dropout},
              {"train_word_embeddings", cfg.train_word_embeddings}};
}

inline ModelConfig model_config_from_json(const Json& j) {
  ModelConfig cfg;
  cfg.use_examples = j.value("use_examples", cfg.use_examples);
  cfg.use_description = j.value("use_description", cfg.use_description);
  cfg.d_w = j.value("d_w", cfg.d_w);
  cfg.d_c = j.value("d_c", cfg.d_c);
  cfg.d_en = j.value("d_en", cfg.d_en);
  cfg.char_emb_dim = j.value("char_emb_dim", cfg.char_emb_dim);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.train_word_embeddings = j.value("train_word_embeddings", cfg.train_word_embeddings);
  cfg.validate();
  return cfg;
}

template <typename S>
inline void save_checkpoint(const std::string& path, ModelParams<S>& params,
                            const Json& extra = Json::object(),
                            const std::map<std::string, std::vector<S>>& extra_arrays = {}) {
  // Vocabulary in column order (column 0 is the OOV row and has no word).
  std::vector<std::string> words(params.embed.word.vocab.size());
  for (const auto& [w, idx] : params.embed.word.vocab) words.at(idx - 1) = w;

  auto refs = params.all_refs();
  Json manifest_arrays = Json::array();
  for (const auto& r : refs)
    manifest_arrays.push_back({{"name", r.name}, {"rows", r.rows}, {"cols", r.cols}});
  for (const auto& [name, data] : extra_arrays)
    manifest_arrays.push_back(
        {{"name", name}, {"rows", static_cast<Eigen::Index>(data.size())}, {"cols", 1}});

  Json manifest{{"format", "slotfill-checkpoint"},
                {"version", kCheckpointVersion},
                {"dtype", "float32"},
                {"model", model_config_to_json(params.cfg)},
                {"vocab", words},
                {"arrays", manifest_arrays},
                {"extra", extra}};

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open checkpoint '" + path + "' for writing");
  out << manifest.dump() << "\n";
  std::vector<float> buf;
  for (const auto& r : refs) {
    buf.resize(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) buf[i] = static_cast<float>(r.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  for (const auto& [name, data] : extra_arrays) {
    buf.assign(data.begin(), data.end());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw FormatError("short write to checkpoint '" + path + "'");
}

struct Checkpoint {
  ModelParams<float> params;
  Json extra;
  std::map<std::string, std::vector<float>> extra_arrays;
};

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint '" + path + "' has no manifest");
  Json manifest;
  try {
    manifest = Json::parse(line);
  } catch (const Json::exception& e) {
    throw FormatError("bad checkpoint manifest in '" + path + "': " + e.what());
  }
  if (manifest.value("format", "") != "slotfill-checkpoint")
    throw FormatError("'" + path + "' is not a slotfill checkpoint");
  if (manifest.value("version", 0) != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version in '" + path + "'");

  ModelConfig cfg = model_config_from_json(manifest.at("model"));
  std::vector<std::string> words = manifest.at("vocab").get<std::vector<std::string>>();

  nn::WordTable<float> wt;
  wt.table.resize(cfg.d_w, static_cast<Eigen::Index>(words.size()) + 1);
  wt.val_row.resize(cfg.d_w);
  for (std::size_t i = 0; i < words.size(); ++i) wt.vocab[words[i]] = static_cast<int>(i) + 1;

  Checkpoint ck{make_model(cfg, std::move(wt), 0), manifest.value("extra", Json::object()), {}};

  std::map<std::string, nn::ParamRef<float>> by_name;
  for (auto& r : ck.params.all_refs()) by_name[r.name] = r;

  for (const auto& entry : manifest.at("arrays")) {
    const std::string name = entry.at("name").get<std::string>();
    const Eigen::Index rows = entry.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = entry.at("cols").get<Eigen::Index>();
    std::vector<float> buf(static_cast<std::size_t>(rows * cols));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw FormatError("truncated checkpoint array '" + name + "' in '" + path + "'");
    auto it = by_name.find(name);
    if (it != by_name.end()) {
      if (it->second.rows != rows || it->second.cols != cols)
        throw FormatError("checkpoint array '" + name + "' has unexpected shape");
      std::copy(buf.begin(), buf.end(), it->second.data);
    } else {
      ck.extra_arrays[name] = std::move(buf);
    }
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Embedding file: UTF-8 text, header "V d_w", then one "word v1 ... v_dw"
// line per word.

template <typename S>
inline nn::WordTable<S> load_embedding_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding file '" + path + "'");
  std::size_t count = 0;
  int dim = 0;
  if (!(in >> count >> dim) || dim < 1)
    throw FormatError("bad embedding header in '" + path + "'");
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  rows.reserve(count);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < count; ++i) {
    std::string word;
    if (!(in >> word)) throw FormatError("truncated embedding file '" + path + "'");
    std::vector<double> vals(dim);
    for (int r = 0; r < dim; ++r)
      if (!(in >> vals[r]))
        throw FormatError("bad embedding value for word '" + word + "' in '" + path + "'");
    const std::string key = nn::WordTable<S>::normalize(word);
    if (key == nn::WordTable<S>::normalize(kValueToken) || !seen.insert(key).second)
      continue;  // reserved token excluded; first occurrence wins

    rows.emplace_back(key, std::move(vals));
  }
  nn::WordTable<S> wt;
  wt.table.setZero(dim, static_cast<Eigen::Index>(rows.size()) + 1);
  wt.val_row.setZero(dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int col = static_cast<int>(i) + 1;
    wt.vocab[rows[i].first] = col;
    for (int r = 0; r < dim; ++r) wt.table(r, col) = static_cast<S>(rows[i].second[r]);
  }
  return wt;
}

}  // namespace slotfill
