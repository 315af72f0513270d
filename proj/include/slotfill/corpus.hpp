// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slotfill/errors.hpp"

namespace slotfill {

using Json = nlohmann::json;
using TokenSeq = std::vector<std::string>;

// Reserved token substituted for slot-value tokens by the replacement
// schedule. It owns a dedicated word-embedding row and is a single opaque
// symbol to the char-CNN.
inline constexpr const char* kValueToken = "<VAL>";

enum class Tag : int { O = 0, B = 1, I = 2 };

inline char tag_letter(Tag t) { return t == Tag::O ? 'O' : (t == Tag::B ? 'B' : 'I'); }

// ---------------------------------------------------------------------------
// Domain types

// A slot's conditioning input: identifier, description tokens and example
// values (each value a token sequence).
struct SlotSchema {
  std::string name;
  TokenSeq description;
  std::vector<TokenSeq> examples;
};

struct SlotSpan {
  std::string slot;
  int start = 0;  // token index, inclusive
  int end = 0;    // token index, exclusive

  friend bool operator==(const SlotSpan&, const SlotSpan&) = default;
  friend auto operator<=>(const SlotSpan&, const SlotSpan&) = default;
};

// One annotated utterance for one intent.
struct Frame {
  std::string intent;
  TokenSeq tokens;
  std::vector<SlotSpan> annotations;
};

// (utterance, slot, per-token IOB tags): one training or evaluation unit.
struct TaggedInstance {
  TokenSeq tokens;
  SlotSchema schema;
  std::vector<Tag> tags;
  bool is_positive = false;
  std::size_t frame_index = 0;  // index of the source frame in its dataset
};

// intent -> slot schemas, in registry file order.
using SchemaRegistry = std::map<std::string, std::vector<SlotSchema>>;

struct Dataset {
  std::vector<Frame> frames;
  SchemaRegistry registry;
  std::string split = "train";

  std::map<std::string, std::vector<std::size_t>> frames_by_intent() const {
    std::map<std::string, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < frames.size(); ++i) out[frames[i].intent].push_back(i);
    return out;
  }

  const SlotSchema* find_schema(const std::string& intent, const std::string& slot) const {
    auto it = registry.find(intent);
    if (it == registry.end()) return nullptr;
    for (const auto& s : it->second)
      if (s.name == slot) return &s;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Operations

// Splits a camelCase / snake_case identifier into lowercase tokens.
// "partySizeNumber" -> {party, size, number}; "check_in" -> {check, in}.
inline TokenSeq tokenize_slot_name(const std::string& name) {
  if (name.empty()) throw InvalidSchema("tokenize_slot_name: empty name");
  for (char c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_')
      throw InvalidSchema("tokenize_slot_name: non-alphanumeric name '" + name + "'");
  }
  TokenSeq out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (std::size_t i = 0; i < name.size(); ++i) {
    unsigned char c = name[i];
    if (c == '_') {
      flush();
      continue;
    }
    bool boundary = false;
    if (!cur.empty()) {
      unsigned char prev = cur.back();
      if (std::isupper(c) && std::islower(prev)) boundary = true;
      // End of an acronym run: "XMLFile" -> xml | file.
      if (std::isupper(prev) && std::isupper(c) && i + 1 < name.size() &&
          std::islower(static_cast<unsigned char>(name[i + 1])))
        boundary = true;
      if (std::isdigit(c) != std::isdigit(prev)) boundary = true;
    }
    if (boundary) flush();
    cur.push_back(static_cast<char>(std::tolower(c)));
  }
  flush();
  if (out.empty()) throw InvalidSchema("tokenize_slot_name: no tokens in '" + name + "'");
  return out;
}

// Whitespace tokenization used for raw-text prediction input; lowercased,
// punctuation left attached.
inline TokenSeq tokenize_utterance(const std::string& text) {
  TokenSeq out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) {
    for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back(tok);
  }
  return out;
}

// Builds the IOB instance for one (frame, slot) pair. Tokens covered by a
// span of schema.name get B at the span start and I inside; everything else
// is O. When a registry is supplied, the schema must be registered for the
// frame's intent.
inline TaggedInstance frame_to_instance(const Frame& frame, const SlotSchema& schema,
                                        const SchemaRegistry* registry = nullptr) {
  if (registry) {
    auto it = registry->find(frame.intent);
    bool known = false;
    if (it != registry->end())
      for (const auto& s : it->second)
        if (s.name == schema.name) known = true;
    if (!known)
      throw SchemaMismatch("slot '" + schema.name + "' not registered for intent '" +
                           frame.intent + "'");
  }
  const int t = static_cast<int>(frame.tokens.size());
  TaggedInstance inst;
  inst.tokens = frame.tokens;
  inst.schema = schema;
  inst.tags.assign(frame.tokens.size(), Tag::O);
  for (const auto& span : frame.annotations) {
    if (span.slot != schema.name) continue;
    if (span.start < 0 || span.end > t || span.start >= span.end)
      throw ValidationError("span out of range for slot '" + span.slot + "'");
    inst.tags[span.start] = Tag::B;
    for (int i = span.start + 1; i < span.end; ++i) inst.tags[i] = Tag::I;
    inst.is_positive = true;
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Validation

inline void validate_frame(const Frame& frame, const SchemaRegistry* registry = nullptr) {
  if (frame.tokens.empty()) throw ValidationError("frame with no tokens");
  const int t = static_cast<int>(frame.tokens.size());
  std::vector<int> owner(frame.tokens.size(), -1);
  for (std::size_t a = 0; a < frame.annotations.size(); ++a) {
    const auto& span = frame.annotations[a];
    if (span.start < 0 || span.end > t || span.start >= span.end)
      throw ValidationError("span (" + std::to_string(span.start) + "," +
                            std::to_string(span.end) + ") out of range for slot '" + span.slot +
                            "'");
    for (int i = span.start; i < span.end; ++i) {
      if (owner[i] >= 0)
        throw ValidationError("overlapping spans at token " + std::to_string(i) + " in intent '" +
                              frame.intent + "'");
      owner[i] = static_cast<int>(a);
    }
    if (registry) {
      auto it = registry->find(frame.intent);
      bool known = false;
      if (it != registry->end())
        for (const auto& s : it->second)
          if (s.name == span.slot) known = true;
      if (!known)
        throw ValidationError("slot '" + span.slot + "' not in registry for intent '" +
                              frame.intent + "'");
    }
  }
}

inline void validate_schema(const SlotSchema& schema) {
  if (schema.name.empty()) throw InvalidSchema("schema with empty name");
  if (schema.description.empty())
    throw InvalidSchema("schema '" + schema.name + "' has empty description");
  for (const auto& d : schema.description)
    if (d.empty()) throw InvalidSchema("schema '" + schema.name + "' has an empty description token");
  std::set<TokenSeq> seen;
  for (const auto& v : schema.examples) {
    if (v.empty()) throw InvalidSchema("schema '" + schema.name + "' has an empty example value");
    if (!seen.insert(v).second)
      throw InvalidSchema("schema '" + schema.name + "' has duplicate example values");
  }
}

inline void validate_dataset(const Dataset& ds) {
  for (const auto& [intent, slots] : ds.registry)
    for (const auto& s : slots) validate_schema(s);
  for (const auto& f : ds.frames) validate_frame(f, ds.registry.empty() ? nullptr : &ds.registry);
}

// ---------------------------------------------------------------------------
// Native format: JSON Lines, one frame per line.

inline Json frame_to_json(const Frame& frame) {
  Json slots = Json::array();
  auto sorted = frame.annotations;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& s : sorted)
    slots.push_back({{"name", s.slot}, {"start", s.start}, {"end", s.end}});
  return Json{{"intent", frame.intent}, {"tokens", frame.tokens}, {"slots", slots}};
}

inline Frame frame_from_json(const Json& j) {
  Frame f;
  f.intent = j.at("intent").get<std::string>();
  f.tokens = j.at("tokens").get<TokenSeq>();
  if (j.contains("slots")) {
    for (const auto& s : j.at("slots")) {
      f.annotations.push_back({s.at("name").get<std::string>(), s.at("start").get<int>(),
                               s.at("end").get<int>()});
    }
  }
  std::sort(f.annotations.begin(), f.annotations.end());
  return f;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  for (const auto& f : ds.frames) out << frame_to_json(f).dump() << "\n";
}

inline Dataset load_native_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  Dataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
      ds.frames.push_back(frame_from_json(j));
    } catch (const Json::exception& e) {
      throw FormatError("parse error at " + path + ":" + std::to_string(lineno) + ": " +
                        e.what());
    }
    try {
      validate_frame(ds.frames.back());
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// SNIPS public format: per-intent JSON files of chunk lists. Each chunk
// {"text": ...} optionally carries an "entity"; chunk text is whitespace
// tokenized and entity chunks become token spans.

inline void append_snips_entry(Dataset& ds, const std::string& intent, const Json& entry,
                               const std::string& where) {
  Frame f;
  f.intent = intent;
  for (const auto& chunk : entry.at("data")) {
    TokenSeq toks = [&] {
      TokenSeq out;
      std::istringstream ss(chunk.at("text").get<std::string>());
      std::string tok;
      while (ss >> tok) out.push_back(tok);
      return out;
    }();
    int start = static_cast<int>(f.tokens.size());
    f.tokens.insert(f.tokens.end(), toks.begin(), toks.end());
    if (chunk.contains("entity")) {
      if (toks.empty())
        throw ValidationError(where + ": entity chunk with no tokens");
      f.annotations.push_back(
          {chunk.at("entity").get<std::string>(), start, start + static_cast<int>(toks.size())});
    }
  }
  if (f.tokens.empty()) return;  // skip whitespace-only entries
  validate_frame(f);
  ds.frames.push_back(std::move(f));
}

inline void load_snips_file(Dataset& ds, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  Json root;
  try {
    root = Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError("parse error in " + path + ": " + e.what());
  }
  if (!root.is_object()) throw FormatError(path + ": expected top-level object of intents");
  for (const auto& [intent, entries] : root.items()) {
    int idx = 0;
    for (const auto& entry : entries) {
      append_snips_entry(ds, intent, entry, path + " entry " + std::to_string(idx));
      ++idx;
    }
  }
}

inline Dataset load_snips_dataset(const std::string& path) {
  Dataset ds;
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.path().extension() == ".json") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw FormatError("no .json files in '" + path + "'");
    for (const auto& f : files) load_snips_file(ds, f);
  } else {
    load_snips_file(ds, path);
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path, const std::string& format) {
  if (format == "native") return load_native_dataset(path);
  if (format == "snips-public") return load_snips_dataset(path);
  throw ConfigError("unknown dataset format '" + format + "'");
}

// ---------------------------------------------------------------------------
// Schema registry: JSON {intent: [{"name", "description"?, "examples"?}]}.
// A missing description defaults to the tokenized slot name.

inline SchemaRegistry load_registry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  Json root;
  try {
    root = Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError("parse error in " + path + ": " + e.what());
  }
  SchemaRegistry reg;
  for (const auto& [intent, slots] : root.items()) {
    for (const auto& s : slots) {
      SlotSchema schema;
      schema.name = s.at("name").get<std::string>();
      if (s.contains("description"))
        schema.description = s.at("description").get<TokenSeq>();
      else
        schema.description = tokenize_slot_name(schema.name);
      if (s.contains("examples"))
        schema.examples = s.at("examples").get<std::vector<TokenSeq>>();
      validate_schema(schema);
      reg[intent].push_back(std::move(schema));
    }
  }
  return reg;
}

inline Json registry_to_json(const SchemaRegistry& reg) {
  Json root = Json::object();
  for (const auto& [intent, slots] : reg) {
    Json arr = Json::array();
    for (const auto& s : slots)
      arr.push_back({{"name", s.name}, {"description", s.description}, {"examples", s.examples}});
    root[intent] = arr;
  }
  return root;
}

inline void save_registry(const SchemaRegistry& reg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << registry_to_json(reg).dump(2) << "\n";
}

}  // namespace slotfill
