// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "slotfill/corpus.hpp"
#include "slotfill/rng.hpp"

namespace slotfill {

// Template-based synthetic corpora for desk-scale experiments. Slot values
// come from concept lexicons of three kinds:
//   Closed        - a small fixed set of modifier+head values,
//   Compositional - productive modifier+head pairings over a shared head set,
//   Open          - a large pool of opaque single-token strings.
// Every (concept, subset) lexicon is partitioned three ways - frame-train,
// frame-eval and registry values - pairwise disjoint as token sequences. For
// closed and compositional lexicons the frame-eval values reuse the tokens of
// the frame-train values in unseen pairings; open values share nothing.

enum class LexiconKind { Closed, Compositional, Open };

struct SynthSlot {
  std::string name;
  std::string concept_name;
  LexiconKind kind = LexiconKind::Closed;
  int subset = 0;
};

struct SynthIntent {
  std::string name;
  std::vector<SynthSlot> slots;
  std::vector<SynthSlot> eval_slots;  // empty: eval frames use `slots`
  int train_frames = 60;
  int eval_frames = 30;
};

struct SynthSpec {
  std::vector<SynthIntent> intents;
  std::uint64_t seed = 0;
  int registry_examples = 8;  // example values published per registry entry
};

struct SynthCorpus {
  Dataset train;
  Dataset eval;
  // word -> lexicon group ("concept#subset" for values, "common" otherwise);
  // drives the synthetic pretrained-style embedding emitter.
  std::map<std::string, std::string> word_groups;
};

namespace synth_detail {

inline std::string syllable(int i) {
  static const char* consonants = "bdfgklmnprstvz";  // 14
  static const char* vowels = "aeiou";               // 5
  i = ((i % 70) + 70) % 70;
  return std::string(1, consonants[i / 5]) + vowels[i % 5];
}

// Pseudo-words are three random syllables with no concept-level surface
// marker, so surface form alone never reveals which lexicon a word belongs
// to. Cross-lexicon disjointness comes from a shared used-word set.
class WordMint {
 public:
  std::string fresh(Rng& rng) {
    for (;;) {
      std::string w = syllable(static_cast<int>(rng.below(70))) +
                      syllable(static_cast<int>(rng.below(70))) +
                      syllable(static_cast<int>(rng.below(70)));
      if (used_.insert(w).second) return w;
    }
  }

 private:
  std::set<std::string> used_;
};

struct Lexicon {
  std::vector<TokenSeq> train_values;
  std::vector<TokenSeq> eval_values;
  std::vector<TokenSeq> registry_values;
};

inline Lexicon build_lexicon(const std::string& concept_name, LexiconKind kind, int subset,
                             WordMint& mint, std::uint64_t seed) {
  Lexicon lex;
  Rng base(seed);
  if (kind == LexiconKind::Open) {
    Rng rng = base.derived({Rng::hash("lexicon"), Rng::hash(concept_name),
                            static_cast<std::uint64_t>(subset)});
    auto fill = [&](std::vector<TokenSeq>& out, int count) {
      while (static_cast<int>(out.size()) < count) out.push_back({mint.fresh(rng)});
    };
    fill(lex.train_values, 30);
    fill(lex.eval_values, 30);
    fill(lex.registry_values, 8);
    return lex;
  }

  const int n_mods = kind == LexiconKind::Closed ? 3 : 6;
  const int n_heads = kind == LexiconKind::Closed ? 2 : 3;

  // Heads are per (concept, subset), like the modifiers: two intents bound to
  // the same concept never share value tokens, which keeps zero-shot value
  // vocabularies genuinely unseen.
  Rng rng = base.derived({Rng::hash("lexicon"), Rng::hash(concept_name),
                          static_cast<std::uint64_t>(subset)});
  std::vector<std::string> heads, mods;
  for (int h = 0; h < n_heads; ++h) heads.push_back(mint.fresh(rng));
  for (int m = 0; m < n_mods; ++m) mods.push_back(mint.fresh(rng));

  // Diagonal partition of the pairing grid: every modifier and head occurs in
  // the training values, and the eval values are unseen pairings of the same
  // tokens. With only two heads there is no third diagonal, so the registry
  // republishes the training values (they are never eval gold).
  for (int m = 0; m < n_mods; ++m) {
    lex.train_values.push_back({mods[m], heads[m % n_heads]});
    lex.eval_values.push_back({mods[m], heads[(m + 1) % n_heads]});
    if (n_heads >= 3) lex.registry_values.push_back({mods[m], heads[(m + 2) % n_heads]});
  }
  if (lex.registry_values.empty()) lex.registry_values = lex.train_values;
  return lex;
}

}  // namespace synth_detail

inline SynthCorpus generate(const SynthSpec& spec) {
  if (spec.intents.empty()) throw ConfigError("generate: no intents in spec");

  synth_detail::WordMint mint;
  std::map<std::pair<std::string, int>, synth_detail::Lexicon> lexicons;
  auto lexicon_for = [&](const SynthSlot& slot) -> const synth_detail::Lexicon& {
    auto key = std::make_pair(slot.concept_name, slot.subset);
    auto it = lexicons.find(key);
    if (it == lexicons.end()) {
      it = lexicons
               .emplace(key, synth_detail::build_lexicon(slot.concept_name, slot.kind, slot.subset,
                                                         mint, spec.seed))
               .first;
      if (it->second.train_values.empty())
        throw ConfigError("generate: empty lexicon for concept '" + slot.concept_name + "'");
    }
    return it->second;
  };
  std::map<std::string, std::string>* word_groups = nullptr;  // bound below
  auto record_group = [&](const TokenSeq& value, const std::string& group) {
    for (const auto& tok : value) word_groups->emplace(tok, group);
  };

  static const TokenSeq kGlue = {"the", "a", "to", "for", "with", "please", "set", "near"};

  SynthCorpus corpus;
  corpus.train.split = "train";
  corpus.eval.split = "eval";
  word_groups = &corpus.word_groups;

  // Carrier words are shared across intents (context that transfers to the
  // held-out intent); only slot values distinguish the lexicons.
  std::vector<std::string> carriers;
  {
    Rng rng = Rng(spec.seed).derived({Rng::hash("carriers")});
    while (carriers.size() < 10) carriers.push_back(mint.fresh(rng));
  }
  record_group(carriers, "common");
  record_group(kGlue, "common");

  for (const auto& intent : spec.intents) {
    if (intent.slots.empty()) throw ConfigError("generate: intent without slots");

    auto registry_entries = [&](const std::vector<SynthSlot>& slots) {
      std::vector<SlotSchema> entries;
      for (const auto& slot : slots) {
        const auto& lex = lexicon_for(slot);
        SlotSchema schema;
        schema.name = slot.name;
        schema.description = tokenize_slot_name(slot.name);
        const int n = std::min<int>(spec.registry_examples,
                                    static_cast<int>(lex.registry_values.size()));
        schema.examples.assign(lex.registry_values.begin(), lex.registry_values.begin() + n);
        entries.push_back(std::move(schema));
      }
      return entries;
    };

    const std::vector<SynthSlot>& eval_slots =
        intent.eval_slots.empty() ? intent.slots : intent.eval_slots;
    corpus.train.registry[intent.name] = registry_entries(intent.slots);
    corpus.eval.registry[intent.name] = registry_entries(eval_slots);

    auto make_frames = [&](Dataset& out, const std::vector<SynthSlot>& slots, int count,
                           const char* side, bool eval_values) {
      for (int i = 0; i < count; ++i) {
        Rng rng = Rng(spec.seed).derived({Rng::hash("frame"), Rng::hash(intent.name),
                                          Rng::hash(side), static_cast<std::uint64_t>(i)});
        Frame frame;
        frame.intent = intent.name;
        std::size_t n_slots = 1;
        if (slots.size() >= 2) {
          const double roll = rng.next_real();
          n_slots = roll < 0.1 ? 0 : (roll < 0.45 ? 1 : 2);
        }
        auto chosen = rng.sample_indices(slots.size(), n_slots);

        frame.tokens.push_back(carriers[rng.below(carriers.size())]);
        if (rng.next_real() < 0.5) frame.tokens.push_back(kGlue[rng.below(kGlue.size())]);
        for (std::size_t slot_idx : chosen) {
          const SynthSlot& slot = slots[slot_idx];
          const auto& lex = lexicon_for(slot);
          const auto& values = eval_values ? lex.eval_values : lex.train_values;
          if (rng.next_real() < 0.5) frame.tokens.push_back(kGlue[rng.below(kGlue.size())]);
          const TokenSeq& value = values[rng.below(values.size())];
          const int start = static_cast<int>(frame.tokens.size());
          frame.tokens.insert(frame.tokens.end(), value.begin(), value.end());
          frame.annotations.push_back({slot.name, start, start + static_cast<int>(value.size())});
          if (rng.next_real() < 0.7) frame.tokens.push_back(carriers[rng.below(carriers.size())]);
        }
        if (rng.next_real() < 0.5) frame.tokens.push_back(kGlue[rng.below(kGlue.size())]);
        out.frames.push_back(std::move(frame));
      }
    };

    make_frames(corpus.train, intent.slots, intent.train_frames, "train", false);
    make_frames(corpus.eval, eval_slots, intent.eval_frames, "eval", true);
  }

  for (const auto& [key, lex] : lexicons) {
    for (const auto* part : {&lex.train_values, &lex.eval_values, &lex.registry_values})
      for (const auto& value : *part) record_group(value, key.first);
  }

  validate_dataset(corpus.train);
  validate_dataset(corpus.eval);
  return corpus;
}

// Synthetic stand-in for a pretrained embedding table: words of one lexicon
// group share a cluster center plus per-word noise, everything else gets an
// independent vector. Written in the standard embedding-file format.
inline void save_synth_embeddings(const SynthCorpus& corpus, int dim, const std::string& path,
                                  std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out << corpus.word_groups.size() << " " << dim << "\n";
  out.precision(6);
  for (const auto& [word, group] : corpus.word_groups) {
    Rng center_rng = Rng(seed).derived({Rng::hash("center"), Rng::hash(group)});
    Rng noise_rng = Rng(seed).derived({Rng::hash("noise"), Rng::hash(word)});
    out << word;
    for (int i = 0; i < dim; ++i) {
      double v = group == "common" ? noise_rng.uniform(-0.4, 0.4)
                                   : center_rng.uniform(-0.4, 0.4) + noise_rng.uniform(-0.12, 0.12);
      out << " " << v;
    }
    out << "\n";
  }
  if (!out) throw FormatError("short write to '" + path + "'");
}

// ---------------------------------------------------------------------------
// Canned testbeds.

// Zero-shot transfer: the closed slots itemA/itemB are two subsets of one
// concept, so they sit in the same embedding region and only their value
// inventories tell them apart. Across the two training intents the subset
// bindings are swapped, which makes the slot name alone uninformative about
// the inventory: fitting the training data requires consulting the
// conditioning values. The held-out intent binds two fresh subsets, giving
// disjoint train/eval values. prop and code add compositional and open
// vocabulary types that transfer through the shared region for any model.
inline SynthSpec transfer_testbed_spec(std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  const int subsets[3][2] = {{0, 1}, {1, 0}, {2, 3}};
  for (int i = 0; i < 3; ++i) {
    SynthIntent intent;
    intent.name = "task" + std::to_string(i);
    intent.slots = {{"itemA", "itemfam", LexiconKind::Closed, subsets[i][0]},
                    {"itemB", "itemfam", LexiconKind::Closed, subsets[i][1]},
                    {"prop", "propfam", LexiconKind::Compositional, i},
                    {"code", "codefam", LexiconKind::Open, i}};
    intent.train_frames = 60;
    intent.eval_frames = 30;
    spec.intents.push_back(std::move(intent));
  }
  return spec;
}

inline const char* transfer_testbed_target() { return "task2"; }

// Misaligned schemas: alpha and beta are bound to two subsets of the same
// concept, with opposite bindings in the two training forms (the same name
// labels different inventories on different forms, as with colliding web-form
// fields). The evaluation schema of form0 swaps its pair relative to its
// training schema, so a name-keyed model tags the wrong span while the
// schema-published example values identify the right one.
inline SynthSpec misaligned_testbed_spec(std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.registry_examples = 6;
  for (int i = 0; i < 2; ++i) {
    SynthIntent intent;
    intent.name = "form" + std::to_string(i);
    intent.slots = {{"alpha", "famX", LexiconKind::Compositional, i},
                    {"beta", "famX", LexiconKind::Compositional, 1 - i}};
    intent.train_frames = 80;
    intent.eval_frames = i == 0 ? 40 : 0;
    if (i == 0)
      intent.eval_slots = {{"alpha", "famX", LexiconKind::Compositional, 1},
                           {"beta", "famX", LexiconKind::Compositional, 0}};
    spec.intents.push_back(std::move(intent));
  }
  return spec;
}

inline const char* misaligned_testbed_target() { return "form0"; }

}  // namespace slotfill
