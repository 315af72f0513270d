// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "slotfill/corpus.hpp"
#include "slotfill/nn/attention.hpp"
#include "slotfill/nn/core.hpp"
#include "slotfill/nn/embedding.hpp"
#include "slotfill/nn/rnn.hpp"

namespace slotfill {

// Conditional sequence tagger: a BiGRU encodes the utterance, the slot
// description is mean-pooled, example values are mean-pooled and attended
// per utterance token, and a BiLSTM over the concatenation feeds a 3-way IOB
// classifier. The description-only ablation disables example conditioning
// and genuinely shrinks the tagger input.
struct ModelConfig {
  bool use_examples = true;
  bool use_description = true;
  int d_w = 128;
  int d_c = 32;
  int d_en = 128;
  int char_emb_dim = 16;
  double dropout = 0.0;
  bool train_word_embeddings = false;

  int d_wc() const { return d_w + d_c; }
  int tagger_input_dim() const {
    return d_en + (use_description ? d_wc() : 0) + (use_examples ? d_wc() : 0);
  }

  void validate() const {
    if (!use_examples && !use_description)
      throw ConfigError("model: at least one of use_examples/use_description must be set");
    if (d_w < 1 || d_c < 1 || d_en < 2 || char_emb_dim < 1)
      throw ConfigError("model: dimensions must be positive");
    if (d_en % 2 != 0) throw ConfigError("model: d_en must be even (split across directions)");
    if (dropout < 0.0 || dropout > 0.95) throw ConfigError("model: dropout must be in [0, 0.95]");
  }
};

template <typename S>
struct ModelParams {
  ModelConfig cfg;
  nn::EmbedParams<S> embed;
  nn::BiGru<S> utt_rnn;
  nn::Mat<S> attn_w;  // d_en x d_wc; empty when examples are disabled
  nn::BiLstm<S> tagger_rnn;
  nn::ClassifierParams<S> out;

  template <typename F>
  void visit_trainable(F&& f) {
    embed.visit_trainable(f);
    utt_rnn.visit(std::string("utt_gru"), f);
    if (cfg.use_examples) f("attn.w", attn_w);
    tagger_rnn.visit(std::string("tagger_lstm"), f);
    out.visit(f);
  }

  template <typename F>
  void visit_all(F&& f) {
    embed.visit_all(f);
    utt_rnn.visit(std::string("utt_gru"), f);
    if (cfg.use_examples) f("attn.w", attn_w);
    tagger_rnn.visit(std::string("tagger_lstm"), f);
    out.visit(f);
  }

  std::vector<nn::ParamRef<S>> trainable_refs() {
    std::vector<nn::ParamRef<S>> refs;
    visit_trainable([&](const std::string& n, auto& arr) { nn::append_ref(refs, n, arr); });
    return refs;
  }
  std::vector<nn::ParamRef<S>> all_refs() {
    std::vector<nn::ParamRef<S>> refs;
    visit_all([&](const std::string& n, auto& arr) { nn::append_ref(refs, n, arr); });
    return refs;
  }
};

// Allocates all arrays for the configuration and initializes the trainable
// ones uniformly in (-0.1, 0.1). The word table is installed as given.
template <typename S>
inline ModelParams<S> make_model(const ModelConfig& cfg, nn::WordTable<S> word_table,
                                 std::uint64_t seed) {
  cfg.validate();
  if (word_table.dim() != cfg.d_w) throw ShapeError("make_model: word table dimension mismatch");
  ModelParams<S> p;
  p.cfg = cfg;
  p.cfg.validate();
  p.embed.word = std::move(word_table);
  p.embed.word.trainable = cfg.train_word_embeddings;
  p.embed.cnn = nn::make_char_cnn<S>(cfg.char_emb_dim, cfg.d_c);
  const int half = cfg.d_en / 2;
  p.utt_rnn.fwd = nn::make_gru<S>(cfg.d_wc(), half);
  p.utt_rnn.bwd = nn::make_gru<S>(cfg.d_wc(), half);
  if (cfg.use_examples) p.attn_w.setZero(cfg.d_en, cfg.d_wc());
  p.tagger_rnn.fwd = nn::make_lstm<S>(cfg.tagger_input_dim(), half);
  p.tagger_rnn.bwd = nn::make_lstm<S>(cfg.tagger_input_dim(), half);
  p.out.w.setZero(3, cfg.d_en);
  p.out.b.setZero(3);
  nn::init_uniform(p.trainable_refs(), Rng(seed).derived({Rng::hash("init")}));
  return p;
}

// Same shapes, all arrays zero; used as a gradient accumulator.
template <typename S>
inline ModelParams<S> zeros_like(const ModelParams<S>& params) {
  ModelParams<S> g;
  g.cfg = params.cfg;
  g.embed.word.vocab = params.embed.word.vocab;
  g.embed.word.trainable = params.embed.word.trainable;
  g.embed.word.table.setZero(params.embed.word.table.rows(), params.embed.word.table.cols());
  g.embed.word.val_row.setZero(params.embed.word.val_row.size());
  g.embed.cnn = nn::make_char_cnn<S>(static_cast<int>(params.embed.cnn.char_emb.rows()),
                                     params.embed.cnn.out_dim());
  auto zero_gru = [](const nn::GruParams<S>& src) {
    return nn::make_gru<S>(src.input(), src.hidden());
  };
  auto zero_lstm = [](const nn::LstmParams<S>& src) {
    return nn::make_lstm<S>(src.input(), src.hidden());
  };
  g.utt_rnn.fwd = zero_gru(params.utt_rnn.fwd);
  g.utt_rnn.bwd = zero_gru(params.utt_rnn.bwd);
  g.attn_w.setZero(params.attn_w.rows(), params.attn_w.cols());
  g.tagger_rnn.fwd = zero_lstm(params.tagger_rnn.fwd);
  g.tagger_rnn.bwd = zero_lstm(params.tagger_rnn.bwd);
  g.out.w.setZero(params.out.w.rows(), params.out.w.cols());
  g.out.b.setZero(params.out.b.size());
  return g;
}

template <typename S>
inline void zero_grads(ModelParams<S>& grads) {
  grads.visit_all([](const std::string&, auto& arr) { arr.setZero(); });
}

// ---------------------------------------------------------------------------
// Forward pass with cached activations for backward.

template <typename S>
struct ForwardCache {
  TokenSeq tokens;
  TokenSeq desc_sorted;
  std::vector<TokenSeq> examples_sorted;

  std::vector<nn::EmbedCache<S>> utt_emb;
  std::vector<nn::EmbedCache<S>> desc_emb;
  std::vector<std::vector<nn::EmbedCache<S>>> ex_emb;

  nn::Mat<S> u;  // d_wc x T
  nn::BiGruCache<S> utt_rnn;
  nn::Mat<S> h;        // d_en x T
  nn::Vec<S> desc;     // d_wc (if enabled)
  nn::Mat<S> ex;       // d_wc x K (if enabled)
  nn::AttentionCache<S> attn;
  nn::Mat<S> ea;       // d_wc x T (if enabled)
  nn::Mat<S> tag_in;   // tagger input
  nn::Mat<S> drop_mask;  // same shape as tag_in when dropout is active
  nn::BiLstmCache<S> tagger;
  nn::Mat<S> x;        // d_en x T
  nn::Mat<S> probs;    // 3 x T
};

namespace detail {

// Examples and description tokens are consumed in a canonical sorted order,
// which makes the forward pass bit-exactly invariant to input permutation
// (mean pooling and the attention sum are order-free mathematically; sorting
// removes the floating-point summation-order dependence too).
inline std::vector<TokenSeq> canonical_examples(const std::vector<TokenSeq>& examples) {
  std::vector<TokenSeq> sorted = examples;
  std::sort(sorted.begin(), sorted.end());
  return sorted;
}

inline TokenSeq canonical_description(const TokenSeq& desc) {
  TokenSeq sorted = desc;
  std::sort(sorted.begin(), sorted.end());
  return sorted;
}

}  // namespace detail

template <typename S>
inline nn::Mat<S> embed_sequence(const nn::EmbedParams<S>& embed, const TokenSeq& tokens,
                                 std::vector<nn::EmbedCache<S>>* caches) {
  nn::Mat<S> out(embed.dim(), static_cast<Eigen::Index>(tokens.size()));
  if (caches) caches->resize(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) =
        nn::embed_token(embed, tokens[i], caches ? &(*caches)[i] : nullptr);
  return out;
}

template <typename S>
inline nn::Mat<S> forward(const ModelParams<S>& params, const TokenSeq& tokens,
                          const SlotSchema& schema, const std::vector<TokenSeq>& examples,
                          ForwardCache<S>* cache = nullptr, Rng* dropout_rng = nullptr) {
  const ModelConfig& cfg = params.cfg;
  if (tokens.empty()) throw EmptyInput("forward: empty utterance");
  if (cfg.use_examples && examples.empty())
    throw EmptyExamples("forward: example conditioning enabled but no examples given");
  if (cfg.use_description && schema.description.empty())
    throw EmptyDescription("forward: description conditioning enabled but description is empty");

  const Eigen::Index t_len = static_cast<Eigen::Index>(tokens.size());
  ForwardCache<S> local;
  ForwardCache<S>& c = cache ? *cache : local;
  c.tokens = tokens;

  c.u = embed_sequence(params.embed, tokens, &c.utt_emb);
  c.h = nn::bi_gru_forward(params.utt_rnn, c.u, &c.utt_rnn);

  Eigen::Index row = cfg.d_en;
  c.tag_in.resize(cfg.tagger_input_dim(), t_len);
  c.tag_in.topRows(cfg.d_en) = c.h;

  if (cfg.use_description) {
    c.desc_sorted = detail::canonical_description(schema.description);
    nn::Mat<S> d = embed_sequence(params.embed, c.desc_sorted, &c.desc_emb);
    c.desc = nn::mean_pool(d);
    c.tag_in.middleRows(row, cfg.d_wc()).colwise() = c.desc;
    row += cfg.d_wc();
  }

  if (cfg.use_examples) {
    c.examples_sorted = detail::canonical_examples(examples);
    for (const auto& value : c.examples_sorted)
      if (value.empty()) throw EmptyExamples("forward: example value with no tokens");
    const Eigen::Index k = static_cast<Eigen::Index>(c.examples_sorted.size());
    c.ex.resize(cfg.d_wc(), k);
    c.ex_emb.resize(c.examples_sorted.size());
    for (Eigen::Index j = 0; j < k; ++j) {
      nn::Mat<S> e = embed_sequence(params.embed, c.examples_sorted[j], &c.ex_emb[j]);
      c.ex.col(j) = nn::mean_pool(e);
    }
    c.ea = nn::attend_all(params.attn_w, c.h, c.ex, &c.attn);
    c.tag_in.middleRows(row, cfg.d_wc()) = c.ea;
    row += cfg.d_wc();
  }

  if (cfg.dropout > 0.0 && dropout_rng) {
    const S keep = static_cast<S>(1.0 - cfg.dropout);
    c.drop_mask.resize(c.tag_in.rows(), c.tag_in.cols());
    for (Eigen::Index j = 0; j < c.drop_mask.cols(); ++j)
      for (Eigen::Index i = 0; i < c.drop_mask.rows(); ++i)
        c.drop_mask(i, j) = dropout_rng->next_real() < cfg.dropout ? S(0) : S(1) / keep;
    c.tag_in = c.tag_in.cwiseProduct(c.drop_mask);
  } else {
    c.drop_mask.resize(0, 0);
  }

  c.x = nn::bi_lstm_forward(params.tagger_rnn, c.tag_in, &c.tagger);
  c.probs.resize(3, t_len);
  for (Eigen::Index t = 0; t < t_len; ++t)
    c.probs.col(t) = nn::softmax(nn::Vec<S>(params.out.w * c.x.col(t) + params.out.b));
  return c.probs;
}

// Cross-entropy averaged over utterance tokens. Probabilities at the gold
// label are clamped at 1e-12; clamp events are counted when a counter is
// supplied.
template <typename S>
inline S loss(const nn::Mat<S>& probs, const std::vector<Tag>& tags, long* clamp_count = nullptr) {
  if (static_cast<std::size_t>(probs.cols()) != tags.size())
    throw ShapeError("loss: tag/probability length mismatch");
  S total = S(0);
  for (Eigen::Index t = 0; t < probs.cols(); ++t) {
    S p = probs(static_cast<int>(tags[t]), t);
    if (p < S(1e-12)) {
      p = S(1e-12);
      if (clamp_count) ++(*clamp_count);
    }
    total -= std::log(p);
  }
  return total / static_cast<S>(probs.cols());
}

// Backward pass for loss(forward(...)); accumulates into grads.
template <typename S>
inline void backward(const ModelParams<S>& params, const ForwardCache<S>& cache,
                     const std::vector<Tag>& tags, ModelParams<S>& grads) {
  const ModelConfig& cfg = params.cfg;
  const Eigen::Index t_len = cache.probs.cols();

  nn::Mat<S> dlogits = cache.probs;
  for (Eigen::Index t = 0; t < t_len; ++t) dlogits(static_cast<int>(tags[t]), t) -= S(1);
  dlogits /= static_cast<S>(t_len);

  grads.out.w.noalias() += dlogits * cache.x.transpose();
  grads.out.b += dlogits.rowwise().sum();
  nn::Mat<S> dx = params.out.w.transpose() * dlogits;

  nn::Mat<S> dtag_in = nn::bi_lstm_backward(params.tagger_rnn, cache.tagger, dx, grads.tagger_rnn);
  if (cache.drop_mask.size() > 0) dtag_in = dtag_in.cwiseProduct(cache.drop_mask);

  nn::Mat<S> dh = dtag_in.topRows(cfg.d_en);
  Eigen::Index row = cfg.d_en;

  if (cfg.use_description) {
    nn::Vec<S> ddesc = dtag_in.middleRows(row, cfg.d_wc()).rowwise().sum();
    const S scale = S(1) / static_cast<S>(cache.desc_sorted.size());
    nn::Vec<S> per_token = ddesc * scale;
    for (std::size_t i = 0; i < cache.desc_sorted.size(); ++i)
      nn::embed_backward(params.embed, cache.desc_emb[i], per_token, grads.embed);
    row += cfg.d_wc();
  }

  if (cfg.use_examples) {
    nn::Mat<S> dea = dtag_in.middleRows(row, cfg.d_wc());
    nn::Mat<S> dex = nn::Mat<S>::Zero(cache.ex.rows(), cache.ex.cols());
    dh += nn::attend_all_backward(params.attn_w, cache.h, cache.ex, cache.attn, dea,
                                  grads.attn_w, dex);
    for (std::size_t k = 0; k < cache.examples_sorted.size(); ++k) {
      const S scale = S(1) / static_cast<S>(cache.examples_sorted[k].size());
      nn::Vec<S> per_token = dex.col(static_cast<Eigen::Index>(k)) * scale;
      for (std::size_t i = 0; i < cache.examples_sorted[k].size(); ++i)
        nn::embed_backward(params.embed, cache.ex_emb[k][i], per_token, grads.embed);
    }
  }

  nn::Mat<S> du = nn::bi_gru_backward(params.utt_rnn, cache.utt_rnn, dh, grads.utt_rnn);
  for (std::size_t i = 0; i < cache.tokens.size(); ++i)
    nn::embed_backward(params.embed, cache.utt_emb[i],
                       nn::Vec<S>(du.col(static_cast<Eigen::Index>(i))), grads.embed);
}

// ---------------------------------------------------------------------------
// Decoding: per-token arg max, maximal B/I runs become spans; a stray I
// (sequence start or following O) is repaired to B.

template <typename S>
inline std::vector<Tag> argmax_tags(const nn::Mat<S>& probs) {
  std::vector<Tag> tags(probs.cols());
  for (Eigen::Index t = 0; t < probs.cols(); ++t) {
    Eigen::Index best = 0;
    probs.col(t).maxCoeff(&best);
    tags[t] = static_cast<Tag>(best);
  }
  return tags;
}

inline std::vector<std::pair<int, int>> decode_tags(const std::vector<Tag>& tags) {
  std::vector<std::pair<int, int>> spans;
  int start = -1;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == Tag::B || (tags[i] == Tag::I && start < 0)) {
      if (start >= 0) spans.emplace_back(start, static_cast<int>(i));
      start = static_cast<int>(i);
    } else if (tags[i] == Tag::O && start >= 0) {
      spans.emplace_back(start, static_cast<int>(i));
      start = -1;
    }
  }
  if (start >= 0) spans.emplace_back(start, static_cast<int>(tags.size()));
  return spans;
}

template <typename S>
inline std::vector<std::pair<int, int>> decode(const nn::Mat<S>& probs) {
  return decode_tags(argmax_tags(probs));
}

}  // namespace slotfill
