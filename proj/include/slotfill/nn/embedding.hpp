// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <type_traits>
#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "slotfill/corpus.hpp"
#include "slotfill/nn/core.hpp"

namespace slotfill::nn {

// Fixed (by default) word embedding table. Column 0 is the OOV row; the
// reserved value token has its own trainable row outside the table. Lookups
// are case-insensitive.
template <typename S>
struct WordTable {
  Mat<S> table;                                  // d_w x V, col 0 = OOV
  Vec<S> val_row;                                // row for the reserved token
  std::unordered_map<std::string, int> vocab;    // lowercased word -> column
  bool trainable = false;

  int dim() const { return static_cast<int>(table.rows()); }

  static std::string normalize(const std::string& token) {
    std::string key = token;
    for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return key;
  }

  // Column index for a token; -1 selects the reserved value row.
  int lookup(const std::string& token) const {
    if (token == kValueToken) return -1;
    auto it = vocab.find(normalize(token));
    return it == vocab.end() ? 0 : it->second;
  }

  Vec<S> row(int index) const { return index < 0 ? val_row : Vec<S>(table.col(index)); }

  template <typename F>
  void visit_trainable(F&& f) {
    f("word.val_row", val_row);
    if (trainable) f("word.table", table);
  }
  template <typename F>
  void visit_all(F&& f) {
    f("word.val_row", val_row);
    f("word.table", table);
  }
};

// Builds a seed-initialized table over the given words (fallback for when no
// pretrained embedding file is supplied).
template <typename S>
inline WordTable<S> random_word_table(const std::vector<std::string>& words, int dim,
                                      std::uint64_t seed) {
  WordTable<S> wt;
  std::vector<std::string> keys;
  for (const auto& w : words) {
    if (w == kValueToken) continue;
    std::string k = WordTable<S>::normalize(w);
    if (!k.empty() && !wt.vocab.count(k)) {
      wt.vocab[k] = static_cast<int>(keys.size()) + 1;
      keys.push_back(k);
    }
  }
  wt.table.resize(dim, static_cast<int>(keys.size()) + 1);
  wt.val_row.resize(dim);
  Rng rng = Rng(seed).derived({Rng::hash("word-table")});
  for (Eigen::Index c = 0; c < wt.table.cols(); ++c)
    for (Eigen::Index r = 0; r < dim; ++r) wt.table(r, c) = static_cast<S>(rng.uniform(-0.1, 0.1));
  for (Eigen::Index r = 0; r < dim; ++r) wt.val_row(r) = static_cast<S>(rng.uniform(-0.1, 0.1));
  return wt;
}

// ---------------------------------------------------------------------------
// Character CNN: byte-level embeddings, two valid convolutions of width 3
// with ReLU, max-over-time pooling to a fixed d_c output. Inputs shorter than
// the window are left-zero-padded. The reserved value token maps to a single
// dedicated symbol.

inline constexpr int kCharVocab = 257;  // 256 byte values + the reserved symbol
inline constexpr int kCharWidth = 3;

template <typename S>
struct CharCnn {
  Mat<S> char_emb;  // d_ce x kCharVocab
  Mat<S> w1;        // ch x (d_ce * width)
  Vec<S> b1;
  Mat<S> w2;        // d_c x (ch * width)
  Vec<S> b2;

  int out_dim() const { return static_cast<int>(w2.rows()); }

  static std::vector<int> token_ids(const std::string& token) {
    if (token == kValueToken) return {256};
    std::vector<int> ids;
    ids.reserve(token.size());
    for (unsigned char c : token) ids.push_back(c);
    return ids;
  }

  template <typename F>
  void visit_trainable(F&& f) {
    f("cnn.char_emb", char_emb);
    f("cnn.w1", w1);
    f("cnn.b1", b1);
    f("cnn.w2", w2);
    f("cnn.b2", b2);
  }
};

template <typename S>
inline CharCnn<S> make_char_cnn(int char_emb_dim, int out_dim) {
  CharCnn<S> cnn;
  cnn.char_emb.setZero(char_emb_dim, kCharVocab);
  cnn.w1.setZero(out_dim, char_emb_dim * kCharWidth);
  cnn.b1.setZero(out_dim);
  cnn.w2.setZero(out_dim, out_dim * kCharWidth);
  cnn.b2.setZero(out_dim);
  return cnn;
}

template <typename S>
struct CharCnnCache {
  std::vector<int> ids;
  Mat<S> x0;  // padded char embeddings
  Mat<S> z1, a1;
  Mat<S> x1;  // padded a1
  Mat<S> z2, a2;
  std::vector<Eigen::Index> argmax;
};

namespace detail {

template <typename S>
inline void conv_valid(const Mat<S>& w, const Vec<S>& b, const Mat<S>& x, Mat<S>& z) {
  const Eigen::Index in_dim = x.rows();
  const Eigen::Index out_len = x.cols() - kCharWidth + 1;
  z.resize(w.rows(), out_len);
  Vec<S> window(in_dim * kCharWidth);
  for (Eigen::Index j = 0; j < out_len; ++j) {
    for (int t = 0; t < kCharWidth; ++t) window.segment(t * in_dim, in_dim) = x.col(j + t);
    z.col(j).noalias() = w * window;
    z.col(j) += b;
  }
}

template <typename S>
inline void conv_valid_backward(const Mat<S>& w, const Mat<S>& x, const Mat<S>& dz, Mat<S>& dw,
                                Vec<S>& db, Mat<S>& dx) {
  const Eigen::Index in_dim = x.rows();
  dx.setZero(x.rows(), x.cols());
  Vec<S> window(in_dim * kCharWidth);
  for (Eigen::Index j = 0; j < dz.cols(); ++j) {
    for (int t = 0; t < kCharWidth; ++t) window.segment(t * in_dim, in_dim) = x.col(j + t);
    dw.noalias() += dz.col(j) * window.transpose();
    db += dz.col(j);
    Vec<S> dwin = w.transpose() * dz.col(j);
    for (int t = 0; t < kCharWidth; ++t) dx.col(j + t) += dwin.segment(t * in_dim, in_dim);
  }
}

// Left-zero-pad a (d x n) sequence to at least the convolution width.
template <typename S>
inline Mat<S> pad_left(const Mat<S>& x) {
  if (x.cols() >= kCharWidth) return x;
  Mat<S> padded = Mat<S>::Zero(x.rows(), kCharWidth);
  padded.rightCols(x.cols()) = x;
  return padded;
}

}  // namespace detail

template <typename S>
inline Vec<S> char_cnn_forward(const CharCnn<S>& cnn, const std::string& token,
                               std::type_identity_t<CharCnnCache<S>*> cache = nullptr) {
  if (token.empty()) throw InvalidToken("char_cnn_forward: empty token");
  std::vector<int> ids = CharCnn<S>::token_ids(token);
  Mat<S> chars(cnn.char_emb.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) chars.col(i) = cnn.char_emb.col(ids[i]);

  Mat<S> x0 = detail::pad_left(chars);
  Mat<S> z1;
  detail::conv_valid(cnn.w1, cnn.b1, x0, z1);
  Mat<S> a1 = z1.cwiseMax(S(0));
  Mat<S> x1 = detail::pad_left(a1);
  Mat<S> z2;
  detail::conv_valid(cnn.w2, cnn.b2, x1, z2);
  Mat<S> a2 = z2.cwiseMax(S(0));

  Vec<S> out(cnn.out_dim());
  std::vector<Eigen::Index> argmax(cnn.out_dim());
  for (Eigen::Index c = 0; c < out.size(); ++c) {
    Eigen::Index best = 0;
    a2.row(c).maxCoeff(&best);
    argmax[c] = best;
    out(c) = a2(c, best);
  }
  if (cache) {
    cache->ids = std::move(ids);
    cache->x0 = std::move(x0);
    cache->z1 = std::move(z1);
    cache->a1 = std::move(a1);
    cache->x1 = std::move(x1);
    cache->z2 = std::move(z2);
    cache->a2 = std::move(a2);
    cache->argmax = std::move(argmax);
  }
  return out;
}

template <typename S>
inline void char_cnn_backward(const CharCnn<S>& cnn, const CharCnnCache<S>& cache,
                              const Vec<S>& grad_out, CharCnn<S>& grads) {
  Mat<S> dz2 = Mat<S>::Zero(cache.z2.rows(), cache.z2.cols());
  for (Eigen::Index c = 0; c < grad_out.size(); ++c)
    if (cache.z2(c, cache.argmax[c]) > S(0)) dz2(c, cache.argmax[c]) = grad_out(c);

  Mat<S> dx1;
  detail::conv_valid_backward(cnn.w2, cache.x1, dz2, grads.w2, grads.b2, dx1);

  const Eigen::Index pad1 = cache.x1.cols() - cache.a1.cols();
  Mat<S> dz1 = dx1.rightCols(cache.a1.cols());
  dz1 = (cache.z1.array() > S(0)).template cast<S>() * dz1.array();

  Mat<S> dx0;
  detail::conv_valid_backward(cnn.w1, cache.x0, dz1, grads.w1, grads.b1, dx0);

  const Eigen::Index real_len = static_cast<Eigen::Index>(cache.ids.size());
  const Eigen::Index pad0 = cache.x0.cols() - real_len;
  for (Eigen::Index i = 0; i < real_len; ++i)
    grads.char_emb.col(cache.ids[i]) += dx0.col(pad0 + i);
  (void)pad1;
}

// ---------------------------------------------------------------------------
// Token embedding: word row concatenated with the char-CNN output.

template <typename S>
struct EmbedParams {
  WordTable<S> word;
  CharCnn<S> cnn;

  int dim() const { return word.dim() + cnn.out_dim(); }

  template <typename F>
  void visit_trainable(F&& f) {
    word.visit_trainable(f);
    cnn.visit_trainable(f);
  }
  template <typename F>
  void visit_all(F&& f) {
    word.visit_all(f);
    cnn.visit_trainable(f);
  }
};

template <typename S>
struct EmbedCache {
  int word_index = 0;
  CharCnnCache<S> cnn;
};

template <typename S>
inline Vec<S> embed_token(const EmbedParams<S>& params, const std::string& token,
                          std::type_identity_t<EmbedCache<S>*> cache = nullptr) {
  if (token.empty()) throw InvalidToken("embed_token: empty token");
  const int d_w = params.word.dim();
  Vec<S> out(params.dim());
  int idx = params.word.lookup(token);
  out.head(d_w) = params.word.row(idx);
  out.tail(params.cnn.out_dim()) = char_cnn_forward(params.cnn, token, cache ? &cache->cnn : nullptr);
  if (cache) cache->word_index = idx;
  return out;
}

template <typename S>
inline void embed_backward(const EmbedParams<S>& params, const EmbedCache<S>& cache,
                           const Vec<S>& grad, EmbedParams<S>& grads) {
  const int d_w = params.word.dim();
  if (cache.word_index < 0)
    grads.word.val_row += grad.head(d_w);
  else if (params.word.trainable)
    grads.word.table.col(cache.word_index) += grad.head(d_w);
  char_cnn_backward(params.cnn, cache.cnn, Vec<S>(grad.tail(params.cnn.out_dim())), grads.cnn);
}

}  // namespace slotfill::nn
