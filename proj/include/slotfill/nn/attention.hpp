// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>

#include "slotfill/nn/core.hpp"

namespace slotfill::nn {

// Bilinear ("general") attention over K example encodings with a context
// vector h: score_k = h' Wa e_k, weights = softmax(scores), context = sum of
// weighted encodings.

template <typename S>
struct AttendResult {
  Vec<S> weights;  // K
  Vec<S> context;  // d_wc
};

template <typename S>
inline AttendResult<S> attend(const Mat<S>& wa, const Vec<S>& h, const Mat<S>& examples) {
  if (examples.cols() == 0) throw EmptyExamples("attend: no example encodings");
  if (h.size() != wa.rows() || examples.rows() != wa.cols())
    throw ShapeError("attend: shape mismatch");
  Vec<S> scores = examples.transpose() * (wa.transpose() * h);
  Vec<S> alpha = softmax(scores);
  return {alpha, examples * alpha};
}

// Matrix form over all utterance positions at once. H is d_en x T; examples
// d_wc x K. Returns contexts d_wc x T, with weights cached for backward.
template <typename S>
struct AttentionCache {
  Mat<S> alpha;  // K x T
};

template <typename S>
inline Mat<S> attend_all(const Mat<S>& wa, const Mat<S>& h, const Mat<S>& examples,
                         AttentionCache<S>* cache) {
  if (examples.cols() == 0) throw EmptyExamples("attend_all: no example encodings");
  Mat<S> scores = (wa * examples).transpose() * h;  // K x T
  Mat<S> alpha(scores.rows(), scores.cols());
  for (Eigen::Index t = 0; t < scores.cols(); ++t) alpha.col(t) = softmax(Vec<S>(scores.col(t)));
  if (cache) cache->alpha = alpha;
  return examples * alpha;
}

// Backward of attend_all. grad_ctx is d_wc x T; accumulates into grads_wa and
// grads_examples, returns dL/dH.
template <typename S>
inline Mat<S> attend_all_backward(const Mat<S>& wa, const Mat<S>& h, const Mat<S>& examples,
                                  const AttentionCache<S>& cache, const Mat<S>& grad_ctx,
                                  Mat<S>& grads_wa, Mat<S>& grads_examples) {
  const Mat<S>& alpha = cache.alpha;
  Mat<S> dalpha = examples.transpose() * grad_ctx;  // K x T
  Mat<S> dscores(alpha.rows(), alpha.cols());
  for (Eigen::Index t = 0; t < alpha.cols(); ++t) {
    S dot = alpha.col(t).dot(dalpha.col(t));
    dscores.col(t) = alpha.col(t).cwiseProduct(dalpha.col(t) - Vec<S>::Constant(alpha.rows(), dot));
  }
  grads_examples.noalias() += grad_ctx * alpha.transpose();
  grads_examples.noalias() += (wa.transpose() * h) * dscores.transpose();
  grads_wa.noalias() += h * dscores.transpose() * examples.transpose();
  return wa * examples * dscores;  // dL/dH, d_en x T
}

// ---------------------------------------------------------------------------
// 3-way tag classifier: probs = softmax(Wt x + bt).

template <typename S>
struct ClassifierParams {
  Mat<S> w;  // 3 x d_en
  Vec<S> b;  // 3

  template <typename F>
  void visit(F&& f) {
    f("tagger_out.w", w);
    f("tagger_out.b", b);
  }
};

template <typename S>
inline Vec<S> classify(const ClassifierParams<S>& p, const Vec<S>& x) {
  if (x.size() != p.w.cols()) throw ShapeError("classify: input dimension mismatch");
  return softmax(Vec<S>(p.w * x + p.b));
}

}  // namespace slotfill::nn
