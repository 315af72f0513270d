// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <type_traits>
#include <vector>

#include "slotfill/nn/core.hpp"

namespace slotfill::nn {

// ---------------------------------------------------------------------------
// GRU cell. Gate order in the stacked parameters is [update z; reset r;
// candidate n]:
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   n = tanh(Wn x + Un (r .* h) + bn)
//   h' = (1 - z) .* h + z .* n

template <typename S>
struct GruParams {
  Mat<S> w;  // 3H x I
  Mat<S> u;  // 3H x H
  Vec<S> b;  // 3H

  int hidden() const { return static_cast<int>(u.cols()); }
  int input() const { return static_cast<int>(w.cols()); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w", w);
    f(prefix + ".u", u);
    f(prefix + ".b", b);
  }
};

template <typename S>
inline GruParams<S> make_gru(int input, int hidden) {
  GruParams<S> p;
  p.w.setZero(3 * hidden, input);
  p.u.setZero(3 * hidden, hidden);
  p.b.setZero(3 * hidden);
  return p;
}

template <typename S>
struct GruCache {
  Mat<S> inputs;      // I x T
  Mat<S> z, r, n, h;  // H x T (h holds post-step states)
};

// States for positions 0..T-1 from a zero initial state.
template <typename S>
inline Mat<S> gru_forward(const GruParams<S>& p, const Mat<S>& inputs,
                          std::type_identity_t<GruCache<S>*> cache = nullptr) {
  const int hidden = p.hidden();
  const Eigen::Index t_len = inputs.cols();
  if (inputs.rows() != p.input()) throw ShapeError("gru_forward: input dimension mismatch");
  Mat<S> z(hidden, t_len), r(hidden, t_len), n(hidden, t_len), h(hidden, t_len);
  Vec<S> h_prev = Vec<S>::Zero(hidden);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    Vec<S> pre = p.w * inputs.col(t) + p.b;
    pre.head(2 * hidden).noalias() += p.u.topRows(2 * hidden) * h_prev;
    Vec<S> zt = pre.head(hidden).unaryExpr([](S v) { return sigmoid(v); });
    Vec<S> rt = pre.segment(hidden, hidden).unaryExpr([](S v) { return sigmoid(v); });
    Vec<S> rh = rt.cwiseProduct(h_prev);
    Vec<S> nt = (pre.tail(hidden) + p.u.bottomRows(hidden) * rh).array().tanh();
    Vec<S> ht = (Vec<S>::Ones(hidden) - zt).cwiseProduct(h_prev) + zt.cwiseProduct(nt);
    z.col(t) = zt;
    r.col(t) = rt;
    n.col(t) = nt;
    h.col(t) = ht;
    h_prev = ht;
  }
  if (cache) {
    cache->inputs = inputs;
    cache->z = z;
    cache->r = r;
    cache->n = n;
    cache->h = h;
  }
  return h;
}

// BPTT. grad_states holds dL/dh_t for every position; returns dL/dinputs and
// accumulates parameter gradients.
template <typename S>
inline Mat<S> gru_backward(const GruParams<S>& p, const GruCache<S>& cache,
                           const Mat<S>& grad_states, GruParams<S>& grads) {
  const int hidden = p.hidden();
  const Eigen::Index t_len = cache.inputs.cols();
  Mat<S> dinputs = Mat<S>::Zero(cache.inputs.rows(), t_len);
  Vec<S> carry = Vec<S>::Zero(hidden);
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    Vec<S> gh = grad_states.col(t) + carry;
    Vec<S> h_prev = t > 0 ? Vec<S>(cache.h.col(t - 1)) : Vec<S>(Vec<S>::Zero(hidden));
    Vec<S> zt = cache.z.col(t), rt = cache.r.col(t), nt = cache.n.col(t);

    Vec<S> dn = gh.cwiseProduct(zt).cwiseProduct(Vec<S>::Ones(hidden) - nt.cwiseProduct(nt));
    Vec<S> dz = gh.cwiseProduct(nt - h_prev).cwiseProduct(zt).cwiseProduct(Vec<S>::Ones(hidden) - zt);
    Vec<S> q = p.u.bottomRows(hidden).transpose() * dn;
    Vec<S> dr = q.cwiseProduct(h_prev).cwiseProduct(rt).cwiseProduct(Vec<S>::Ones(hidden) - rt);

    Vec<S> da(3 * hidden);
    da.head(hidden) = dz;
    da.segment(hidden, hidden) = dr;
    da.tail(hidden) = dn;

    grads.w.noalias() += da * cache.inputs.col(t).transpose();
    grads.u.topRows(2 * hidden).noalias() += da.head(2 * hidden) * h_prev.transpose();
    grads.u.bottomRows(hidden).noalias() += dn * rt.cwiseProduct(h_prev).transpose();
    grads.b += da;

    dinputs.col(t).noalias() = p.w.transpose() * da;
    carry = gh.cwiseProduct(Vec<S>::Ones(hidden) - zt);
    carry.noalias() += p.u.topRows(2 * hidden).transpose() * da.head(2 * hidden);
    carry += q.cwiseProduct(rt);
  }
  return dinputs;
}

// ---------------------------------------------------------------------------
// LSTM cell. Gate order [input i; forget f; candidate g; output o]:
//   i,f,o = sigmoid(.), g = tanh(.)
//   c' = f .* c + i .* g
//   h' = o .* tanh(c')

template <typename S>
struct LstmParams {
  Mat<S> w;  // 4H x I
  Mat<S> u;  // 4H x H
  Vec<S> b;  // 4H

  int hidden() const { return static_cast<int>(u.cols()); }
  int input() const { return static_cast<int>(w.cols()); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w", w);
    f(prefix + ".u", u);
    f(prefix + ".b", b);
  }
};

template <typename S>
inline LstmParams<S> make_lstm(int input, int hidden) {
  LstmParams<S> p;
  p.w.setZero(4 * hidden, input);
  p.u.setZero(4 * hidden, hidden);
  p.b.setZero(4 * hidden);
  return p;
}

template <typename S>
struct LstmCache {
  Mat<S> inputs;
  Mat<S> i, f, g, o, c, h;  // H x T
};

template <typename S>
inline Mat<S> lstm_forward(const LstmParams<S>& p, const Mat<S>& inputs,
                           std::type_identity_t<LstmCache<S>*> cache = nullptr) {
  const int hidden = p.hidden();
  const Eigen::Index t_len = inputs.cols();
  if (inputs.rows() != p.input()) throw ShapeError("lstm_forward: input dimension mismatch");
  Mat<S> gi(hidden, t_len), gf(hidden, t_len), gg(hidden, t_len), go(hidden, t_len),
      c(hidden, t_len), h(hidden, t_len);
  Vec<S> h_prev = Vec<S>::Zero(hidden), c_prev = Vec<S>::Zero(hidden);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    Vec<S> pre = p.w * inputs.col(t) + p.b;
    pre.noalias() += p.u * h_prev;
    Vec<S> it = pre.head(hidden).unaryExpr([](S v) { return sigmoid(v); });
    Vec<S> ft = pre.segment(hidden, hidden).unaryExpr([](S v) { return sigmoid(v); });
    Vec<S> gt = pre.segment(2 * hidden, hidden).array().tanh();
    Vec<S> ot = pre.tail(hidden).unaryExpr([](S v) { return sigmoid(v); });
    Vec<S> ct = ft.cwiseProduct(c_prev) + it.cwiseProduct(gt);
    Vec<S> ht = ot.cwiseProduct(Vec<S>(ct.array().tanh()));
    gi.col(t) = it;
    gf.col(t) = ft;
    gg.col(t) = gt;
    go.col(t) = ot;
    c.col(t) = ct;
    h.col(t) = ht;
    h_prev = ht;
    c_prev = ct;
  }
  if (cache) {
    cache->inputs = inputs;
    cache->i = gi;
    cache->f = gf;
    cache->g = gg;
    cache->o = go;
    cache->c = c;
    cache->h = h;
  }
  return h;
}

template <typename S>
inline Mat<S> lstm_backward(const LstmParams<S>& p, const LstmCache<S>& cache,
                            const Mat<S>& grad_states, LstmParams<S>& grads) {
  const int hidden = p.hidden();
  const Eigen::Index t_len = cache.inputs.cols();
  Mat<S> dinputs = Mat<S>::Zero(cache.inputs.rows(), t_len);
  Vec<S> carry_h = Vec<S>::Zero(hidden), carry_c = Vec<S>::Zero(hidden);
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    Vec<S> gh = grad_states.col(t) + carry_h;
    Vec<S> h_prev = t > 0 ? Vec<S>(cache.h.col(t - 1)) : Vec<S>(Vec<S>::Zero(hidden));
    Vec<S> c_prev = t > 0 ? Vec<S>(cache.c.col(t - 1)) : Vec<S>(Vec<S>::Zero(hidden));
    Vec<S> it = cache.i.col(t), ft = cache.f.col(t), gt = cache.g.col(t), ot = cache.o.col(t);
    Vec<S> tanh_c = cache.c.col(t).array().tanh();

    Vec<S> gc = carry_c + gh.cwiseProduct(ot).cwiseProduct(
                              Vec<S>(Vec<S>::Ones(hidden) - tanh_c.cwiseProduct(tanh_c)));
    Vec<S> do_ = gh.cwiseProduct(tanh_c).cwiseProduct(ot).cwiseProduct(Vec<S>::Ones(hidden) - ot);
    Vec<S> di = gc.cwiseProduct(gt).cwiseProduct(it).cwiseProduct(Vec<S>::Ones(hidden) - it);
    Vec<S> df = gc.cwiseProduct(c_prev).cwiseProduct(ft).cwiseProduct(Vec<S>::Ones(hidden) - ft);
    Vec<S> dg = gc.cwiseProduct(it).cwiseProduct(Vec<S>::Ones(hidden) - gt.cwiseProduct(gt));

    Vec<S> da(4 * hidden);
    da.head(hidden) = di;
    da.segment(hidden, hidden) = df;
    da.segment(2 * hidden, hidden) = dg;
    da.tail(hidden) = do_;

    grads.w.noalias() += da * cache.inputs.col(t).transpose();
    grads.u.noalias() += da * h_prev.transpose();
    grads.b += da;

    dinputs.col(t).noalias() = p.w.transpose() * da;
    carry_h.noalias() = p.u.transpose() * da;
    carry_c = gc.cwiseProduct(ft);
  }
  return dinputs;
}

// ---------------------------------------------------------------------------
// Bidirectional wrappers: forward cell left-to-right, backward cell
// right-to-left, per-position concatenation [fwd; bwd].

template <typename S>
inline Mat<S> reverse_cols(const Mat<S>& m) {
  Mat<S> out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) out.col(j) = m.col(m.cols() - 1 - j);
  return out;
}

template <typename S, typename CellParams, typename CellCache>
struct BiRnn {
  CellParams fwd, bwd;

  int out_dim() const { return fwd.hidden() + bwd.hidden(); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    fwd.visit(prefix + ".fwd", f);
    bwd.visit(prefix + ".bwd", f);
  }
};

template <typename S>
using BiGru = BiRnn<S, GruParams<S>, GruCache<S>>;
template <typename S>
using BiLstm = BiRnn<S, LstmParams<S>, LstmCache<S>>;

template <typename S>
struct BiGruCache {
  GruCache<S> fwd, bwd;
};
template <typename S>
struct BiLstmCache {
  LstmCache<S> fwd, bwd;
};

template <typename S>
inline Mat<S> bi_gru_forward(const BiGru<S>& p, const Mat<S>& inputs,
                             std::type_identity_t<BiGruCache<S>*> cache = nullptr) {
  if (inputs.cols() == 0) throw EmptyInput("bi_gru_forward: empty sequence");
  Mat<S> hf = gru_forward(p.fwd, inputs, cache ? &cache->fwd : nullptr);
  Mat<S> hb = gru_forward(p.bwd, reverse_cols(inputs), cache ? &cache->bwd : nullptr);
  Mat<S> out(p.out_dim(), inputs.cols());
  out.topRows(p.fwd.hidden()) = hf;
  out.bottomRows(p.bwd.hidden()) = reverse_cols(hb);
  return out;
}

template <typename S>
inline Mat<S> bi_gru_backward(const BiGru<S>& p, const BiGruCache<S>& cache,
                              const Mat<S>& grad_states, BiGru<S>& grads) {
  Mat<S> df = gru_backward(p.fwd, cache.fwd, Mat<S>(grad_states.topRows(p.fwd.hidden())),
                           grads.fwd);
  Mat<S> db = gru_backward(p.bwd, cache.bwd,
                           reverse_cols(Mat<S>(grad_states.bottomRows(p.bwd.hidden()))),
                           grads.bwd);
  return df + reverse_cols(db);
}

template <typename S>
inline Mat<S> bi_lstm_forward(const BiLstm<S>& p, const Mat<S>& inputs,
                              std::type_identity_t<BiLstmCache<S>*> cache = nullptr) {
  if (inputs.cols() == 0) throw EmptyInput("bi_lstm_forward: empty sequence");
  Mat<S> hf = lstm_forward(p.fwd, inputs, cache ? &cache->fwd : nullptr);
  Mat<S> hb = lstm_forward(p.bwd, reverse_cols(inputs), cache ? &cache->bwd : nullptr);
  Mat<S> out(p.out_dim(), inputs.cols());
  out.topRows(p.fwd.hidden()) = hf;
  out.bottomRows(p.bwd.hidden()) = reverse_cols(hb);
  return out;
}

template <typename S>
inline Mat<S> bi_lstm_backward(const BiLstm<S>& p, const BiLstmCache<S>& cache,
                               const Mat<S>& grad_states, BiLstm<S>& grads) {
  Mat<S> df = lstm_backward(p.fwd, cache.fwd, Mat<S>(grad_states.topRows(p.fwd.hidden())),
                            grads.fwd);
  Mat<S> db = lstm_backward(p.bwd, cache.bwd,
                            reverse_cols(Mat<S>(grad_states.bottomRows(p.bwd.hidden()))),
                            grads.bwd);
  return df + reverse_cols(db);
}

}  // namespace slotfill::nn
