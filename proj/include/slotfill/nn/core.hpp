// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slotfill/errors.hpp"
#include "slotfill/rng.hpp"

namespace slotfill::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Named view over a parameter array's storage. Biases are columns, matrices
// are column-major; every optimizer/checkpoint/gradient-check path works
// through these views.
template <typename S>
struct ParamRef {
  std::string name;
  S* data = nullptr;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
};

template <typename S>
inline void append_ref(std::vector<ParamRef<S>>& out, const std::string& name, Mat<S>& m) {
  out.push_back({name, m.data(), m.rows(), m.cols()});
}

template <typename S>
inline void append_ref(std::vector<ParamRef<S>>& out, const std::string& name, Vec<S>& v) {
  out.push_back({name, v.data(), v.rows(), 1});
}

// Uniform(-0.1, 0.1) fill, seed-controlled.
template <typename S>
inline void init_uniform(std::vector<ParamRef<S>> refs, Rng rng, double radius = 0.1) {
  for (auto& r : refs)
    for (Eigen::Index i = 0; i < r.size(); ++i)
      r.data[i] = static_cast<S>(rng.uniform(-radius, radius));
}

// Numerically stable softmax (max subtraction); result is strictly positive
// and sums to one.
template <typename S>
inline Vec<S> softmax(const Vec<S>& z) {
  if (z.size() == 0) throw EmptyInput("softmax of empty vector");
  Vec<S> out = (z.array() - z.maxCoeff()).exp();
  out /= out.sum();
  return out;
}

template <typename S>
inline S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

// Arithmetic mean of the columns of a (d x n) matrix.
template <typename S>
inline Vec<S> mean_pool(const Mat<S>& columns) {
  if (columns.cols() == 0) throw EmptyInput("mean_pool of empty sequence");
  return columns.rowwise().mean();
}

template <typename S>
inline Vec<S> mean_pool(const std::vector<Vec<S>>& vectors) {
  if (vectors.empty()) throw EmptyInput("mean_pool of empty sequence");
  Vec<S> sum = vectors[0];
  for (std::size_t i = 1; i < vectors.size(); ++i) {
    if (vectors[i].size() != sum.size()) throw ShapeError("mean_pool: mixed dimensions");
    sum += vectors[i];
  }
  return sum / static_cast<S>(vectors.size());
}

}  // namespace slotfill::nn
