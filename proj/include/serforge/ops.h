// Copyright 2026 The ser-forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SERFORGE_OPS_H_
#define SERFORGE_OPS_H_

#include <vector>

#include "serforge/autograd.h"
#include "serforge/rng.h"

namespace serforge {

// Dense algebra. Matrix ops fold leading axes into rows.
template <typename T> Var<T> MatMul(const Var<T>& a, const Var<T>& b);
// a · bᵀ
template <typename T> Var<T> MatMulTransposed(const Var<T>& a, const Var<T>& b);
// x[.., in] · wᵀ + b, w is [out, in]; `b` may be undefined.
template <typename T> Var<T> Linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

template <typename T> Var<T> Add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> Sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> Mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> Scale(const Var<T>& a, T s);
// Broadcast a length-n row over every row of x[.., n].
template <typename T> Var<T> AddRow(const Var<T>& x, const Var<T>& row);
template <typename T> Var<T> SubRow(const Var<T>& x, const Var<T>& row);

template <typename T> Var<T> Relu(const Var<T>& x);
template <typename T> Var<T> Tanh(const Var<T>& x);
template <typename T> Var<T> Sigmoid(const Var<T>& x);
// sqrt(max(x, floor)); zero gradient below the floor.
template <typename T> Var<T> SqrtFloor(const Var<T>& x, T floor);

// Softmax over the last axis, max-subtracted.
template <typename T> Var<T> Softmax(const Var<T>& x);
template <typename T>
Var<T> LayerNorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));
// Inverted dropout; returns `x` itself when not training or p == 0.
template <typename T> Var<T> Dropout(const Var<T>& x, double p, Rng* rng, bool training);

template <typename T> Var<T> Transpose(const Var<T>& x);
template <typename T> Var<T> Reshape(const Var<T>& x, Shape shape);
template <typename T> Var<T> ConcatRows(const std::vector<Var<T>>& parts);
template <typename T> Var<T> ConcatCols(const std::vector<Var<T>>& parts);
template <typename T> Var<T> GatherRows(const Var<T>& x, const std::vector<int>& rows);
// [R, n] -> [1, n]
template <typename T> Var<T> MeanRows(const Var<T>& x);
template <typename T> Var<T> SumAll(const Var<T>& x);
template <typename T> Var<T> MeanAll(const Var<T>& x);

// Multi-head scaled dot-product attention core on projected q, k, v [T, d].
template <typename T>
Var<T> Attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int n_heads);
// Row-stochastic attention matrices, one [T, T] per head (forward only).
template <typename T>
std::vector<Tensor<T>> AttentionProbabilities(const Tensor<T>& q, const Tensor<T>& k, int n_heads);

struct Conv2dOptions {
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
};

int ConvOutputSize(int in, int kernel, int stride, int pad);

// Cross-correlation. x [C, H, W], w [O, C, kh, kw], b [O] (optional).
template <typename T>
Var<T> Conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, const Conv2dOptions& opt);
// Non-overlapping max pooling, trailing remainder dropped.
template <typename T> Var<T> MaxPool2d(const Var<T>& x, int kernel);
// x [C, L], w [O, C, k], b [O] (optional).
template <typename T>
Var<T> Conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);

// Single-direction LSTM over x [T, in]. Gate order in the stacked weights is
// input, forget, cell, output: w_ih [4H, in], w_hh [4H, H], b [4H]. With
// `reverse` the sequence is consumed back to front and outputs stay aligned
// with input positions.
template <typename T>
Var<T> Lstm(const Var<T>& x, const Var<T>& w_ih, const Var<T>& w_hh, const Var<T>& b,
            bool reverse);

enum class LossMode { kMacro, kMean };

// Per-sample coefficients c_i with loss = sum_i c_i * nll_i. Macro mode
// averages per-class means over the classes present in the batch.
std::vector<double> CrossEntropyCoefficients(const std::vector<int>& labels, int num_classes,
                                             LossMode mode,
                                             const std::vector<double>& class_weights = {});

template <typename T>
Var<T> CrossEntropy(const Var<T>& logits, const std::vector<int>& labels, LossMode mode,
                    const std::vector<double>& class_weights = {});

}  // namespace serforge

#endif  // SERFORGE_OPS_H_
