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

#include "serforge/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "serforge/error.h"

namespace serforge {
namespace {

template <typename T>
using Node = GraphNode<T>;

template <typename T>
Node<T>* Input(Node<T>& n, std::size_t i) {
  return n.inputs[i].get();
}

template <typename T>
bool Wants(Node<T>& n, std::size_t i) {
  return n.inputs[i]->requires_grad;
}

[[noreturn]] void ShapeMismatch(const std::string& op, const Shape& a, const Shape& b) {
  Fail(ErrorKind::kShape, op + ": incompatible shapes " + ShapeString(a) + " and " +
                              ShapeString(b));
}

template <typename T>
Tensor<T> Matrix2(int rows, int cols) {
  return Tensor<T>(Shape{rows, cols});
}

Shape ReplaceLast(Shape s, int last) {
  if (s.empty()) return Shape{last};
  s.back() = last;
  return s;
}

template <typename T, typename F, typename D>
Var<T> Elementwise(const Var<T>& x, F f, D dfdx_from_y) {
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return MakeResult<T>(std::move(y), {x}, [dfdx_from_y](Node<T>& n) {
    auto* in = Input(n, 0);
    auto& g = in->Grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += n.grad[i] * dfdx_from_y(in->value[i], n.value[i]);
    }
  });
}

}  // namespace

template <typename T>
Var<T> MatMul(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (b.value().rank() != 2 || av.cols() != bv.rows()) ShapeMismatch("MatMul", a.shape(), b.shape());
  auto out = Matrix2<T>(av.rows(), bv.cols());
  out.matrix().noalias() = av.matrix() * bv.matrix();
  return MakeResult<T>(std::move(out), {a, b}, [](Node<T>& n) {
    auto* A = Input(n, 0);
    auto* B = Input(n, 1);
    if (Wants(n, 0)) A->Grad().matrix().noalias() += n.grad.matrix() * B->value.matrix().transpose();
    if (Wants(n, 1)) B->Grad().matrix().noalias() += A->value.matrix().transpose() * n.grad.matrix();
  });
}

template <typename T>
Var<T> MatMulTransposed(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.cols()) ShapeMismatch("MatMulTransposed", a.shape(), b.shape());
  auto out = Matrix2<T>(av.rows(), bv.rows());
  out.matrix().noalias() = av.matrix() * bv.matrix().transpose();
  return MakeResult<T>(std::move(out), {a, b}, [](Node<T>& n) {
    auto* A = Input(n, 0);
    auto* B = Input(n, 1);
    if (Wants(n, 0)) A->Grad().matrix().noalias() += n.grad.matrix() * B->value.matrix();
    if (Wants(n, 1)) B->Grad().matrix().noalias() += n.grad.matrix().transpose() * A->value.matrix();
  });
}

template <typename T>
Var<T> Linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (wv.rank() != 2 || xv.cols() != wv.cols()) ShapeMismatch("Linear", x.shape(), w.shape());
  const int out_dim = wv.rows();
  const bool has_bias = b.defined();
  if (has_bias && (b.value().size() != static_cast<std::size_t>(out_dim))) {
    ShapeMismatch("Linear(bias)", w.shape(), b.shape());
  }
  Tensor<T> y(ReplaceLast(xv.shape(), out_dim));
  y.matrix().noalias() = xv.matrix() * wv.matrix().transpose();
  if (has_bias) {
    auto bm = ConstMatrixMap<T>(b.value().data(), 1, out_dim);
    y.matrix().rowwise() += bm.row(0);
  }
  std::vector<Var<T>> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return MakeResult<T>(std::move(y), std::move(inputs), [has_bias](Node<T>& n) {
    auto* X = Input(n, 0);
    auto* W = Input(n, 1);
    if (Wants(n, 0)) X->Grad().matrix().noalias() += n.grad.matrix() * W->value.matrix();
    if (Wants(n, 1)) W->Grad().matrix().noalias() += n.grad.matrix().transpose() * X->value.matrix();
    if (has_bias && Wants(n, 2)) {
      auto& gb = Input(n, 2)->Grad();
      MatrixMap<T>(gb.data(), 1, static_cast<int>(gb.size())).row(0) +=
          n.grad.matrix().colwise().sum();
    }
  });
}

template <typename T>
Var<T> Add(const Var<T>& a, const Var<T>& b) {
  if (a.value().size() != b.value().size()) ShapeMismatch("Add", a.shape(), b.shape());
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return MakeResult<T>(std::move(y), {a, b}, [](Node<T>& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!Wants(n, k)) continue;
      auto& g = Input(n, k)->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <typename T>
Var<T> Sub(const Var<T>& a, const Var<T>& b) {
  if (a.value().size() != b.value().size()) ShapeMismatch("Sub", a.shape(), b.shape());
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return MakeResult<T>(std::move(y), {a, b}, [](Node<T>& n) {
    if (Wants(n, 0)) {
      auto& g = Input(n, 0)->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (Wants(n, 1)) {
      auto& g = Input(n, 1)->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <typename T>
Var<T> Mul(const Var<T>& a, const Var<T>& b) {
  if (a.value().size() != b.value().size()) ShapeMismatch("Mul", a.shape(), b.shape());
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return MakeResult<T>(std::move(y), {a, b}, [](Node<T>& n) {
    auto* A = Input(n, 0);
    auto* B = Input(n, 1);
    if (Wants(n, 0)) {
      auto& g = A->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * B->value[i];
    }
    if (Wants(n, 1)) {
      auto& g = B->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * A->value[i];
    }
  });
}

template <typename T>
Var<T> Scale(const Var<T>& a, T s) {
  Tensor<T> y = a.value();
  for (auto& v : y.values()) v *= s;
  return MakeResult<T>(std::move(y), {a}, [s](Node<T>& n) {
    auto& g = Input(n, 0)->Grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
  });
}

namespace {

template <typename T>
Var<T> AddRowSigned(const Var<T>& x, const Var<T>& row, T sign) {
  const int cols = x.value().cols();
  if (row.value().size() != static_cast<std::size_t>(cols)) {
    ShapeMismatch("AddRow", x.shape(), row.shape());
  }
  Tensor<T> y = x.value();
  auto rm = ConstMatrixMap<T>(row.value().data(), 1, cols);
  y.matrix().rowwise() += sign * rm.row(0);
  return MakeResult<T>(std::move(y), {x, row}, [sign, cols](Node<T>& n) {
    if (Wants(n, 0)) {
      auto& g = Input(n, 0)->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (Wants(n, 1)) {
      auto& g = Input(n, 1)->Grad();
      MatrixMap<T>(g.data(), 1, cols).row(0) += sign * n.grad.matrix().colwise().sum();
    }
  });
}

}  // namespace

template <typename T>
Var<T> AddRow(const Var<T>& x, const Var<T>& row) {
  return AddRowSigned(x, row, T(1));
}

template <typename T>
Var<T> SubRow(const Var<T>& x, const Var<T>& row) {
  return AddRowSigned(x, row, T(-1));
}

template <typename T>
Var<T> Relu(const Var<T>& x) {
  return Elementwise(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> Tanh(const Var<T>& x) {
  return Elementwise(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> Sigmoid(const Var<T>& x) {
  return Elementwise(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> SqrtFloor(const Var<T>& x, T floor) {
  return Elementwise(
      x, [floor](T v) { return std::sqrt(std::max(v, floor)); },
      [floor](T in, T y) { return in > floor ? T(0.5) / y : T(0); });
}

template <typename T>
Var<T> Softmax(const Var<T>& x) {
  Tensor<T> y = x.value();
  auto m = y.matrix();
  for (int r = 0; r < m.rows(); ++r) {
    const T mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
  return MakeResult<T>(std::move(y), {x}, [](Node<T>& n) {
    auto ym = n.value.matrix();
    auto gm = n.grad.matrix();
    auto dx = Input(n, 0)->Grad().matrix();
    for (int r = 0; r < ym.rows(); ++r) {
      const T dot = (gm.row(r).array() * ym.row(r).array()).sum();
      dx.row(r).array() += ym.row(r).array() * (gm.row(r).array() - dot);
    }
  });
}

template <typename T>
Var<T> LayerNorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const auto& xv = x.value();
  const int d = xv.cols();
  if (gamma.value().size() != static_cast<std::size_t>(d) ||
      beta.value().size() != static_cast<std::size_t>(d)) {
    ShapeMismatch("LayerNorm", x.shape(), gamma.shape());
  }
  const int rows = xv.rows();
  Tensor<T> xhat(xv.shape());
  std::vector<T> inv_std(rows);
  Tensor<T> y(xv.shape());
  auto xm = xv.matrix();
  auto hm = xhat.matrix();
  auto ym = y.matrix();
  auto g = ConstMatrixMap<T>(gamma.value().data(), 1, d);
  auto bt = ConstMatrixMap<T>(beta.value().data(), 1, d);
  for (int r = 0; r < rows; ++r) {
    const T mean = xm.row(r).mean();
    const T var = (xm.row(r).array() - mean).square().mean();
    inv_std[r] = T(1) / std::sqrt(var + eps);
    hm.row(r) = (xm.row(r).array() - mean) * inv_std[r];
    ym.row(r) = hm.row(r).cwiseProduct(g.row(0)) + bt.row(0);
  }
  return MakeResult<T>(std::move(y), {x, gamma, beta},
                       [xhat = std::move(xhat), inv_std = std::move(inv_std), d](Node<T>& n) {
    auto gm = n.grad.matrix();
    auto hm = xhat.matrix();
    auto* G = Input(n, 1);
    if (Wants(n, 0)) {
      auto dx = Input(n, 0)->Grad().matrix();
      auto gam = ConstMatrixMap<T>(G->value.data(), 1, d);
      for (int r = 0; r < gm.rows(); ++r) {
        auto dxhat = (gm.row(r).cwiseProduct(gam.row(0))).eval();
        const T m1 = dxhat.mean();
        const T m2 = dxhat.cwiseProduct(hm.row(r)).mean();
        dx.row(r).array() += inv_std[r] * (dxhat.array() - m1 - hm.row(r).array() * m2);
      }
    }
    if (Wants(n, 1)) {
      auto& dg = G->Grad();
      MatrixMap<T>(dg.data(), 1, d).row(0) += gm.cwiseProduct(hm).colwise().sum();
    }
    if (Wants(n, 2)) {
      auto& db = Input(n, 2)->Grad();
      MatrixMap<T>(db.data(), 1, d).row(0) += gm.colwise().sum();
    }
  });
}

template <typename T>
Var<T> Dropout(const Var<T>& x, double p, Rng* rng, bool training) {
  if (p < 0.0 || p >= 1.0) Fail(ErrorKind::kConfig, "dropout probability must be in [0, 1)");
  if (!training || p == 0.0) return x;
  if (rng == nullptr) Fail(ErrorKind::kConfig, "training-mode dropout needs an rng");
  const T keep_scale = T(1.0 / (1.0 - p));
  Tensor<T> mask(x.shape());
  for (auto& m : mask.values()) m = UniformUnit(*rng) < p ? T(0) : keep_scale;
  Tensor<T> y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
  return MakeResult<T>(std::move(y), {x}, [mask = std::move(mask)](Node<T>& n) {
    auto& g = Input(n, 0)->Grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * mask[i];
  });
}

template <typename T>
Var<T> Transpose(const Var<T>& x) {
  const auto& xv = x.value();
  if (xv.rank() != 2) Fail(ErrorKind::kShape, "Transpose expects rank 2, got " + ShapeString(x.shape()));
  Tensor<T> y(Shape{xv.cols(), xv.rows()});
  y.matrix() = xv.matrix().transpose();
  return MakeResult<T>(std::move(y), {x}, [](Node<T>& n) {
    Input(n, 0)->Grad().matrix() += n.grad.matrix().transpose();
  });
}

template <typename T>
Var<T> Reshape(const Var<T>& x, Shape shape) {
  Tensor<T> y = x.value().Reshaped(std::move(shape));
  return MakeResult<T>(std::move(y), {x}, [](Node<T>& n) {
    auto& g = Input(n, 0)->Grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

template <typename T>
Var<T> ConcatRows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) Fail(ErrorKind::kShape, "ConcatRows of nothing");
  const int cols = parts[0].value().cols();
  int rows = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != cols) ShapeMismatch("ConcatRows", parts[0].shape(), p.shape());
    rows += p.value().rows();
  }
  Tensor<T> y(Shape{rows, cols});
  std::vector<int> offsets;
  int r = 0;
  for (const auto& p : parts) {
    offsets.push_back(r);
    y.matrix().middleRows(r, p.value().rows()) = p.value().matrix();
    r += p.value().rows();
  }
  return MakeResult<T>(std::move(y), parts, [offsets = std::move(offsets)](Node<T>& n) {
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      if (!Wants(n, k)) continue;
      auto* in = Input(n, k);
      auto gi = in->Grad().matrix();
      gi += n.grad.matrix().middleRows(offsets[k], gi.rows());
    }
  });
}

template <typename T>
Var<T> ConcatCols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) Fail(ErrorKind::kShape, "ConcatCols of nothing");
  const int rows = parts[0].value().rows();
  int cols = 0;
  for (const auto& p : parts) {
    if (p.value().rows() != rows) ShapeMismatch("ConcatCols", parts[0].shape(), p.shape());
    cols += p.value().cols();
  }
  Tensor<T> y(Shape{rows, cols});
  std::vector<int> offsets;
  int c = 0;
  for (const auto& p : parts) {
    offsets.push_back(c);
    y.matrix().middleCols(c, p.value().cols()) = p.value().matrix();
    c += p.value().cols();
  }
  return MakeResult<T>(std::move(y), parts, [offsets = std::move(offsets)](Node<T>& n) {
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      if (!Wants(n, k)) continue;
      auto gi = Input(n, k)->Grad().matrix();
      gi += n.grad.matrix().middleCols(offsets[k], gi.cols());
    }
  });
}

template <typename T>
Var<T> GatherRows(const Var<T>& x, const std::vector<int>& rows) {
  const auto& xv = x.value();
  const int n_rows = xv.rows();
  const int cols = xv.cols();
  Tensor<T> y(Shape{static_cast<int>(rows.size()), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= n_rows) {
      Fail(ErrorKind::kShape, "GatherRows index " + std::to_string(rows[i]) + " out of range for " +
                                  ShapeString(x.shape()));
    }
    y.matrix().row(static_cast<int>(i)) = xv.matrix().row(rows[i]);
  }
  return MakeResult<T>(std::move(y), {x}, [rows](Node<T>& n) {
    auto gx = Input(n, 0)->Grad().matrix();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      gx.row(rows[i]) += n.grad.matrix().row(static_cast<int>(i));
    }
  });
}

template <typename T>
Var<T> MeanRows(const Var<T>& x) {
  const auto& xv = x.value();
  Tensor<T> y(Shape{1, xv.cols()});
  y.matrix().row(0) = xv.matrix().colwise().mean();
  return MakeResult<T>(std::move(y), {x}, [](Node<T>& n) {
    auto gx = Input(n, 0)->Grad().matrix();
    const T inv = T(1) / static_cast<T>(gx.rows());
    gx.rowwise() += inv * n.grad.matrix().row(0);
  });
}

template <typename T>
Var<T> SumAll(const Var<T>& x) {
  T s = 0;
  for (T v : x.value().values()) s += v;
  return MakeResult<T>(Tensor<T>::Scalar(s), {x}, [](Node<T>& n) {
    auto& g = Input(n, 0)->Grad();
    for (auto& v : g.values()) v += n.grad[0];
  });
}

template <typename T>
Var<T> MeanAll(const Var<T>& x) {
  const T inv = T(1) / static_cast<T>(std::max<std::size_t>(1, x.value().size()));
  return Scale(SumAll(x), inv);
}

template <typename T>
std::vector<Tensor<T>> AttentionProbabilities(const Tensor<T>& q, const Tensor<T>& k,
                                              int n_heads) {
  const int t_q = q.rows();
  const int t_k = k.rows();
  const int d = q.cols();
  if (n_heads <= 0 || d % n_heads != 0) {
    Fail(ErrorKind::kConfig, "embedding dim " + std::to_string(d) +
                                 " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (k.cols() != d) ShapeMismatch("Attention", q.shape(), k.shape());
  const int dh = d / n_heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<Tensor<T>> probs;
  probs.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    Tensor<T> p(Shape{t_q, t_k});
    auto pm = p.matrix();
    pm.noalias() = q.matrix().middleCols(h * dh, dh) * k.matrix().middleCols(h * dh, dh).transpose();
    pm *= scale;
    for (int r = 0; r < t_q; ++r) {
      const T mx = pm.row(r).maxCoeff();
      pm.row(r) = (pm.row(r).array() - mx).exp();
      pm.row(r) /= pm.row(r).sum();
    }
    probs.push_back(std::move(p));
  }
  return probs;
}

template <typename T>
Var<T> Attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int n_heads) {
  const auto& qv = q.value();
  const auto& vv = v.value();
  if (k.value().rows() != vv.rows() || vv.cols() != qv.cols()) {
    ShapeMismatch("Attention", k.shape(), v.shape());
  }
  auto probs = AttentionProbabilities(qv, k.value(), n_heads);
  const int d = qv.cols();
  const int dh = d / n_heads;
  Tensor<T> out(Shape{qv.rows(), d});
  for (int h = 0; h < n_heads; ++h) {
    out.matrix().middleCols(h * dh, dh).noalias() = probs[h].matrix() * vv.matrix().middleCols(h * dh, dh);
  }
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  return MakeResult<T>(std::move(out), {q, k, v},
                       [probs = std::move(probs), n_heads, dh, scale](Node<T>& n) {
    auto* Q = Input(n, 0);
    auto* K = Input(n, 1);
    auto* V = Input(n, 2);
    auto gout = n.grad.matrix();
    for (int h = 0; h < n_heads; ++h) {
      auto P = probs[h].matrix();
      auto dO = gout.middleCols(h * dh, dh);
      if (Wants(n, 2)) {
        V->Grad().matrix().middleCols(h * dh, dh).noalias() += P.transpose() * dO;
      }
      if (!Wants(n, 0) && !Wants(n, 1)) continue;
      RowMatrix<T> dP = dO * V->value.matrix().middleCols(h * dh, dh).transpose();
      RowMatrix<T> dS = P.array() * (dP.array().colwise() - (dP.array() * P.array()).rowwise().sum());
      dS *= scale;
      if (Wants(n, 0)) {
        Q->Grad().matrix().middleCols(h * dh, dh).noalias() += dS * K->value.matrix().middleCols(h * dh, dh);
      }
      if (Wants(n, 1)) {
        K->Grad().matrix().middleCols(h * dh, dh).noalias() += dS.transpose() * Q->value.matrix().middleCols(h * dh, dh);
      }
    }
  });
}

int ConvOutputSize(int in, int kernel, int stride, int pad) {
  if (stride <= 0 || kernel <= 0) Fail(ErrorKind::kConfig, "convolution kernel and stride must be positive");
  const int span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

namespace {

// cols[(c*kh + i)*kw + j, oy*ow + ox] = x[c, oy*sh + i - ph, ox*sw + j - pw]
template <typename T>
RowMatrix<T> Im2Col(const T* x, int c_in, int h, int w, int kh, int kw, const Conv2dOptions& o,
                    int oh, int ow) {
  RowMatrix<T> cols = RowMatrix<T>::Zero(static_cast<Eigen::Index>(c_in) * kh * kw,
                                         static_cast<Eigen::Index>(oh) * ow);
  for (int c = 0; c < c_in; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        T* row = cols.row((c * kh + i) * kw + j).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * o.stride_h + i - o.pad_h;
          if (iy < 0 || iy >= h) continue;
          const T* src = x + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * o.stride_w + j - o.pad_w;
            if (ix >= 0 && ix < w) row[oy * ow + ox] = src[ix];
          }
        }
      }
    }
  }
  return cols;
}

template <typename T>
void Col2ImAdd(const RowMatrix<T>& cols, T* dx, int c_in, int h, int w, int kh, int kw,
               const Conv2dOptions& o, int oh, int ow) {
  for (int c = 0; c < c_in; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const T* row = cols.row((c * kh + i) * kw + j).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * o.stride_h + i - o.pad_h;
          if (iy < 0 || iy >= h) continue;
          T* dst = dx + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * o.stride_w + j - o.pad_w;
            if (ix >= 0 && ix < w) dst[ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

template <typename T>
Var<T> ConvCore(const Var<T>& x, const Var<T>& w, const Var<T>& b, int c_in, int h, int wd,
                int c_out, int kh, int kw, const Conv2dOptions& o, Shape out_shape, int oh, int ow) {
  if (oh <= 0 || ow <= 0) {
    Fail(ErrorKind::kShape, "convolution kernel " + ShapeString(w.shape()) +
                                " does not fit input " + ShapeString(x.shape()));
  }
  const bool has_bias = b.defined();
  if (has_bias && b.value().size() != static_cast<std::size_t>(c_out)) {
    ShapeMismatch("Conv(bias)", w.shape(), b.shape());
  }
  RowMatrix<T> cols = Im2Col(x.value().data(), c_in, h, wd, kh, kw, o, oh, ow);
  Tensor<T> y(std::move(out_shape));
  auto ym = MatrixMap<T>(y.data(), c_out, oh * ow);
  auto wm = ConstMatrixMap<T>(w.value().data(), c_out, c_in * kh * kw);
  ym.noalias() = wm * cols;
  if (has_bias) {
    auto bm = ConstMatrixMap<T>(b.value().data(), c_out, 1);
    ym.colwise() += bm.col(0);
  }
  std::vector<Var<T>> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return MakeResult<T>(
      std::move(y), std::move(inputs),
      [cols = std::move(cols), c_in, h, wd, c_out, kh, kw, o, oh, ow, has_bias](Node<T>& n) {
        auto gy = ConstMatrixMap<T>(n.grad.data(), c_out, oh * ow);
        auto* W = Input(n, 1);
        if (Wants(n, 1)) {
          MatrixMap<T>(W->Grad().data(), c_out, c_in * kh * kw).noalias() += gy * cols.transpose();
        }
        if (has_bias && Wants(n, 2)) {
          MatrixMap<T>(Input(n, 2)->Grad().data(), c_out, 1).col(0) += gy.rowwise().sum();
        }
        if (Wants(n, 0)) {
          auto wm = ConstMatrixMap<T>(W->value.data(), c_out, c_in * kh * kw);
          RowMatrix<T> dcols = wm.transpose() * gy;
          Col2ImAdd(dcols, Input(n, 0)->Grad().data(), c_in, h, wd, kh, kw, o, oh, ow);
        }
      });
}

}  // namespace

template <typename T>
Var<T> Conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, const Conv2dOptions& opt) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[1] != xs[0]) ShapeMismatch("Conv2d", xs, ws);
  const int oh = ConvOutputSize(xs[1], ws[2], opt.stride_h, opt.pad_h);
  const int ow = ConvOutputSize(xs[2], ws[3], opt.stride_w, opt.pad_w);
  return ConvCore(x, w, b, xs[0], xs[1], xs[2], ws[0], ws[2], ws[3], opt, Shape{ws[0], oh, ow}, oh, ow);
}

template <typename T>
Var<T> Conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 3 || ws[1] != xs[0]) ShapeMismatch("Conv1d", xs, ws);
  Conv2dOptions o{1, stride, 0, pad};
  const int ol = ConvOutputSize(xs[1], ws[2], stride, pad);
  return ConvCore(x, w, b, xs[0], 1, xs[1], ws[0], 1, ws[2], o, Shape{ws[0], ol}, 1, ol);
}

template <typename T>
Var<T> MaxPool2d(const Var<T>& x, int kernel) {
  const auto& xs = x.shape();
  if (xs.size() != 3 || kernel <= 0) Fail(ErrorKind::kShape, "MaxPool2d expects [C,H,W], got " + ShapeString(xs));
  const int c = xs[0], h = xs[1], w = xs[2];
  const int oh = h / kernel, ow = w / kernel;
  if (oh == 0 || ow == 0) {
    Fail(ErrorKind::kShape, "MaxPool2d kernel " + std::to_string(kernel) + " larger than input " +
                                ShapeString(xs));
  }
  Tensor<T> y(Shape{c, oh, ow});
  std::vector<int> argmax(y.size());
  const auto& xv = x.value();
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        int best = -1;
        T best_v = -std::numeric_limits<T>::infinity();
        for (int i = 0; i < kernel; ++i) {
          for (int j = 0; j < kernel; ++j) {
            const int idx = (ch * h + oy * kernel + i) * w + ox * kernel + j;
            if (best < 0 || xv[idx] > best_v) {
              best = idx;
              best_v = xv[idx];
            }
          }
        }
        const int o = (ch * oh + oy) * ow + ox;
        y[o] = best_v;
        argmax[o] = best;
      }
    }
  }
  return MakeResult<T>(std::move(y), {x}, [argmax = std::move(argmax)](Node<T>& n) {
    auto& g = Input(n, 0)->Grad();
    for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += n.grad[o];
  });
}

template <typename T>
Var<T> Lstm(const Var<T>& x, const Var<T>& w_ih, const Var<T>& w_hh, const Var<T>& b,
            bool reverse) {
  const auto& xv = x.value();
  const int steps = xv.rows();
  const int hidden = w_hh.value().cols();
  if (steps < 1) Fail(ErrorKind::kShape, "LSTM needs at least one time step");
  if (w_ih.value().rows() != 4 * hidden || w_ih.value().cols() != xv.cols() ||
      w_hh.value().rows() != 4 * hidden || b.value().size() != static_cast<std::size_t>(4 * hidden)) {
    ShapeMismatch("Lstm", x.shape(), w_ih.shape());
  }
  // Pre-activations from the input for every step at once.
  RowMatrix<T> gates = xv.matrix() * w_ih.value().matrix().transpose();
  gates.rowwise() += ConstMatrixMap<T>(b.value().data(), 1, 4 * hidden).row(0);
  auto whh = w_hh.value().matrix();

  RowMatrix<T> h_prev = RowMatrix<T>::Zero(steps, hidden);  // state fed into step t
  RowMatrix<T> c_prev = RowMatrix<T>::Zero(steps, hidden);
  RowMatrix<T> c_tanh(steps, hidden);
  Tensor<T> out(Shape{steps, hidden});
  auto om = out.matrix();
  RowMatrix<T> h = RowMatrix<T>::Zero(1, hidden);
  RowMatrix<T> cell = RowMatrix<T>::Zero(1, hidden);
  for (int s = 0; s < steps; ++s) {
    const int t = reverse ? steps - 1 - s : s;
    h_prev.row(t) = h.row(0);
    c_prev.row(t) = cell.row(0);
    gates.row(t).noalias() += h * whh.transpose();
    auto a = gates.row(t).array();
    for (int j = 0; j < hidden; ++j) {
      a(j) = T(1) / (T(1) + std::exp(-a(j)));
      a(hidden + j) = T(1) / (T(1) + std::exp(-a(hidden + j)));
      a(2 * hidden + j) = std::tanh(a(2 * hidden + j));
      a(3 * hidden + j) = T(1) / (T(1) + std::exp(-a(3 * hidden + j)));
      cell(0, j) = a(hidden + j) * cell(0, j) + a(j) * a(2 * hidden + j);
      c_tanh(t, j) = std::tanh(cell(0, j));
      h(0, j) = a(3 * hidden + j) * c_tanh(t, j);
    }
    om.row(t) = h.row(0);
  }
  // `gates` now holds activated gate values.
  return MakeResult<T>(
      std::move(out), {x, w_ih, w_hh, b},
      [gates = std::move(gates), h_prev = std::move(h_prev), c_prev = std::move(c_prev),
       c_tanh = std::move(c_tanh), steps, hidden, reverse](Node<T>& n) {
        auto* X = Input(n, 0);
        auto* Wih = Input(n, 1);
        auto* Whh = Input(n, 2);
        auto whh = Whh->value.matrix();
        auto gout = n.grad.matrix();
        RowMatrix<T> da(steps, 4 * hidden);
        RowMatrix<T> dh_next = RowMatrix<T>::Zero(1, hidden);
        std::vector<T> dc_next(hidden, T(0));
        for (int s = steps - 1; s >= 0; --s) {
          const int t = reverse ? steps - 1 - s : s;
          auto a = gates.row(t).array();
          for (int j = 0; j < hidden; ++j) {
            const T ig = a(j), fg = a(hidden + j), gg = a(2 * hidden + j), og = a(3 * hidden + j);
            const T dh = gout(t, j) + dh_next(0, j);
            const T ct = c_tanh(t, j);
            const T dc = dh * og * (T(1) - ct * ct) + dc_next[j];
            da(t, j) = dc * gg * ig * (T(1) - ig);
            da(t, hidden + j) = dc * c_prev(t, j) * fg * (T(1) - fg);
            da(t, 2 * hidden + j) = dc * ig * (T(1) - gg * gg);
            da(t, 3 * hidden + j) = dh * ct * og * (T(1) - og);
            dc_next[j] = dc * fg;
          }
          dh_next.noalias() = da.row(t) * whh;
        }
        if (Wants(n, 0)) X->Grad().matrix().noalias() += da * Wih->value.matrix();
        if (Wants(n, 1)) Wih->Grad().matrix().noalias() += da.transpose() * X->value.matrix();
        if (Wants(n, 2)) Whh->Grad().matrix().noalias() += da.transpose() * h_prev;
        if (Wants(n, 3)) {
          auto& gb = Input(n, 3)->Grad();
          MatrixMap<T>(gb.data(), 1, 4 * hidden).row(0) += da.colwise().sum();
        }
      });
}

std::vector<double> CrossEntropyCoefficients(const std::vector<int>& labels, int num_classes,
                                             LossMode mode,
                                             const std::vector<double>& class_weights) {
  if (!class_weights.empty() && class_weights.size() != static_cast<std::size_t>(num_classes)) {
    Fail(ErrorKind::kConfig, "class_weights has " + std::to_string(class_weights.size()) +
                                 " entries for " + std::to_string(num_classes) + " classes");
  }
  auto weight = [&](int c) { return class_weights.empty() ? 1.0 : class_weights[c]; };
  std::vector<int> counts(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      Fail(ErrorKind::kLabel, "label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
    ++counts[y];
  }
  std::vector<double> coef(labels.size(), 0.0);
  if (labels.empty()) return coef;
  if (mode == LossMode::kMean) {
    double total = 0.0;
    for (int y : labels) total += weight(y);
    for (std::size_t i = 0; i < labels.size(); ++i) coef[i] = weight(labels[i]) / total;
  } else {
    double total = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      if (counts[c] > 0) total += weight(c);
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      coef[i] = weight(labels[i]) / (counts[labels[i]] * total);
    }
  }
  return coef;
}

template <typename T>
Var<T> CrossEntropy(const Var<T>& logits, const std::vector<int>& labels, LossMode mode,
                    const std::vector<double>& class_weights) {
  const auto& z = logits.value();
  const int batch = z.rows();
  const int k = z.cols();
  if (static_cast<std::size_t>(batch) != labels.size()) {
    Fail(ErrorKind::kShape, "CrossEntropy: " + std::to_string(labels.size()) + " labels for logits " +
                                ShapeString(logits.shape()));
  }
  const auto coef = CrossEntropyCoefficients(labels, k, mode, class_weights);
  RowMatrix<T> probs = z.matrix();
  T loss = 0;
  for (int i = 0; i < batch; ++i) {
    const T mx = probs.row(i).maxCoeff();
    probs.row(i) = (probs.row(i).array() - mx).exp();
    const T sum = probs.row(i).sum();
    probs.row(i) /= sum;
    const T nll = -(z(i, labels[i]) - mx - std::log(sum));
    loss += static_cast<T>(coef[i]) * nll;
  }
  return MakeResult<T>(Tensor<T>::Scalar(loss), {logits},
                       [probs = std::move(probs), labels, coef](Node<T>& n) {
    auto g = Input(n, 0)->Grad().matrix();
    const T up = n.grad[0];
    for (int i = 0; i < g.rows(); ++i) {
      const T c = static_cast<T>(coef[i]) * up;
      g.row(i) += c * probs.row(i);
      g(i, labels[i]) -= c;
    }
  });
}

#define SERFORGE_INSTANTIATE_OPS(T)                                                         \
  template Var<T> MatMul(const Var<T>&, const Var<T>&);                                     \
  template Var<T> MatMulTransposed(const Var<T>&, const Var<T>&);                           \
  template Var<T> Linear(const Var<T>&, const Var<T>&, const Var<T>&);                      \
  template Var<T> Add(const Var<T>&, const Var<T>&);                                        \
  template Var<T> Sub(const Var<T>&, const Var<T>&);                                        \
  template Var<T> Mul(const Var<T>&, const Var<T>&);                                        \
  template Var<T> Scale(const Var<T>&, T);                                                  \
  template Var<T> AddRow(const Var<T>&, const Var<T>&);                                     \
  template Var<T> SubRow(const Var<T>&, const Var<T>&);                                     \
  template Var<T> Relu(const Var<T>&);                                                      \
  template Var<T> Tanh(const Var<T>&);                                                      \
  template Var<T> Sigmoid(const Var<T>&);                                                   \
  template Var<T> SqrtFloor(const Var<T>&, T);                                              \
  template Var<T> Softmax(const Var<T>&);                                                   \
  template Var<T> LayerNorm(const Var<T>&, const Var<T>&, const Var<T>&, T);                \
  template Var<T> Dropout(const Var<T>&, double, Rng*, bool);                               \
  template Var<T> Transpose(const Var<T>&);                                                 \
  template Var<T> Reshape(const Var<T>&, Shape);                                            \
  template Var<T> ConcatRows(const std::vector<Var<T>>&);                                   \
  template Var<T> ConcatCols(const std::vector<Var<T>>&);                                   \
  template Var<T> GatherRows(const Var<T>&, const std::vector<int>&);                       \
  template Var<T> MeanRows(const Var<T>&);                                                  \
  template Var<T> SumAll(const Var<T>&);                                                    \
  template Var<T> MeanAll(const Var<T>&);                                                   \
  template Var<T> Attention(const Var<T>&, const Var<T>&, const Var<T>&, int);              \
  template std::vector<Tensor<T>> AttentionProbabilities(const Tensor<T>&, const Tensor<T>&, \
                                                         int);                              \
  template Var<T> Conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const Conv2dOptions&); \
  template Var<T> Conv1d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);            \
  template Var<T> MaxPool2d(const Var<T>&, int);                                            \
  template Var<T> Lstm(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&, bool);   \
  template Var<T> CrossEntropy(const Var<T>&, const std::vector<int>&, LossMode,            \
                               const std::vector<double>&);

SERFORGE_INSTANTIATE_OPS(float)
SERFORGE_INSTANTIATE_OPS(double)

}  // namespace serforge
