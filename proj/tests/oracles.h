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

// Independent reference implementations used as test oracles. Everything here
// is written with plain loops and shares no code with the library.

#ifndef SERFORGE_TESTS_ORACLES_H_
#define SERFORGE_TESTS_ORACLES_H_

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline double HtkMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

inline std::vector<double> PeriodicHann(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

// O(n^2) DFT of one zero-padded, windowed frame; returns bins 0..n_fft/2.
inline std::vector<std::complex<double>> NaiveDftFrame(const std::vector<double>& x, std::size_t start,
                                                       int frame_length, int n_fft) {
  const auto win = PeriodicHann(frame_length);
  std::vector<std::complex<double>> out(n_fft / 2 + 1);
  for (int k = 0; k <= n_fft / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (int n = 0; n < frame_length; ++n) {
      const double ang = -2.0 * std::numbers::pi * k * n / n_fft;
      acc += x[start + n] * win[n] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// Orthonormal DCT-II by the double-loop sum formula.
inline std::vector<double> DctII(const std::vector<double>& x, int n_out) {
  const int n = static_cast<int>(x.size());
  std::vector<double> c(n_out, 0.0);
  for (int k = 0; k < n_out; ++k) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += x[i] * std::cos(std::numbers::pi / n * (i + 0.5) * k);
    c[k] = acc * (k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n));
  }
  return c;
}

// Direct convolution: x[C][H][W], w[O][C][kh][kw] flattened row-major.
inline std::vector<double> Conv2d(const std::vector<double>& x, int c, int h, int wd,
                                  const std::vector<double>& w, int o, int kh, int kw,
                                  const std::vector<double>& b, int sh, int sw, int ph, int pw,
                                  int* oh_out, int* ow_out) {
  const int oh = (h + 2 * ph - kh) / sh + 1;
  const int ow = (wd + 2 * pw - kw) / sw + 1;
  std::vector<double> y(static_cast<std::size_t>(o) * oh * ow, 0.0);
  for (int oc = 0; oc < o; ++oc)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) {
        double acc = b.empty() ? 0.0 : b[oc];
        for (int ic = 0; ic < c; ++ic)
          for (int u = 0; u < kh; ++u)
            for (int v = 0; v < kw; ++v) {
              const int r = i * sh + u - ph, q = j * sw + v - pw;
              if (r < 0 || r >= h || q < 0 || q >= wd) continue;
              acc += x[(static_cast<std::size_t>(ic) * h + r) * wd + q] *
                     w[((static_cast<std::size_t>(oc) * c + ic) * kh + u) * kw + v];
            }
        y[(static_cast<std::size_t>(oc) * oh + i) * ow + j] = acc;
      }
  *oh_out = oh;
  *ow_out = ow;
  return y;
}

inline double Sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Unidirectional LSTM with gate blocks (input, forget, cell, output);
// w_ih [4H][in], w_hh [4H][H], b [4H].
inline Matrix Lstm(const Matrix& x, const Matrix& w_ih, const Matrix& w_hh, const std::vector<double>& b,
                   bool reverse) {
  const int steps = static_cast<int>(x.size());
  const int hidden = static_cast<int>(w_hh[0].size());
  std::vector<double> h(hidden, 0.0), c(hidden, 0.0);
  Matrix out(steps, std::vector<double>(hidden));
  for (int s = 0; s < steps; ++s) {
    const int t = reverse ? steps - 1 - s : s;
    std::vector<double> z(4 * hidden);
    for (int g = 0; g < 4 * hidden; ++g) {
      double acc = b[g];
      for (std::size_t i = 0; i < x[t].size(); ++i) acc += w_ih[g][i] * x[t][i];
      for (int j = 0; j < hidden; ++j) acc += w_hh[g][j] * h[j];
      z[g] = acc;
    }
    for (int j = 0; j < hidden; ++j) {
      const double ig = Sigmoid(z[j]);
      const double fg = Sigmoid(z[hidden + j]);
      const double gg = std::tanh(z[2 * hidden + j]);
      const double og = Sigmoid(z[3 * hidden + j]);
      c[j] = fg * c[j] + ig * gg;
      h[j] = og * std::tanh(c[j]);
    }
    out[t] = h;
  }
  return out;
}

struct Pooled {
  std::vector<double> alpha, mu, sigma, logits;
};

// Attentive statistics pooling: e_t = w2 . tanh(W1 h_t), alpha = softmax(e),
// mu = sum alpha h, sigma = sqrt(max(sum alpha h^2 - mu^2, eps)), logits = W [mu; sigma] + b.
inline Pooled AttentivePool(const Matrix& h, const Matrix& w1, const std::vector<double>& w2,
                            const Matrix& w, const std::vector<double>& b, double eps) {
  const std::size_t t_len = h.size(), d = h[0].size();
  Pooled p;
  std::vector<double> e(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    double s = 0.0;
    for (std::size_t a = 0; a < w1.size(); ++a) {
      double z = 0.0;
      for (std::size_t i = 0; i < d; ++i) z += w1[a][i] * h[t][i];
      s += w2[a] * std::tanh(z);
    }
    e[t] = s;
  }
  double m = e[0];
  for (double v : e) m = std::max(m, v);
  double den = 0.0;
  for (double v : e) den += std::exp(v - m);
  for (double v : e) p.alpha.push_back(std::exp(v - m) / den);
  p.mu.assign(d, 0.0);
  p.sigma.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) m1 += p.alpha[t] * h[t][i];
    for (std::size_t t = 0; t < t_len; ++t) m2 += p.alpha[t] * (h[t][i] - m1) * (h[t][i] - m1);
    p.mu[i] = m1;
    p.sigma[i] = std::sqrt(std::max(m2, eps));
  }
  for (std::size_t k = 0; k < w.size(); ++k) {
    double acc = b[k];
    for (std::size_t i = 0; i < d; ++i) acc += w[k][i] * p.mu[i] + w[k][d + i] * p.sigma[i];
    p.logits.push_back(acc);
  }
  return p;
}

// LayerNorm -> Linear -> ReLU -> Linear, evaluation mode.
inline std::vector<double> MlpHead(const std::vector<double>& h, const std::vector<double>& gamma,
                                   const std::vector<double>& beta, const Matrix& w1,
                                   const std::vector<double>& b1, const Matrix& w2,
                                   const std::vector<double>& b2, double eps) {
  const std::size_t d = h.size();
  double mean = 0.0;
  for (double v : h) mean += v;
  mean /= d;
  double var = 0.0;
  for (double v : h) var += (v - mean) * (v - mean);
  var /= d;
  std::vector<double> x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = (h[i] - mean) / std::sqrt(var + eps) * gamma[i] + beta[i];
  std::vector<double> a(w1.size());
  for (std::size_t j = 0; j < w1.size(); ++j) {
    double acc = b1[j];
    for (std::size_t i = 0; i < d; ++i) acc += w1[j][i] * x[i];
    a[j] = std::max(0.0, acc);
  }
  std::vector<double> out(w2.size());
  for (std::size_t k = 0; k < w2.size(); ++k) {
    double acc = b2[k];
    for (std::size_t j = 0; j < a.size(); ++j) acc += w2[k][j] * a[j];
    out[k] = acc;
  }
  return out;
}

struct PairMetrics {
  double accuracy = 0.0, macro_p = 0.0, macro_r = 0.0, macro_f1 = 0.0;
};

// Metrics recomputed per sample from raw (truth, pred) pairs. Macro averages
// run over classes present in the truth; an empty prediction column gives
// precision 0.
inline PairMetrics FromPairs(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  PairMetrics m;
  int correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  m.accuracy = static_cast<double>(correct) / truth.size();
  int present = 0;
  for (int c = 0; c < k; ++c) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == c && pred[i] == c) ++tp;
      if (truth[i] != c && pred[i] == c) ++fp;
      if (truth[i] == c && pred[i] != c) ++fn;
    }
    if (tp + fn == 0) continue;
    ++present;
    const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    const double r = static_cast<double>(tp) / (tp + fn);
    m.macro_p += p;
    m.macro_r += r;
    m.macro_f1 += p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
  m.macro_p /= present;
  m.macro_r /= present;
  m.macro_f1 /= present;
  return m;
}

}  // namespace oracle

#endif  // SERFORGE_TESTS_ORACLES_H_
