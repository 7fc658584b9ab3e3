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

#include <doctest.h>

#include <set>

#include "serforge/error.h"
#include "serforge/grad_check.h"
#include "serforge/models.h"
#include "serforge/ops.h"
#include "test_util.h"
#include "tolerances.h"

using namespace serforge;
using testutil::RandomTensor;

namespace {

ModelConfig PatchModel(int frames, int bins, int d, int blocks, int patch, HeadKind head) {
  ModelConfig m;
  m.family = ModelFamily::kPatchTransformer;
  m.patch.patch_h = m.patch.patch_w = patch;
  m.patch.embed_dim = d;
  m.patch.n_blocks = blocks;
  m.patch.n_heads = 2;
  m.patch.mlp_ratio = 2;
  m.head.kind = head;
  m.head.mlp_hidden = 2 * d;
  m.head.d_att = d;
  m.head.dropout_p = 0.0;
  m.input_frames = frames;
  m.input_bins = bins;
  m.Finalize();
  return m;
}

template <typename T>
void Randomize(ParamStore<T>& s, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (auto& e : s.entries()) {
    if (e.trainable) e.value = RandomTensor<T>(e.value.shape(), rng, scale);
  }
}

Var<double> WeightedLogits(const Var<double>& logits) {
  Tensor<double> w(logits.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.5 + 0.1 * static_cast<double>(i);
  return SumAll(Mul(logits, Var<double>::Constant(w)));
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("patchify counts, trimming and reassembly") {
    Rng rng(1);
    const auto spec = RandomTensor<double>({96, 128}, rng);
    const auto p = Patchify(spec, 16, 16);
    CHECK(p.n_freq == 8);
    CHECK(p.n_time == 6);
    CHECK(p.data.rows() == 48);
    CHECK(AssemblePatches(p, 16, 16) == spec);

    const auto wide = RandomTensor<double>({100, 128}, rng);
    const auto q = Patchify(wide, 16, 16);
    CHECK(q.data.rows() == 48);
    const auto back = AssemblePatches(q, 16, 16);
    REQUIRE(back.shape() == Shape{96, 128});
    for (int t = 0; t < 96; ++t)
      for (int f = 0; f < 128; ++f) CHECK(back(t, f) == wide(t, f));
    CHECK_THROWS_AS(Patchify(RandomTensor<double>({8, 128}, rng), 16, 16), Error);
  }

  TEST_CASE("patch embedding indexing") {
    auto m = PatchModel(96, 128, 16, 1, 16, HeadKind::kLinear);
    auto s = InitParams<double>(m, 3);
    Rng rng(2);
    const auto patches = Patchify(RandomTensor<double>({96, 128}, rng), 16, 16);

    auto z = s;
    z.at("patch_embed.W").value.Fill(0.0);
    z.at("pos.time").value.Fill(0.0);
    z.at("pos.freq").value.Fill(0.0);
    z.at("patch_embed.b").value = RandomTensor<double>({16}, rng);
    const auto seq = EmbedPatches(patches, m.patch, Bindings<double>::FromStore(z, false));
    REQUIRE(seq.tokens.shape() == Shape{49, 16});
    for (int r = 1; r < 49; ++r)
      for (int c = 0; c < 16; ++c) CHECK(seq.tokens.value()(r, c) == z.value("patch_embed.b")[c]);

    // With a zero projection, token - bias is exactly pos.time[t] + pos.freq[f].
    auto e = s;
    e.at("patch_embed.W").value.Fill(0.0);
    e.at("patch_embed.b").value.Fill(0.0);
    e.at("pos.freq").value.Fill(0.0);
    const auto only_time = EmbedPatches(patches, m.patch, Bindings<double>::FromStore(e, false)).tokens.value();
    for (int i = 0; i < 48; ++i)
      for (int j = 0; j < 48; ++j) {
        if (i % 6 == j % 6) {
          for (int c = 0; c < 16; ++c) CHECK(only_time(1 + i, c) == only_time(1 + j, c));
        }
      }
    e.at("pos.freq").value = s.value("pos.freq");
    e.at("pos.time").value.Fill(0.0);
    const auto only_freq = EmbedPatches(patches, m.patch, Bindings<double>::FromStore(e, false)).tokens.value();
    for (int i = 0; i < 48; ++i)
      for (int j = 0; j < 48; ++j) {
        if (i / 6 == j / 6) {
          for (int c = 0; c < 16; ++c) CHECK(only_freq(1 + i, c) == only_freq(1 + j, c));
        }
      }
  }

  TEST_CASE("patchout") {
    auto m = PatchModel(96, 128, 16, 1, 16, HeadKind::kLinear);
    auto s = InitParams<double>(m, 4);
    const auto p = Bindings<double>::FromStore(s, false);
    Rng rng(5);
    const auto seq = EmbedPatches(Patchify(RandomTensor<double>({96, 128}, rng), 16, 16), m.patch, p);

    PatchConfig cfg = m.patch;
    CHECK(Patchout(seq, cfg, &rng, true).tokens.value() == seq.tokens.value());
    cfg.patchout_freq = 2;
    cfg.patchout_time = 1;
    cfg.patchout_random = 0.3;
    CHECK(Patchout(seq, cfg, &rng, false).tokens.value() == seq.tokens.value());

    cfg.patchout_random = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      Rng r(seed);
      const auto out = Patchout(seq, cfg, &r, true);
      REQUIRE(out.kept_indices.size() == 30);
      CHECK(out.tokens.shape()[0] == 31);
      std::set<int> rows, cols;
      for (int cell : out.kept_indices) {
        rows.insert(cell / 6);
        cols.insert(cell % 6);
      }
      CHECK(rows.size() == 6);
      CHECK(cols.size() == 5);
      for (int i = 0; i < 16; ++i) CHECK(out.tokens.value()(0, i) == seq.tokens.value()(0, i));
    }

    cfg.patchout_freq = 0.25;  // fraction of 8 rows
    cfg.patchout_time = 0.0;
    Rng r(9);
    CHECK(Patchout(seq, cfg, &r, true).kept_indices.size() == 36);
    cfg.patchout_freq = 8;
    CHECK_THROWS_AS(Patchout(seq, cfg, &r, true), Error);
  }

  TEST_CASE("patch transformer shapes and determinism") {
    auto m = PatchModel(96, 128, 128, 2, 16, HeadKind::kMlp);
    m.patch.n_heads = 4;
    auto s = InitParams<float>(m, 6);
    const auto p = Bindings<float>::FromStore(s, false);
    Rng rng(7);
    const auto spec = RandomTensor<float>({96, 128}, rng);
    ForwardContext eval;
    const auto h = PatchTransformerForward(spec, m.patch, p, eval);
    CHECK(h.pooled.shape() == Shape{1, 128});
    CHECK(h.tokens.shape() == Shape{48, 128});
    CHECK(PatchTransformerForward(spec, m.patch, p, eval).tokens.value() == h.tokens.value());
    Rng tr(8);
    ForwardContext train{true, &tr};
    CHECK(testutil::MaxAbsDiff(PatchTransformerForward(spec, m.patch, p, train).pooled.value(), h.pooled.value()) <=
          tol::kModeEquivalence);
    CHECK(ModelLogits(m, spec, p, eval).shape() == Shape{1, 6});
  }

  TEST_CASE("waveform encoder") {
    WaveformConfig wc;
    CHECK(wc.TotalStride() == 320);
    CHECK(WaveformTokenCount(160000, wc) == 500);

    ModelConfig m;
    m.family = ModelFamily::kWaveformEncoder;
    m.waveform.conv_kernels = {4, 2};
    m.waveform.conv_strides = {4, 2};
    m.waveform.conv_channels = 6;
    m.waveform.embed_dim = 8;
    m.waveform.n_blocks = 1;
    m.waveform.n_heads = 2;
    m.waveform.mlp_ratio = 2;
    m.head.kind = HeadKind::kAttentivePool;
    m.head.d_att = 4;
    m.input_samples = 64;
    m.Finalize();
    Rng rng(10);
    ForwardContext ctx;
    const auto proj = [&] {
      // Bypass the blocks to see the token embeddings themselves.
      auto c = m;
      c.waveform.n_blocks = 0;
      return c;
    }();
    auto s0 = InitParams<double>(proj, 9);
    for (auto& e : s0.entries()) {
      if (e.name.rfind("wave.conv.", 0) == 0 && e.name.back() == 'W') e.value.Fill(0.0);
    }
    const auto h = WaveformEncoderForward(RandomTensor<double>({64}, rng), proj.waveform,
                                          Bindings<double>::FromStore(s0, false), ctx);
    REQUIRE(h.tokens.shape() == Shape{8, 8});
    for (int t = 1; t < 8; ++t)
      for (int c = 0; c < 8; ++c) CHECK(h.tokens.value()(t, c) == h.tokens.value()(0, c));

    auto g = InitParams<double>(m, 11);
    Randomize(g, 12, 0.5);
    const auto x = RandomTensor<double>({64}, rng);
    CHECK(GradCheck([&](const Bindings<double>& p) {
      ForwardContext c;
      return WeightedLogits(ModelLogits(m, x, p, c));
    }, g).max_relative_error <= tol::kGradCheck);
  }

  TEST_CASE("CNN-LSTM output shape and gradient") {
    ModelConfig m;
    m.family = ModelFamily::kCnnLstm;
    m.cnn_lstm.conv_channels = {2, 3};
    m.cnn_lstm.lstm_hidden = 3;
    m.cnn_lstm.lstm_layers = 2;
    m.head.kind = HeadKind::kLinear;
    m.input_frames = 12;
    m.input_bins = 8;
    m.Finalize();
    auto s = InitParams<double>(m, 13);
    Rng rng(14);
    ForwardContext ctx;
    for (int frames : {12, 17, 31}) {
      const auto p = Bindings<double>::FromStore(s, false);
      CHECK(ModelLogits(m, RandomTensor<double>({frames, 8}, rng), p, ctx).shape() == Shape{1, 6});
    }
    Randomize(s, 15, 0.5);
    const auto x = RandomTensor<double>({12, 8}, rng);
    CHECK(GradCheck([&](const Bindings<double>& p) {
      ForwardContext c;
      return WeightedLogits(ModelLogits(m, x, p, c));
    }, s).max_relative_error <= tol::kGradCheck);
  }

  TEST_CASE("small patch transformer composite gradient, every head") {
    for (HeadKind head : {HeadKind::kLinear, HeadKind::kMlp, HeadKind::kAttentivePool}) {
      auto m = PatchModel(12, 16, 8, 2, 4, head);
      auto s = InitParams<double>(m, 16);
      Randomize(s, 17, 0.4);
      Rng rng(18);
      const auto x = RandomTensor<double>({12, 16}, rng);
      const auto r = GradCheck([&](const Bindings<double>& p) {
        ForwardContext c;
        return WeightedLogits(ModelLogits(m, x, p, c));
      }, s);
      CAPTURE(HeadKindName(head));
      CAPTURE(r.worst_parameter);
      CHECK(r.max_relative_error <= tol::kGradCheck);
    }
  }

  TEST_CASE("initialization is seeded") {
    auto m = PatchModel(32, 32, 16, 1, 16, HeadKind::kMlp);
    const auto a = InitParams<float>(m, 1), b = InitParams<float>(m, 1), c = InitParams<float>(m, 2);
    CHECK(a.value("blocks.0.attn.Wq") == b.value("blocks.0.attn.Wq"));
    CHECK_FALSE(a.value("blocks.0.attn.Wq") == c.value("blocks.0.attn.Wq"));
    CHECK_FALSE(a.at("input_norm.mean").trainable);
  }

  TEST_CASE("model family names") {
    CHECK(ParseModelFamily("patch_transformer") == ModelFamily::kPatchTransformer);
    CHECK(ParseModelFamily("cnn-lstm") == ModelFamily::kCnnLstm);
    CHECK_THROWS_AS(ParseModelFamily("resnet"), Error);
  }
}
