// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "easwin/model.hpp"
#include "easwin/verify.hpp"
#include "oracles.hpp"

using namespace easwin;

namespace {

HeadConfig tiny(Index d = 8, Index heads = 2, Index w = 2) {
  HeadConfig c;
  c.d_model = d;
  c.heads = heads;
  c.w_t = c.w_s = w;
  c.depth_t = c.depth_s = 2;
  c.frames = 4;
  return c;
}

EmbeddingBatch random_batch(Index b, Index t, Index s, Index din, Rng& rng) {
  EmbeddingBatch batch;
  batch.z = oracle::random_tensor<float>({b, t, s, din}, rng);
  batch.valid_t.assign(static_cast<std::size_t>(b), static_cast<int>(t));
  return batch;
}

template <typename T>
std::vector<T> logits(const DetectionHead<T>& m, const EmbeddingBatch& b) {
  NoGradGuard guard;
  const Variable<T> out = m.forward(b);
  const auto v = out.value().values();
  return {v.begin(), v.end()};
}

oracle::Mat layer_norm_rows(const oracle::Mat& x, Index d, const oracle::Mat& g, const oracle::Mat& b) {
  oracle::Mat out(x.size());
  for (std::size_t r = 0; r < x.size() / d; ++r) {
    double mu = 0, var = 0;
    for (Index e = 0; e < d; ++e) mu += x[r * d + e] / d;
    for (Index e = 0; e < d; ++e) var += (x[r * d + e] - mu) * (x[r * d + e] - mu) / d;
    for (Index e = 0; e < d; ++e) out[r * d + e] = (x[r * d + e] - mu) / std::sqrt(var + 1e-5) * g[e] + b[e];
  }
  return out;
}

void randomize(ParamList<double> params, Rng& rng, double scale) {
  for (auto* p : params)
    for (double& v : p->var.mutable_value().values()) v = scale * rng.normal();
}

}  // namespace

TEST(HeadConfig, DefaultsAndValidation) {
  HeadConfig c;
  EXPECT_EQ(c.d_model, 512);
  EXPECT_EQ(c.heads, 8);
  EXPECT_EQ(c.w_t, 4);
  EXPECT_EQ(c.w_s, 4);
  EXPECT_EQ(c.depth_t, 2);
  EXPECT_EQ(c.depth_s, 2);
  EXPECT_EQ(c.tubelet, 1);
  EXPECT_EQ(c.frames, 16);
  EXPECT_NO_THROW(c.validate());
  c.heads = 7;
  EXPECT_THROW(c.validate(), ConfigError);
  c = HeadConfig{};
  c.depth_s = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_pool_mode("max"), ConfigError);
  EXPECT_THROW(parse_head_kind("cnn"), ConfigError);
}

TEST(EmbeddingBatch, Validation) {
  Rng rng(1);
  auto b = random_batch(2, 4, 1, 3, rng);
  EXPECT_NO_THROW(b.validate());
  b.valid_t = {4, 0};
  EXPECT_THROW(b.validate(), ContractError);
  b.valid_t = {4, 5};
  EXPECT_THROW(b.validate(), ContractError);
  b.valid_t = {4, 4};
  b.labels = {0, 2};
  EXPECT_THROW(b.validate(), ContractError);
  b.labels = {1};
  EXPECT_THROW(b.validate(), ContractError);
}

TEST(ProjectInput, IdentityProjectionKeepsInput) {
  HeadConfig c = tiny(4, 2);
  DetectionHead<float> m(c, 4, 0);
  auto& w = m.find("proj.weight")->var.mutable_value();
  w.fill(0);
  for (Index i = 0; i < 4; ++i) w[i * 4 + i] = 1;
  Rng rng(2);
  const auto b = random_batch(2, 4, 3, 4, rng);
  const auto out = m.project_input(b).value();
  ASSERT_EQ(out.shape(), (Shape{2, 4, 3, 4}));
  for (Index i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], b.z[i]);
}

TEST(ProjectInput, TubeletsConcatenateFramesThenProject) {
  HeadConfig c = tiny(4, 2);
  c.tubelet = 2;
  DetectionHead<float> m(c, 3, 5);
  Rng rng(3);
  for (float& v : m.find("proj.bias")->var.mutable_value().values()) v = static_cast<float>(rng.normal());
  const auto b = random_batch(2, 4, 2, 3, rng);
  const auto out = m.project_input(b).value();
  ASSERT_EQ(out.shape(), (Shape{2, 2, 2, 4}));
  const auto w = oracle::to_mat(m.find("proj.weight")->var.value());
  const auto bias = oracle::to_mat(m.find("proj.bias")->var.value());
  ASSERT_EQ(w.size(), 6u * 4u);
  for (Index v = 0; v < 2; ++v)
    for (Index t = 0; t < 2; ++t)
      for (Index s = 0; s < 2; ++s) {
        oracle::Mat row;
        for (Index f = 0; f < 2; ++f)
          for (Index e = 0; e < 3; ++e) row.push_back(b.z[((v * 4 + 2 * t + f) * 2 + s) * 3 + e]);
        const auto ref = oracle::matmul(row, w, 1, 6, 4);
        for (Index e = 0; e < 4; ++e) {
          EXPECT_NEAR(out[((v * 2 + t) * 2 + s) * 4 + e], ref[e] + bias[e], 1e-6);
        }
      }
}

TEST(ProjectInput, SixteenFramesByTwoGiveEight) {
  HeadConfig c = tiny(8, 2);
  c.tubelet = 2;
  c.frames = 16;
  DetectionHead<float> m(c, 3, 0);
  Rng rng(4);
  EXPECT_EQ(m.project_input(random_batch(1, 16, 1, 3, rng)).value().dim(1), 8);
  EXPECT_EQ(m.forward(random_batch(1, 16, 1, 3, rng)).shape(), (Shape{1}));
  EXPECT_THROW(m.project_input(random_batch(1, 5, 1, 3, rng)), ConfigError);
  EXPECT_THROW(m.project_input(random_batch(1, 4, 1, 2, rng)), DimensionError);
}

TEST(SwinBlock, ZeroWeightsAreExactIdentity) {
  for (auto axis : {AttentionAxis::temporal, AttentionAxis::spatial, AttentionAxis::joint}) {
    Rng rng(5);
    SwinBlock<double> block("b", axis, 8, 2, 2, rng);
    ParamList<double> params;
    block.collect(params);
    randomize(params, rng, 1.0);
    for (auto* p : params) {
      const bool keep = p->name.find(".ln") != std::string::npos ||
                        p->name.find("bias_table") != std::string::npos;
      if (!keep) p->var.mutable_value().fill(0);
    }
    const auto x = oracle::random_tensor<double>({3, 4, 8}, rng);
    for (bool shifted : {false, true}) {
      const auto y = swin_block(constant(x), block, shifted).value();
      for (Index i = 0; i < x.size(); ++i) ASSERT_EQ(y[i], x[i]);
    }
  }
}

TEST(SwinBlock, TemporalBlockOverOneWindowIsPlainPreNormBlock) {
  Rng rng(6);
  const Index d = 8, t = 4;
  SwinBlock<double> block("b", AttentionAxis::temporal, d, 2, t, rng);
  ParamList<double> params;
  block.collect(params);
  randomize(params, rng, 0.4);
  const auto x = oracle::random_tensor<double>({2, t, d}, rng);
  const auto y = swin_block(constant(x), block, false).value();

  auto get = [&](const std::string& n) {
    for (auto* p : params)
      if (p->name == n) return oracle::to_mat(p->var.value());
    ADD_FAILURE() << n;
    return oracle::Mat{};
  };
  const auto xm = oracle::to_mat(x);
  const auto n1 = layer_norm_rows(xm, d, get("b.ln1.gamma"), get("b.ln1.beta"));
  const auto att = oracle::windowed_layer(n1, 2, t, d, oracle::windows_1d(t, t, 0),
                                          oracle::weights_of(block.attention().params()),
                                          oracle::bias_1d(get("b.attn.bias_table"), t, 2));
  oracle::Mat yv(xm.size());
  for (std::size_t i = 0; i < xm.size(); ++i) yv[i] = xm[i] + att[i];
  const auto n2 = layer_norm_rows(yv, d, get("b.ln2.gamma"), get("b.ln2.beta"));
  auto h = oracle::matmul(n2, get("b.mlp.fc1.weight"), 2 * t, d, 4 * d);
  const auto b1 = get("b.mlp.fc1.bias");
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double u = h[i] + b1[i % (4 * d)];
    h[i] = 0.5 * u * (1 + std::erf(u / std::sqrt(2.0)));
  }
  const auto o = oracle::matmul(h, get("b.mlp.fc2.weight"), 2 * t, 4 * d, d);
  const auto b2 = get("b.mlp.fc2.bias");
  for (std::size_t i = 0; i < yv.size(); ++i) {
    EXPECT_NEAR(y[static_cast<Index>(i)], yv[i] + o[i] + b2[i % d], 1e-10);
  }
}

TEST(DetectionHead, OddBlocksAreShifted) {
  HeadConfig c = tiny();
  c.depth_t = 4;
  c.depth_s = 3;
  DetectionHead<float> m(c, 3, 0);
  const auto info = m.layer_info(4);
  ASSERT_EQ(info.size(), 7u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(info[i].name, "blocks.t" + std::to_string(i));
    EXPECT_EQ(info[i].shifted, i % 2 == 1);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(info[4 + i].name, "blocks.s" + std::to_string(i));
    EXPECT_EQ(info[4 + i].shifted, i % 2 == 1);
    EXPECT_TRUE(info[4 + i].grid);
  }
  c.use_shift = false;
  for (const auto& l : DetectionHead<float>(c, 3, 0).layer_info(4)) EXPECT_FALSE(l.shifted);
}

TEST(DetectionHead, BaseShapesAreFinite) {
  DetectionHead<float> m(HeadConfig{}, 64, 0);
  Rng rng(7);
  const auto out = logits(m, random_batch(2, 16, 16, 64, rng));
  ASSERT_EQ(out.size(), 2u);
  for (float v : out) EXPECT_TRUE(std::isfinite(v));
}

TEST(DetectionHead, FrameLevelEncoderWithOneToken) {
  DetectionHead<float> m(tiny(), 3, 0);
  Rng rng(8);
  const auto out = logits(m, random_batch(3, 4, 1, 3, rng));
  ASSERT_EQ(out.size(), 3u);
  for (float v : out) EXPECT_TRUE(std::isfinite(v));
}

TEST(DetectionHead, BatchPermutationPermutesLogits) {
  DetectionHead<float> m(tiny(), 3, 1);
  Rng rng(9);
  auto b = random_batch(4, 4, 4, 3, rng);
  b.valid_t = {4, 2, 3, 1};
  const auto a = logits(m, b);
  const std::vector<Index> perm = {2, 0, 3, 1};
  EmbeddingBatch p;
  p.z = Tensor<float>(b.z.shape());
  const Index per = b.z.size() / 4;
  for (Index i = 0; i < 4; ++i) {
    std::copy_n(b.z.data() + perm[i] * per, per, p.z.data() + i * per);
    p.valid_t.push_back(b.valid_t[perm[i]]);
  }
  const auto c = logits(m, p);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(c[i], a[perm[i]], 1e-5);
}

TEST(DetectionHead, InvalidFramesDoNotReachTheLogit) {
  for (auto variant : ablation_variants(tiny())) {
    DetectionHead<float> m(variant.second, 3, 2);
    Rng rng(10);
    auto b = random_batch(2, 4, 4, 3, rng);
    b.valid_t = {2, 4};
    const auto a = logits(m, b);
    for (Index f = 2; f < 4; ++f)
      for (Index i = 0; i < 12; ++i) b.z[(f * 4) * 3 + i] = 50.f * static_cast<float>(rng.normal());
    const auto c = logits(m, b);
    EXPECT_EQ(a, c) << variant.first;
  }
}

TEST(DetectionHead, DeterministicPerSeed) {
  Rng rng(11);
  const auto b = random_batch(3, 4, 4, 3, rng);
  DetectionHead<float> a(tiny(), 3, 42), c(tiny(), 3, 42), d(tiny(), 3, 43);
  EXPECT_EQ(logits(a, b), logits(c, b));
  EXPECT_NE(logits(a, b), logits(d, b));
}

TEST(DetectionHead, NonFiniteWeightNamesTheLayer) {
  DetectionHead<float> m(tiny(), 3, 0);
  m.find("blocks.s1.mlp.fc1.weight")->var.mutable_value()[0] = std::numeric_limits<float>::infinity();
  Rng rng(12);
  try {
    logits(m, random_batch(1, 4, 4, 3, rng));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("blocks.s1"), std::string::npos) << e.what();
  }
}

TEST(DetectionHead, ParameterNamesAreUnique) {
  for (const auto& [name, cfg] : ablation_variants(tiny())) {
    DetectionHead<float> m(cfg, 3, 0);
    std::set<std::string> names;
    for (auto* p : m.parameters()) EXPECT_TRUE(names.insert(p->name).second) << name << " " << p->name;
  }
}

TEST(Ablation, VariantsAndNames) {
  const auto v = ablation_variants(tiny());
  ASSERT_EQ(v.size(), 5u);
  EXPECT_EQ(v[0].first, "base");
  EXPECT_FALSE(v[1].second.use_shift);
  EXPECT_TRUE(v[2].second.joint_attention);
  EXPECT_EQ(v[3].second.pool, PoolMode::mean);
  EXPECT_EQ(v[4].second.head_kind, HeadKind::mlp_baseline);
}

TEST(Ablation, ZeroShiftBitEqualsNoShift) {
  // Window 1 makes the shift W/2 zero, so the shifted blocks take the
  // unshifted path exactly.
  HeadConfig base = tiny(8, 2, 1);
  HeadConfig off = base;
  off.use_shift = false;
  Rng rng(13);
  auto b = random_batch(2, 4, 4, 3, rng);
  b.valid_t = {3, 4};
  DetectionHead<double> a(base, 3, 3), c(off, 3, 3);
  EXPECT_EQ(logits(a, b), logits(c, b));

  WindowAttentionLayer<double> layer("a", AttentionAxis::temporal, 8, 2, 1, rng);
  const auto x = oracle::random_tensor<double>({2, 5, 8}, rng);
  const auto y0 = temporal_swin_layer(constant(x), layer, false).value();
  const auto y1 = temporal_swin_layer(constant(x), layer, true).value();
  for (Index i = 0; i < x.size(); ++i) ASSERT_EQ(y0[i], y1[i]);
}

TEST(Ablation, ZeroQueryAttentionPoolEqualsMeanPool) {
  HeadConfig att = tiny();
  HeadConfig mean = att;
  mean.pool = PoolMode::mean;
  Rng rng(14);
  auto b = random_batch(3, 4, 4, 3, rng);
  b.valid_t = {4, 1, 3};
  DetectionHead<float> a(att, 3, 4), m(mean, 3, 4);
  for (float v : a.find("pool.query")->var.value().values()) ASSERT_EQ(v, 0.f);
  const auto la = logits(a, b), lm = logits(m, b);
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_NEAR(la[i], lm[i], 1e-6);
}

TEST(Ablation, MlpBaselineIgnoresDepth) {
  HeadConfig a = tiny();
  a.head_kind = HeadKind::mlp_baseline;
  HeadConfig b = a;
  b.depth_t = 0;
  b.depth_s = 5;
  Rng rng(15);
  const auto batch = random_batch(2, 4, 4, 3, rng);
  DetectionHead<float> ma(a, 3, 6), mb(b, 3, 6);
  EXPECT_EQ(logits(ma, batch), logits(mb, batch));
  EXPECT_EQ(ma.parameters().size(), 6u);  // proj, head.fc1, head.fc2 weights and biases
}

TEST(Pool, IdenticalTokensPoolToThatToken) {
  Tensor<double> t({1, 3, 2});
  for (Index i = 0; i < 3; ++i) {
    t[i * 2] = 0.7;
    t[i * 2 + 1] = -1.1;
  }
  const auto q = constant(Tensor<double>({2}, std::vector<double>{0.3, 2.0}));
  for (auto mode : {PoolMode::mean, PoolMode::attention}) {
    const auto p = pool_tokens(constant(t), {}, mode, &q).value();
    EXPECT_NEAR(p[0], 0.7, 1e-15);
    EXPECT_NEAR(p[1], -1.1, 1e-15);
  }
}

TEST(Pool, MeanOfTwoUnitVectors) {
  const auto t = constant(Tensor<double>({1, 2, 2}, std::vector<double>{1, 0, 0, 1}));
  const auto p = pool_tokens<double>(t, {}, PoolMode::mean, nullptr).value();
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], 0.5);
}

TEST(Pool, MaskedTokensGetZeroWeight) {
  Rng rng(16);
  auto t = oracle::random_tensor<double>({2, 4, 3}, rng);
  const std::vector<std::uint8_t> valid = {1, 0, 1, 0, 0, 0, 0, 1};
  const auto q = constant(oracle::random_tensor<double>({3}, rng));
  for (auto mode : {PoolMode::mean, PoolMode::attention}) {
    const auto a = pool_tokens(constant(t), valid, mode, &q).value();
    auto u = t;
    for (Index i : {1, 3, 4, 5, 6})
      for (Index e = 0; e < 3; ++e) u[i * 3 + e] = 1e3;
    const auto b = pool_tokens(constant(u), valid, mode, &q).value();
    for (Index i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    // Video 1 has a single valid token.
    for (Index e = 0; e < 3; ++e) EXPECT_NEAR(a[3 + e], t[7 * 3 + e], 1e-15);
  }
}

TEST(Pool, ZeroQueryIsMaskedMean) {
  Rng rng(17);
  const auto t = oracle::random_tensor<double>({2, 5, 4}, rng);
  const std::vector<std::uint8_t> valid = {1, 1, 0, 1, 0, 0, 1, 1, 1, 1};
  const auto q = constant(Tensor<double>({4}));
  const auto a = pool_tokens(constant(t), valid, PoolMode::attention, &q).value();
  const auto m = pool_tokens<double>(constant(t), valid, PoolMode::mean, nullptr).value();
  for (Index i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], m[i], 1e-12);
}

TEST(Pool, NoValidTokenIsContractError) {
  const auto t = constant(Tensor<double>({1, 2, 2}));
  const std::vector<std::uint8_t> valid = {0, 0};
  EXPECT_THROW(pool_tokens<double>(t, valid, PoolMode::mean, nullptr), ContractError);
}

TEST(Predict, TieAndLogistic) {
  EXPECT_EQ(predict(0).probability, 0.5);
  EXPECT_EQ(predict(0).label, 1);
  EXPECT_EQ(predict(-1e-9).label, 0);
  EXPECT_NEAR(predict(2.0).probability, 1 / (1 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(predict(2.0).probability, 0.8808, 1e-4);
  EXPECT_EQ(predict(800).probability, 1.0);
  EXPECT_EQ(predict(-800).probability, 0.0);
}

TEST(Gradcheck, TinyHeadMatchesFiniteDifferences) {
  GradcheckConfig cfg;
  HeadConfig h;
  h.d_model = cfg.d_model;
  h.heads = cfg.heads;
  h.w_t = h.w_s = cfg.window;
  h.depth_t = h.depth_s = 2;
  h.frames = cfg.frames;
  const auto v = gradcheck_head(h, cfg, "shift_attention");
  EXPECT_LT(v.max_rel_err, cfg.tolerance) << v.worst_param;
  EXPECT_GT(v.checked, 500);
  EXPECT_EQ(relative_error(0, 0), 0);
  EXPECT_EQ(relative_error(1e-7, 0), 1e-7 / 1e-6);
}
