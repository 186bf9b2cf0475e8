// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "easwin/model.hpp"
#include "oracles.hpp"

using namespace easwin;

namespace {

// Token ids of every window of sequence 0, read back through partition.
std::vector<std::vector<Index>> window_tokens(Index length, Index window, Index shift) {
  Tensor<double> ids({1, length, 1});
  std::iota(ids.values().begin(), ids.values().end(), 1.0);
  const auto p = partition_1d(constant(ids), window, shift);
  std::vector<std::vector<Index>> out;
  for (Index w = 0; w < p.plan.num_windows(); ++w) {
    std::vector<Index> win;
    for (Index i = 0; i < window; ++i) win.push_back(static_cast<Index>(p.windows.value()[w * window + i]) - 1);
    out.push_back(win);
  }
  return out;
}

bool share_window(const std::vector<std::vector<Index>>& wins, Index a, Index b) {
  for (const auto& w : wins) {
    if (std::count(w.begin(), w.end(), a) && std::count(w.begin(), w.end(), b)) return true;
  }
  return false;
}

}  // namespace

TEST(Partition, SixteenFramesFourWindows) {
  const auto w = window_tokens(16, 4, 0);
  ASSERT_EQ(w.size(), 4u);
  for (Index k = 0; k < 4; ++k) EXPECT_EQ(w[k], (std::vector<Index>{4 * k, 4 * k + 1, 4 * k + 2, 4 * k + 3}));
}

TEST(Partition, ShiftRollsLeft) {
  EXPECT_EQ(window_tokens(4, 4, 2), (std::vector<std::vector<Index>>{{2, 3, 0, 1}}));
}

TEST(Partition, PadsTheLastWindow) {
  const auto w = window_tokens(5, 4, 0);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[1], (std::vector<Index>{4, -1, -1, -1}));  // pads read as zero rows
  EXPECT_EQ(plan_windows_1d(1, 5, 4, 0).pad, 3);
}

TEST(Partition, ArgumentErrors) {
  EXPECT_THROW(plan_windows_1d(1, 0, 4, 0), ContractError);
  EXPECT_THROW(plan_windows_1d(1, 8, 4, 4), ContractError);
  EXPECT_THROW(plan_windows_1d(1, 8, 0, 0), ContractError);
}

TEST(Partition, MergeRoundTripsForEveryShift) {
  Rng rng(5);
  for (Index len = 1; len <= 13; ++len)
    for (Index w = 1; w <= 6; ++w)
      for (Index s = 0; s < w; ++s) {
        const auto x = oracle::random_tensor<float>({2, len, 3}, rng);
        const auto p = partition_1d(constant(x), w, s);
        const auto back = merge_1d(p.windows, p.plan).value();
        ASSERT_EQ(back.shape(), x.shape());
        for (Index i = 0; i < x.size(); ++i) ASSERT_EQ(back[i], x[i]);
      }
  for (Index side = 1; side <= 5; ++side)
    for (Index w = 1; w <= 3; ++w)
      for (Index s = 0; s < w; ++s) {
        const auto x = oracle::random_tensor<float>({2, side * side, 2}, rng);
        const auto plan = plan_windows_2d(2, side, w, s);
        const auto back = merge_windows(partition(constant(x), plan), plan).value();
        for (Index i = 0; i < x.size(); ++i) ASSERT_EQ(back[i], x[i]);
      }
}

TEST(Partition, PlansMatchTheDefinition) {
  for (Index len = 1; len <= 11; ++len)
    for (Index w = 1; w <= 5; ++w)
      for (Index s = 0; s < w; ++s) {
        const auto plan = plan_windows_1d(1, len, w, s);
        const auto ref = oracle::windows_1d(len, w, s);
        std::vector<Index> flat;
        for (const auto& win : ref) flat.insert(flat.end(), win.begin(), win.end());
        ASSERT_EQ(plan.gather, flat);
      }
}

TEST(Partition, EightFramesTokensThreeAndFourMeetOnlyWhenShifted) {
  EXPECT_FALSE(share_window(window_tokens(8, 4, 0), 3, 4));
  EXPECT_TRUE(share_window(window_tokens(8, 4, 2), 3, 4));
}

TEST(Mask, EntriesAndPaddingRule) {
  std::vector<std::uint8_t> valid = {1, 1, 0, 1, 1};
  const auto plan = plan_windows_1d(1, 5, 4, 0);
  const auto m = window_mask<float>(plan, valid);
  ASSERT_EQ(m.shape(), (Shape{2, 1, 4, 4}));
  const float blocked = static_cast<float>(kMaskedLogit);
  for (float v : m.values()) EXPECT_TRUE(v == 0.f || v == blocked);
  // Window 0 holds tokens 0..3, token 2 invalid: its row and column are
  // blocked except the diagonal.
  for (Index j = 0; j < 4; ++j) {
    EXPECT_EQ(m[2 * 4 + j], j == 2 ? 0.f : blocked);
    EXPECT_EQ(m[j * 4 + 2], j == 2 ? 0.f : blocked);
  }
  EXPECT_EQ(m[0 * 4 + 1], 0.f);
  // Window 1 is token 4 plus three pads.
  const float* w1 = m.data() + 16;
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) EXPECT_EQ(w1[i * 4 + j], i == j ? 0.f : blocked);
  EXPECT_TRUE(window_mask<float>(plan_windows_1d(1, 8, 4, 2), {}).empty());
}

TEST(Bias, OneDimensionalDependsOnlyOnOffset) {
  RelPosBias1D<double> b("b", 4, 2);
  Rng rng(7);
  for (double& v : b.table.var.mutable_value().values()) v = rng.normal();
  const auto m = b.materialize().value();
  ASSERT_EQ(m.shape(), (Shape{2, 4, 4}));
  const auto& t = b.table.var.value();
  for (Index h = 0; h < 2; ++h)
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 4; ++j) EXPECT_EQ(m[(h * 4 + i) * 4 + j], t[(i - j + 3) * 2 + h]);
}

TEST(Bias, GridDependsOnlyOnTwoDimensionalOffset) {
  RelPosBias2D<double> b("b", 3, 2);
  Rng rng(8);
  for (double& v : b.table.var.mutable_value().values()) v = rng.normal();
  const auto m = b.materialize().value();
  const Index n = 9;
  ASSERT_EQ(m.shape(), (Shape{2, n, n}));
  // Equal offsets give equal entries; distinct offsets give distinct entries
  // for a generic table.
  for (Index h = 0; h < 2; ++h)
    for (Index p = 0; p < n; ++p)
      for (Index q = 0; q < n; ++q)
        for (Index p2 = 0; p2 < n; ++p2)
          for (Index q2 = 0; q2 < n; ++q2) {
            const bool same = p / 3 - q / 3 == p2 / 3 - q2 / 3 && p % 3 - q % 3 == p2 % 3 - q2 % 3;
            EXPECT_EQ(m[(h * n + p) * n + q] == m[(h * n + p2) * n + q2], same);
          }
}

TEST(Bias, ZeroInitialized) {
  Rng rng(1);
  WindowAttentionLayer<float> layer("a", AttentionAxis::spatial, 8, 2, 4, rng);
  for (float v : layer.bias_1d().table.var.value().values()) EXPECT_EQ(v, 0.f);
  for (float v : layer.bias_2d().table.var.value().values()) EXPECT_EQ(v, 0.f);
  EXPECT_EQ(layer.bias_1d().table.var.shape(), (Shape{7, 2}));
  EXPECT_EQ(layer.bias_2d().table.var.shape(), (Shape{49, 2}));
}

TEST(Bias, PermutingWindowContentPermutesOutputsWithTheOffsets) {
  // Every window sees the same offset table, so swapping the content of two
  // windows swaps their outputs.
  Rng rng(9);
  WindowAttentionLayer<double> layer("a", AttentionAxis::temporal, 4, 2, 4, rng);
  for (double& v : layer.bias_1d().table.var.mutable_value().values()) v = rng.normal();
  auto x = oracle::random_tensor<double>({1, 8, 4}, rng);
  auto swapped = x;
  for (Index i = 0; i < 16; ++i) std::swap(swapped[i], swapped[16 + i]);
  const auto a = temporal_swin_layer(constant(x), layer, false).value();
  const auto b = temporal_swin_layer(constant(swapped), layer, false).value();
  for (Index i = 0; i < 16; ++i) {
    EXPECT_NEAR(a[i], b[16 + i], 1e-12);
    EXPECT_NEAR(a[16 + i], b[i], 1e-12);
  }
}

TEST(WindowAttention, SingleTokenReturnsValueRow) {
  Rng rng(2);
  AttnParams<double> p("a", 4, 2, rng);
  auto& wo = p.w_o.weight.var.mutable_value();
  wo.fill(0);
  for (Index i = 0; i < 4; ++i) wo[i * 4 + i] = 1;
  const auto x = oracle::random_tensor<double>({3, 1, 4}, rng);
  const auto out = window_attention(constant(x), p, nullptr, nullptr).value();
  const auto v = oracle::matmul(oracle::to_mat(x), oracle::to_mat(p.w_v.weight.var.value()), 3, 4, 4);
  for (Index i = 0; i < 12; ++i) EXPECT_NEAR(out[i], v[i], 1e-12);
}

TEST(WindowAttention, IdenticalKeysGiveUniformWeights) {
  // Zero keys and zero bias: each row averages V uniformly.
  Rng rng(3);
  AttnParams<double> p("a", 4, 1, rng);
  p.w_k.weight.var.mutable_value().fill(0);  // every key is zero
  const auto x = oracle::random_tensor<double>({1, 5, 4}, rng);
  const auto out = window_attention(constant(x), p, nullptr, nullptr).value();
  const auto v = oracle::matmul(oracle::to_mat(x), oracle::to_mat(p.w_v.weight.var.value()), 5, 4, 4);
  oracle::Mat mean(4, 0.0);
  for (Index i = 0; i < 5; ++i)
    for (Index e = 0; e < 4; ++e) mean[e] += v[i * 4 + e] / 5;
  const auto y = oracle::matmul(mean, oracle::to_mat(p.w_o.weight.var.value()), 1, 4, 4);
  for (Index i = 0; i < 5; ++i)
    for (Index e = 0; e < 4; ++e) EXPECT_NEAR(out[i * 4 + e], y[e], 1e-12);
}

TEST(WindowAttention, MatchesDenseOracle) {
  Rng rng(4);
  AttnParams<double> p("a", 8, 2, rng);
  RelPosBias1D<double> bias("b", 4, 2);
  for (double& v : bias.table.var.mutable_value().values()) v = rng.normal();
  const auto x = oracle::random_tensor<double>({3, 4, 8}, rng);
  const auto b = bias.materialize();
  const auto out = window_attention(constant(x), p, &b, nullptr).value();
  const auto ref = oracle::windowed_layer(oracle::to_mat(x), 3, 4, 8, oracle::windows_1d(4, 4, 0),
                                          oracle::weights_of(p),
                                          oracle::bias_1d(oracle::to_mat(bias.table.var.value()), 4, 2));
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[static_cast<Index>(i)], ref[i], 1e-12);
}

TEST(WindowAttention, ShapeErrors) {
  Rng rng(5);
  AttnParams<float> p("a", 8, 2, rng);
  const auto x = constant(Tensor<float>({2, 4, 8}));
  const auto bad_bias = constant(Tensor<float>({2, 3, 3}));
  EXPECT_THROW(window_attention(x, p, &bad_bias, nullptr), DimensionError);
  EXPECT_THROW(window_attention(constant(Tensor<float>({2, 4, 6})), p, nullptr, nullptr), DimensionError);
  EXPECT_THROW(window_attention(constant(Tensor<float>({2, 0, 8})), p, nullptr, nullptr), ContractError);
  EXPECT_THROW(AttnParams<float>("a", 6, 4, rng), ConfigError);
}

TEST(WindowAttention, PaddedRowsStayFinite) {
  Rng rng(6);
  WindowAttentionLayer<float> layer("a", AttentionAxis::temporal, 8, 2, 4, rng);
  const auto x = oracle::random_tensor<float>({2, 5, 8}, rng);
  std::vector<std::uint8_t> valid(10, 0);
  valid[0] = 1;
  const auto y = temporal_swin_layer(constant(x), layer, true, valid).value();
  EXPECT_TRUE(y.all_finite());
}

TEST(SwinLayers, RandomCasesMatchOracle) {
  int kinds[3] = {0, 0, 0};
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto c = oracle::attention_case(seed);
    ++kinds[static_cast<int>(c.kind)];
    ASSERT_LT(c.max_abs_err, 1e-5) << "seed " << seed << " L=" << c.window << " D=" << c.dim
                                   << " H=" << c.heads << " shifted=" << c.shifted;
  }
  for (int k : kinds) EXPECT_GT(k, 30);
}

TEST(SwinLayers, UnshiftedSingleWindowIsPlainAttention) {
  Rng rng(10);
  WindowAttentionLayer<double> layer("a", AttentionAxis::temporal, 8, 2, 4, rng);
  for (double& v : layer.bias_1d().table.var.mutable_value().values()) v = rng.normal();
  const auto x = oracle::random_tensor<double>({3, 4, 8}, rng);
  const auto a = temporal_swin_layer(constant(x), layer, false).value();
  const auto bias = layer.bias_1d().materialize();
  const auto b = window_attention(constant(x), layer.params(), &bias, nullptr).value();
  for (Index i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-13);
}

TEST(SwinLayers, SixteenTokensFormOneGridWindow) {
  const auto plan = plan_windows_2d(1, 4, 4, 0);
  EXPECT_TRUE(plan.is_grid());
  EXPECT_EQ(plan.num_windows(), 1);
  EXPECT_EQ(plan.window, 16);
  EXPECT_EQ(plan.pad, 0);
  EXPECT_TRUE(is_square_grid(16));
  EXPECT_EQ(grid_side(16), 4);
}

TEST(SwinLayers, SixTokensFallBackToOneDimension) {
  EXPECT_FALSE(is_square_grid(6));
  HeadConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  DetectionHead<float> head(cfg, 3, 0);
  for (const auto& info : head.layer_info(6)) {
    if (info.axis == AttentionAxis::spatial) EXPECT_FALSE(info.grid) << info.name;
  }
  for (const auto& info : head.layer_info(16)) {
    if (info.axis == AttentionAxis::spatial) EXPECT_TRUE(info.grid) << info.name;
  }
}

TEST(SwinLayers, SingleTokenSpatialLayerIsPerTokenValue) {
  Rng rng(11);
  WindowAttentionLayer<double> layer("a", AttentionAxis::spatial, 4, 2, 4, rng);
  const auto x = oracle::random_tensor<double>({5, 1, 4}, rng);
  const auto y = spatial_swin_layer(constant(x), layer, true).value();
  const auto w = oracle::weights_of(layer.params());
  const auto v = oracle::matmul(oracle::to_mat(x), w.wv, 5, 4, 4);
  const auto ref = oracle::matmul(v, w.wo, 5, 4, 4);
  for (Index i = 0; i < 20; ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(JointLayer, MatchesDenseOracleOverAllTokens) {
  Rng rng(12);
  WindowAttentionLayer<double> layer("a", AttentionAxis::joint, 4, 2, 1, rng);
  const auto x = oracle::random_tensor<double>({2, 4, 4}, rng);  // T=2, S=2 flattened
  const auto y = joint_attention_layer(constant(x), layer).value();
  const auto ref = oracle::windowed_layer(oracle::to_mat(x), 2, 4, 4, oracle::windows_1d(4, 4, 0),
                                          oracle::weights_of(layer.params()), oracle::zero_bias);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[static_cast<Index>(i)], ref[i], 1e-12);
}

TEST(JointLayer, EqualsUnbiasedSingleWindowPass) {
  Rng rng(13);
  WindowAttentionLayer<double> layer("a", AttentionAxis::joint, 8, 4, 1, rng);
  const auto x = oracle::random_tensor<double>({1, 6, 8}, rng);
  const auto a = joint_attention_layer(constant(x), layer).value();
  const auto b = window_attention(constant(x), layer.params(), nullptr, nullptr).value();
  for (Index i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-13);
}
