// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "easwin/nn.hpp"

namespace easwin {

/// Where every window slot reads from, for a batch of independent sequences.
///
/// Tokens are cyclically rolled left by `shift`, zero-padded up to a whole
/// number of windows and cut into contiguous windows (1D) or square tiles
/// (2D grid). `gather` maps window slots to token rows (-1 = padding);
/// `scatter` is its inverse on real tokens.
struct WindowPlan {
  Index sequences = 0;
  Index length = 0;           // tokens per sequence
  Index window = 0;           // slots per window (W, or W*W on a grid)
  Index windows_per_seq = 0;
  Index shift = 0;
  Index pad = 0;              // padded slots per sequence
  Index grid_side = 0;        // 0 for 1D plans
  Index window_side = 0;      // W on both 1D and grid plans
  std::vector<Index> gather;
  std::vector<Index> scatter;

  bool is_grid() const { return grid_side > 0; }
  Index num_windows() const { return sequences * windows_per_seq; }
};

WindowPlan plan_windows_1d(Index sequences, Index length, Index window, Index shift);
WindowPlan plan_windows_2d(Index sequences, Index side, Index window, Index shift);

/// x (sequences, length, D) -> windows (num_windows, window, D).
template <typename T>
Variable<T> partition(const Variable<T>& x, const WindowPlan& plan);

/// Inverse of partition: windows -> (sequences, length, D); padding dropped.
template <typename T>
Variable<T> merge_windows(const Variable<T>& windows, const WindowPlan& plan);

template <typename T>
struct Partitioned {
  Variable<T> windows;
  WindowPlan plan;
};

/// Roll left by `shift`, pad to a multiple of `window`, split.
template <typename T>
Partitioned<T> partition_1d(const Variable<T>& x, Index window, Index shift);

template <typename T>
Variable<T> merge_1d(const Variable<T>& windows, const WindowPlan& plan) {
  return merge_windows(windows, plan);
}

/// Additive attention mask of shape (num_windows, 1, L, L) with entries 0 or
/// kMaskedLogit. Slot pair (i, j) is open iff i == j or both slots hold valid
/// tokens. `token_valid` has one flag per token row (empty = all valid).
/// Returns an empty tensor when nothing is blocked.
template <typename T>
Tensor<T> window_mask(const WindowPlan& plan, std::span<const std::uint8_t> token_valid);

/// Learnable bias per relative temporal offset per head; table (2W-1, H).
template <typename T>
struct RelPosBias1D {
  Parameter<T> table;
  Index window = 0;
  Index heads = 0;

  RelPosBias1D() = default;
  RelPosBias1D(const std::string& name, Index window_size, Index num_heads);
  /// (H, W, W) with B[h, i, j] = table[i - j + W - 1, h].
  Variable<T> materialize() const;
};

/// Learnable bias per 2D in-window offset per head; table ((2W-1)^2, H).
template <typename T>
struct RelPosBias2D {
  Parameter<T> table;
  Index window = 0;
  Index heads = 0;

  RelPosBias2D() = default;
  RelPosBias2D(const std::string& name, Index window_size, Index num_heads);
  /// (H, W*W, W*W) indexed by the (row, col) offset between two slots.
  Variable<T> materialize() const;
};

/// Query/key/value/output projections, all (D, D) and bias-free.
template <typename T>
struct AttnParams {
  Linear<T> w_q, w_k, w_v, w_o;
  Index dim = 0;
  Index heads = 0;

  AttnParams() = default;
  AttnParams(const std::string& name, Index model_dim, Index num_heads, Rng& rng);
  Index head_dim() const { return dim / heads; }
  void collect(ParamList<T>& out);
};

/// Multi-head self-attention inside each window:
/// softmax(Q K^T / sqrt(d_h) + bias + mask) V per head, heads concatenated
/// and projected by w_o. `bias` is (H, L, L) or null; `mask` as produced by
/// window_mask or null.
template <typename T>
Variable<T> window_attention(const Variable<T>& windows, const AttnParams<T>& params,
                             const std::type_identity_t<Variable<T>>* bias,
                             const std::type_identity_t<Tensor<T>>* mask);

enum class AttentionAxis { temporal, spatial, joint };

/// Spatial layers tile a square token grid; anything else uses 1D windows.
bool is_square_grid(Index tokens);
Index grid_side(Index tokens);

/// One windowed attention sublayer and the bias tables its axis needs.
template <typename T>
class WindowAttentionLayer {
 public:
  WindowAttentionLayer() = default;
  WindowAttentionLayer(const std::string& name, AttentionAxis axis, Index model_dim,
                       Index num_heads, Index window, Rng& rng);

  AttentionAxis axis() const { return axis_; }
  Index window() const { return window_; }
  const AttnParams<T>& params() const { return params_; }
  AttnParams<T>& params() { return params_; }
  const RelPosBias1D<T>& bias_1d() const { return bias_1d_; }
  const RelPosBias2D<T>& bias_2d() const { return bias_2d_; }
  RelPosBias1D<T>& bias_1d() { return bias_1d_; }
  RelPosBias2D<T>& bias_2d() { return bias_2d_; }

  void collect(ParamList<T>& out);

 private:
  AttentionAxis axis_ = AttentionAxis::temporal;
  Index window_ = 1;
  AttnParams<T> params_;
  RelPosBias1D<T> bias_1d_;  // temporal, or the spatial 1D fallback
  RelPosBias2D<T> bias_2d_;  // spatial grid only
};

/// z (B*S, T, D); shift of W_t/2 when `shifted`.
template <typename T>
Variable<T> temporal_swin_layer(const Variable<T>& z, const WindowAttentionLayer<T>& layer,
                                bool shifted, std::span<const std::uint8_t> token_valid = {});

/// z (B*T, S, D); 2D tiles with shift W_s/2 on both axes when S is a
/// perfect square, 1D windows over the token axis otherwise.
template <typename T>
Variable<T> spatial_swin_layer(const Variable<T>& z, const WindowAttentionLayer<T>& layer,
                               bool shifted, std::span<const std::uint8_t> token_valid = {});

/// z (B, M, D); one window spanning all M tokens, no positional bias.
template <typename T>
Variable<T> joint_attention_layer(const Variable<T>& z, const WindowAttentionLayer<T>& layer,
                                  std::span<const std::uint8_t> token_valid = {});

}  // namespace easwin
