// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "easwin/attention.hpp"

namespace easwin {

enum class PoolMode { mean, attention };
enum class HeadKind { swin, mlp_baseline };

std::string to_string(PoolMode m);
std::string to_string(HeadKind k);
PoolMode parse_pool_mode(const std::string& s);
HeadKind parse_head_kind(const std::string& s);

/// Architecture of the head, including the ablation switches.
struct HeadConfig {
  Index d_model = 512;
  Index heads = 8;
  Index w_t = 4;
  Index w_s = 4;
  Index depth_t = 2;
  Index depth_s = 2;
  Index tubelet = 1;
  PoolMode pool = PoolMode::attention;
  HeadKind head_kind = HeadKind::swin;
  bool use_shift = true;
  bool joint_attention = false;
  Index frames = 16;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  bool operator==(const HeadConfig&) const = default;
};

/// Pre-extracted encoder embeddings for a batch of videos.
struct EmbeddingBatch {
  Tensor<float> z;           // (B, T, S, D_in)
  std::vector<int> valid_t;  // real frames per video, 1..T
  std::vector<int> labels;   // 0 real, 1 generated; may be empty

  Index batch() const { return z.dim(0); }
  Index frames() const { return z.dim(1); }
  Index tokens() const { return z.dim(2); }
  Index input_dim() const { return z.dim(3); }
  /// Throws ContractError if shapes, counts or labels are inconsistent.
  void validate() const;
};

/// Pre-norm transformer block around one windowed attention sublayer:
/// y = x + MSA(LN(x)); z = y + MLP(LN(y)).
template <typename T>
class SwinBlock {
 public:
  SwinBlock() = default;
  SwinBlock(const std::string& name, AttentionAxis axis, Index dim, Index heads, Index window,
            Rng& rng);

  /// x is (B*S, T, D) for temporal, (B*T, S, D) for spatial and (B, T*S, D)
  /// for joint blocks.
  Variable<T> forward(const Variable<T>& x, bool shifted,
                      std::span<const std::uint8_t> token_valid = {}) const;

  AttentionAxis axis() const { return attn_.axis(); }
  LayerNorm<T> ln1, ln2;
  FeedForward<T> mlp;
  WindowAttentionLayer<T>& attention() { return attn_; }
  const WindowAttentionLayer<T>& attention() const { return attn_; }
  void collect(ParamList<T>& out);

 private:
  WindowAttentionLayer<T> attn_;
};

template <typename T>
Variable<T> swin_block(const Variable<T>& x, const SwinBlock<T>& block, bool shifted) {
  return block.forward(x, shifted);
}

/// tokens (B, M, D) -> (B, D). Mean mode averages valid tokens; attention
/// mode weights them by softmax(q . token / sqrt(D)). Invalid tokens get a
/// weight of exactly zero. `token_valid` is B*M flags or empty (all valid).
template <typename T>
Variable<T> pool_tokens(const Variable<T>& tokens, std::span<const std::uint8_t> token_valid,
                        PoolMode mode, const Variable<T>* query);

struct Prediction {
  double probability;
  int label;
};

/// Logistic probability; class 1 (generated) iff p >= 0.5, so a tie is 1.
Prediction predict(double logit);

/// Layout decisions a head makes for a given token count.
struct LayerInfo {
  std::string name;
  AttentionAxis axis;
  bool shifted;
  bool grid;  // spatial 2D tiling (false = 1D fallback)
};

/// The full detection head: input projection, D_t temporal then D_s spatial
/// Swin blocks (or a joint-attention stack, or no blocks for the MLP
/// baseline), masked pooling and the logit classifier.
template <typename T>
class DetectionHead {
 public:
  DetectionHead(const HeadConfig& cfg, Index input_dim, std::uint64_t seed);
  // Copies would alias parameter storage.
  DetectionHead(const DetectionHead&) = delete;
  DetectionHead& operator=(const DetectionHead&) = delete;
  DetectionHead(DetectionHead&&) = default;
  DetectionHead& operator=(DetectionHead&&) = default;

  const HeadConfig& config() const { return cfg_; }
  Index input_dim() const { return input_dim_; }

  /// (B, T, S, D_in) -> (B, T/tubelet, S, D).
  Variable<T> project_input(const EmbeddingBatch& batch) const;
  /// Logits of shape (B).
  Variable<T> forward(const EmbeddingBatch& batch) const;

  ParamList<T> parameters();
  Parameter<T>* find(const std::string& name);
  std::vector<LayerInfo> layer_info(Index tokens) const;

  std::vector<SwinBlock<T>>& temporal_blocks() { return temporal_; }
  std::vector<SwinBlock<T>>& spatial_blocks() { return spatial_; }
  std::vector<SwinBlock<T>>& joint_blocks() { return joint_; }

 private:
  HeadConfig cfg_;
  Index input_dim_;
  Linear<T> proj_;
  std::vector<SwinBlock<T>> temporal_, spatial_, joint_;
  Parameter<T> pool_query_;
  FeedForward<T> classifier_;
};

/// The base config followed by the four ablations: no shift, joint
/// attention, mean pooling, MLP baseline. Names are stable row labels.
std::vector<std::pair<std::string, HeadConfig>> ablation_variants(const HeadConfig& base);

extern template class DetectionHead<float>;
extern template class DetectionHead<double>;

}  // namespace easwin
