// SPDX-License-Identifier: Apache-2.0
#include "easwin/model.hpp"

#include <algorithm>
#include <cmath>

namespace easwin {

std::string to_string(PoolMode m) { return m == PoolMode::mean ? "mean" : "attention"; }
std::string to_string(HeadKind k) { return k == HeadKind::swin ? "swin" : "mlp_baseline"; }

PoolMode parse_pool_mode(const std::string& s) {
  if (s == "mean") return PoolMode::mean;
  if (s == "attention") return PoolMode::attention;
  throw ConfigError("unknown pool mode '" + s + "' (expected mean|attention)");
}

HeadKind parse_head_kind(const std::string& s) {
  if (s == "swin") return HeadKind::swin;
  if (s == "mlp_baseline") return HeadKind::mlp_baseline;
  throw ConfigError("unknown head kind '" + s + "' (expected swin|mlp_baseline)");
}

void HeadConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(d_model >= 2, "d_model must be >= 2");
  require(heads >= 1, "heads must be >= 1");
  require(d_model % heads == 0, "d_model must be divisible by heads");
  require(w_t >= 1 && w_s >= 1, "window sizes must be >= 1");
  require(depth_t >= 0 && depth_s >= 0, "depths must be >= 0");
  require(tubelet >= 1, "tubelet must be >= 1");
  require(frames >= 1, "frames must be >= 1");
}

void EmbeddingBatch::validate() const {
  if (z.ndim() != 4) throw ContractError("embedding batch must be 4D (B, T, S, D_in)");
  for (Index e : z.shape()) {
    if (e < 1) throw ContractError("embedding batch extents must be >= 1, got " + shape_str(z.shape()));
  }
  if (static_cast<Index>(valid_t.size()) != batch()) {
    throw ContractError("valid_t has " + std::to_string(valid_t.size()) + " entries for " +
                        std::to_string(batch()) + " videos");
  }
  for (int v : valid_t) {
    if (v < 1 || v > frames()) throw ContractError("valid_t entries must lie in [1, T]");
  }
  if (!labels.empty()) {
    if (static_cast<Index>(labels.size()) != batch()) {
      throw ContractError("label count does not match batch size");
    }
    for (int l : labels) {
      if (l != 0 && l != 1) throw ContractError("labels must be 0 or 1");
    }
  }
}

template <typename T>
SwinBlock<T>::SwinBlock(const std::string& name, AttentionAxis axis, Index dim, Index heads,
                        Index window, Rng& rng)
    : ln1(name + ".ln1", dim),
      ln2(name + ".ln2", dim),
      mlp(name + ".mlp", dim, 4 * dim, dim, rng),
      attn_(name + ".attn", axis, dim, heads, window, rng) {}

template <typename T>
Variable<T> SwinBlock<T>::forward(const Variable<T>& x, bool shifted,
                                  std::span<const std::uint8_t> token_valid) const {
  const Variable<T> normed = ln1.forward(x);
  Variable<T> attended;
  switch (attn_.axis()) {
    case AttentionAxis::temporal:
      attended = temporal_swin_layer(normed, attn_, shifted, token_valid);
      break;
    case AttentionAxis::spatial:
      attended = spatial_swin_layer(normed, attn_, shifted, token_valid);
      break;
    case AttentionAxis::joint:
      attended = joint_attention_layer(normed, attn_, token_valid);
      break;
  }
  const Variable<T> y = add(x, attended);
  return add(y, mlp.forward(ln2.forward(y)));
}

template <typename T>
void SwinBlock<T>::collect(ParamList<T>& out) {
  ln1.collect(out);
  attn_.collect(out);
  ln2.collect(out);
  mlp.collect(out);
}

template <typename T>
Variable<T> pool_tokens(const Variable<T>& tokens, std::span<const std::uint8_t> token_valid,
                        PoolMode mode, const Variable<T>* query) {
  if (tokens.value().ndim() != 3) {
    throw DimensionError("pool_tokens expects (B, M, D), got " + shape_str(tokens.shape()));
  }
  const Index b = tokens.dim(0), m = tokens.dim(1), d = tokens.dim(2);
  if (!token_valid.empty() && static_cast<Index>(token_valid.size()) != b * m) {
    throw DimensionError("pool_tokens: validity size does not match tokens");
  }
  auto valid = [&](Index i, Index j) {
    return token_valid.empty() || token_valid[static_cast<std::size_t>(i * m + j)] != 0;
  };
  for (Index i = 0; i < b; ++i) {
    Index count = 0;
    for (Index j = 0; j < m; ++j) count += valid(i, j) ? 1 : 0;
    if (count == 0) throw ContractError("pool_tokens: video " + std::to_string(i) + " has no valid token");
  }

  Variable<T> weights;
  if (mode == PoolMode::mean) {
    Tensor<T> w({b, 1, m});
    for (Index i = 0; i < b; ++i) {
      Index count = 0;
      for (Index j = 0; j < m; ++j) count += valid(i, j) ? 1 : 0;
      const T inv = T(1) / static_cast<T>(count);
      for (Index j = 0; j < m; ++j) w[i * m + j] = valid(i, j) ? inv : T(0);
    }
    weights = constant(std::move(w));
  } else {
    if (!query || query->shape() != Shape{d}) {
      throw DimensionError("pool_tokens: attention mode needs a query of shape [" +
                           std::to_string(d) + "]");
    }
    Variable<T> scores = reshape(matmul(tokens, reshape(*query, {d, 1})), {b, 1, m});
    scores = scale(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));
    if (!token_valid.empty()) {
      Tensor<T> mask({b, 1, m});
      for (Index i = 0; i < b; ++i) {
        for (Index j = 0; j < m; ++j) mask[i * m + j] = valid(i, j) ? T(0) : static_cast<T>(kMaskedLogit);
      }
      scores = add(scores, constant(std::move(mask)));
    }
    weights = softmax_lastdim(scores);
  }
  return reshape(matmul(weights, tokens), {b, d});
}

Prediction predict(double logit) {
  const double p = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit))
                              : std::exp(logit) / (1.0 + std::exp(logit));
  return {p, p >= 0.5 ? 1 : 0};
}

template <typename T>
DetectionHead<T>::DetectionHead(const HeadConfig& cfg, Index input_dim, std::uint64_t seed)
    : cfg_(cfg), input_dim_(input_dim) {
  cfg_.validate();
  if (input_dim < 1) throw ConfigError("input dim must be >= 1");
  Rng rng(seed);
  const Index d = cfg_.d_model;
  proj_ = Linear<T>("proj", cfg_.tubelet * input_dim, d, rng);
  if (cfg_.head_kind == HeadKind::mlp_baseline) {
    classifier_ = FeedForward<T>("head", d, d, 1, rng);
    return;
  }
  if (cfg_.joint_attention) {
    for (Index i = 0; i < cfg_.depth_t + cfg_.depth_s; ++i) {
      joint_.emplace_back("blocks.j" + std::to_string(i), AttentionAxis::joint, d, cfg_.heads, 1,
                          rng);
    }
  } else {
    for (Index i = 0; i < cfg_.depth_t; ++i) {
      temporal_.emplace_back("blocks.t" + std::to_string(i), AttentionAxis::temporal, d,
                             cfg_.heads, cfg_.w_t, rng);
    }
    for (Index i = 0; i < cfg_.depth_s; ++i) {
      spatial_.emplace_back("blocks.s" + std::to_string(i), AttentionAxis::spatial, d, cfg_.heads,
                            cfg_.w_s, rng);
    }
  }
  if (cfg_.pool == PoolMode::attention) pool_query_ = filled_parameter<T>("pool.query", {d}, T(0));
  classifier_ = FeedForward<T>("head", d, d / 2, 1, rng);
}

template <typename T>
Variable<T> DetectionHead<T>::project_input(const EmbeddingBatch& batch) const {
  batch.validate();
  if (batch.input_dim() != input_dim_) {
    throw DimensionError("embedding dim " + std::to_string(batch.input_dim()) +
                         " does not match head input dim " + std::to_string(input_dim_));
  }
  if (!batch.z.all_finite()) throw NumericError("non-finite value in input embeddings");
  const Index b = batch.batch(), t = batch.frames(), s = batch.tokens(), din = batch.input_dim();
  const Index tau = cfg_.tubelet;
  if (t % tau != 0) {
    throw ConfigError("tubelet " + std::to_string(tau) + " does not divide T=" + std::to_string(t));
  }
  NameScope scope("proj");
  Variable<T> z = constant(batch.z.template cast<T>());
  if (tau > 1) {
    z = reshape(permute(reshape(z, {b, t / tau, tau, s, din}), {0, 1, 3, 2, 4}),
                {b, t / tau, s, tau * din});
  }
  return proj_.forward(z);
}

namespace {

// Token flags for a (B, frames, tokens) layout; empty when every frame is real.
std::vector<std::uint8_t> frame_validity(const std::vector<int>& valid_frames, Index frames,
                                         Index tokens, bool tokens_major) {
  const bool all = std::all_of(valid_frames.begin(), valid_frames.end(),
                               [&](int v) { return v >= frames; });
  if (all) return {};
  const auto b = static_cast<Index>(valid_frames.size());
  std::vector<std::uint8_t> flags(static_cast<std::size_t>(b * frames * tokens));
  for (Index i = 0; i < b; ++i) {
    for (Index f = 0; f < frames; ++f) {
      for (Index k = 0; k < tokens; ++k) {
        const Index pos = tokens_major ? (i * tokens + k) * frames + f : (i * frames + f) * tokens + k;
        flags[static_cast<std::size_t>(pos)] = f < valid_frames[static_cast<std::size_t>(i)] ? 1 : 0;
      }
    }
  }
  return flags;
}

}  // namespace

template <typename T>
Variable<T> DetectionHead<T>::forward(const EmbeddingBatch& batch) const {
  Variable<T> x = project_input(batch);
  const Index b = x.dim(0), t = x.dim(1), s = x.dim(2), d = x.dim(3);
  std::vector<int> valid_frames(batch.valid_t.size());
  for (std::size_t i = 0; i < valid_frames.size(); ++i) {
    valid_frames[i] = static_cast<int>((batch.valid_t[i] + cfg_.tubelet - 1) / cfg_.tubelet);
  }
  // (B, T', S) order: frame-major flags used by spatial, joint and pooling.
  const std::vector<std::uint8_t> frame_major = frame_validity(valid_frames, t, s, false);

  Variable<T> tokens;
  if (cfg_.head_kind == HeadKind::mlp_baseline) {
    tokens = reshape(x, {b, t * s, d});
    NameScope scope("head");
    const Variable<T> pooled = pool_tokens<T>(tokens, frame_major, PoolMode::mean, nullptr);
    return reshape(classifier_.forward(pooled), {b});
  }

  if (cfg_.joint_attention) {
    Variable<T> z = reshape(x, {b, t * s, d});
    for (std::size_t i = 0; i < joint_.size(); ++i) {
      NameScope scope("blocks.j" + std::to_string(i));
      z = joint_[i].forward(z, false, frame_major);
    }
    tokens = z;
  } else {
    Variable<T> z = x;
    if (!temporal_.empty()) {
      const std::vector<std::uint8_t> token_major = frame_validity(valid_frames, t, s, true);
      z = reshape(permute(z, {0, 2, 1, 3}), {b * s, t, d});
      for (std::size_t i = 0; i < temporal_.size(); ++i) {
        NameScope scope("blocks.t" + std::to_string(i));
        z = temporal_[i].forward(z, cfg_.use_shift && i % 2 == 1, token_major);
      }
      z = permute(reshape(z, {b, s, t, d}), {0, 2, 1, 3});
    }
    z = reshape(z, {b * t, s, d});
    for (std::size_t i = 0; i < spatial_.size(); ++i) {
      NameScope scope("blocks.s" + std::to_string(i));
      z = spatial_[i].forward(z, cfg_.use_shift && i % 2 == 1, frame_major);
    }
    tokens = reshape(z, {b, t * s, d});
  }

  NameScope scope("head");
  const Variable<T> pooled =
      pool_tokens<T>(tokens, frame_major, cfg_.pool,
                     cfg_.pool == PoolMode::attention ? &pool_query_.var : nullptr);
  return reshape(classifier_.forward(pooled), {b});
}

template <typename T>
ParamList<T> DetectionHead<T>::parameters() {
  ParamList<T> out;
  proj_.collect(out);
  for (auto& blk : temporal_) blk.collect(out);
  for (auto& blk : spatial_) blk.collect(out);
  for (auto& blk : joint_) blk.collect(out);
  if (pool_query_.var.defined()) out.push_back(&pool_query_);
  classifier_.collect(out);
  return out;
}

template <typename T>
Parameter<T>* DetectionHead<T>::find(const std::string& name) {
  for (Parameter<T>* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

template <typename T>
std::vector<LayerInfo> DetectionHead<T>::layer_info(Index tokens) const {
  std::vector<LayerInfo> out;
  for (std::size_t i = 0; i < temporal_.size(); ++i) {
    out.push_back({"blocks.t" + std::to_string(i), AttentionAxis::temporal,
                   cfg_.use_shift && i % 2 == 1, false});
  }
  for (std::size_t i = 0; i < spatial_.size(); ++i) {
    out.push_back({"blocks.s" + std::to_string(i), AttentionAxis::spatial,
                   cfg_.use_shift && i % 2 == 1, is_square_grid(tokens)});
  }
  for (std::size_t i = 0; i < joint_.size(); ++i) {
    out.push_back({"blocks.j" + std::to_string(i), AttentionAxis::joint, false, false});
  }
  return out;
}

std::vector<std::pair<std::string, HeadConfig>> ablation_variants(const HeadConfig& base) {
  HeadConfig swin = base;
  swin.head_kind = HeadKind::swin;
  swin.joint_attention = false;
  swin.use_shift = true;
  swin.pool = PoolMode::attention;
  std::vector<std::pair<std::string, HeadConfig>> out;
  out.emplace_back("base", swin);
  HeadConfig v = swin;
  v.use_shift = false;
  out.emplace_back("no_shift", v);
  v = swin;
  v.joint_attention = true;
  out.emplace_back("joint_attention", v);
  v = swin;
  v.pool = PoolMode::mean;
  out.emplace_back("mean_pool", v);
  v = swin;
  v.head_kind = HeadKind::mlp_baseline;
  out.emplace_back("mlp_baseline", v);
  return out;
}

template class SwinBlock<float>;
template class SwinBlock<double>;
template class DetectionHead<float>;
template class DetectionHead<double>;
template Variable<float> pool_tokens(const Variable<float>&, std::span<const std::uint8_t>,
                                     PoolMode, const Variable<float>*);
template Variable<double> pool_tokens(const Variable<double>&, std::span<const std::uint8_t>,
                                      PoolMode, const Variable<double>*);

}  // namespace easwin
