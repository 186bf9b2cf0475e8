// SPDX-License-Identifier: Apache-2.0
#include "easwin/attention.hpp"

#include <algorithm>
#include <cmath>

namespace easwin {

namespace {

void check_window_args(Index length, Index window, Index shift) {
  if (length <= 0) throw ContractError("window partition of an empty sequence");
  if (window < 1) throw ContractError("window size must be >= 1");
  if (shift < 0 || shift >= window) {
    throw ContractError("shift " + std::to_string(shift) + " outside [0, " +
                        std::to_string(window) + ")");
  }
}

void fill_scatter(WindowPlan& plan) {
  plan.scatter.assign(static_cast<std::size_t>(plan.sequences * plan.length), -1);
  for (std::size_t slot = 0; slot < plan.gather.size(); ++slot) {
    const Index tok = plan.gather[slot];
    if (tok >= 0) plan.scatter[static_cast<std::size_t>(tok)] = static_cast<Index>(slot);
  }
}

}  // namespace

WindowPlan plan_windows_1d(Index sequences, Index length, Index window, Index shift) {
  check_window_args(length, window, shift);
  WindowPlan plan;
  plan.sequences = sequences;
  plan.length = length;
  plan.window = window;
  plan.window_side = window;
  plan.shift = shift;
  plan.windows_per_seq = (length + window - 1) / window;
  plan.pad = plan.windows_per_seq * window - length;
  const Index padded = plan.windows_per_seq * window;
  plan.gather.resize(static_cast<std::size_t>(sequences * padded));
  for (Index s = 0; s < sequences; ++s) {
    for (Index p = 0; p < padded; ++p) {
      plan.gather[static_cast<std::size_t>(s * padded + p)] =
          p < length ? s * length + (p + shift) % length : -1;
    }
  }
  fill_scatter(plan);
  return plan;
}

WindowPlan plan_windows_2d(Index sequences, Index side, Index window, Index shift) {
  check_window_args(side, window, shift);
  WindowPlan plan;
  plan.sequences = sequences;
  plan.length = side * side;
  plan.window = window * window;
  plan.window_side = window;
  plan.grid_side = side;
  plan.shift = shift;
  const Index tiles = (side + window - 1) / window;
  plan.windows_per_seq = tiles * tiles;
  plan.pad = tiles * tiles * window * window - side * side;
  plan.gather.reserve(static_cast<std::size_t>(sequences * plan.windows_per_seq * plan.window));
  for (Index s = 0; s < sequences; ++s) {
    for (Index tr = 0; tr < tiles; ++tr) {
      for (Index tc = 0; tc < tiles; ++tc) {
        for (Index i = 0; i < window; ++i) {
          for (Index j = 0; j < window; ++j) {
            const Index r = tr * window + i;
            const Index c = tc * window + j;
            if (r >= side || c >= side) {
              plan.gather.push_back(-1);
            } else {
              const Index sr = (r + shift) % side;
              const Index sc = (c + shift) % side;
              plan.gather.push_back(s * plan.length + sr * side + sc);
            }
          }
        }
      }
    }
  }
  fill_scatter(plan);
  return plan;
}

template <typename T>
Variable<T> partition(const Variable<T>& x, const WindowPlan& plan) {
  if (x.value().ndim() != 3 || x.dim(0) != plan.sequences || x.dim(1) != plan.length) {
    throw DimensionError("partition: input " + shape_str(x.shape()) + " does not match plan (" +
                         std::to_string(plan.sequences) + ", " + std::to_string(plan.length) +
                         ", D)");
  }
  const Index d = x.dim(2);
  return gather_rows(x, d, plan.gather, {plan.num_windows(), plan.window, d});
}

template <typename T>
Variable<T> merge_windows(const Variable<T>& windows, const WindowPlan& plan) {
  if (windows.value().ndim() != 3 || windows.dim(0) != plan.num_windows() ||
      windows.dim(1) != plan.window) {
    throw DimensionError("merge_windows: windows " + shape_str(windows.shape()) +
                         " do not match plan");
  }
  const Index d = windows.dim(2);
  return gather_rows(windows, d, plan.scatter, {plan.sequences, plan.length, d});
}

template <typename T>
Partitioned<T> partition_1d(const Variable<T>& x, Index window, Index shift) {
  if (x.value().ndim() != 3) {
    throw DimensionError("partition_1d expects (B, T, D), got " + shape_str(x.shape()));
  }
  WindowPlan plan = plan_windows_1d(x.dim(0), x.dim(1), window, shift);
  Variable<T> w = partition(x, plan);
  return {std::move(w), std::move(plan)};
}

template <typename T>
Tensor<T> window_mask(const WindowPlan& plan, std::span<const std::uint8_t> token_valid) {
  if (!token_valid.empty() &&
      static_cast<Index>(token_valid.size()) != plan.sequences * plan.length) {
    throw DimensionError("window_mask: validity has " + std::to_string(token_valid.size()) +
                         " entries for " + std::to_string(plan.sequences * plan.length) +
                         " tokens");
  }
  std::vector<std::uint8_t> slot_valid(plan.gather.size());
  bool any_blocked = false;
  for (std::size_t s = 0; s < plan.gather.size(); ++s) {
    const Index tok = plan.gather[s];
    const bool ok = tok >= 0 && (token_valid.empty() || token_valid[static_cast<std::size_t>(tok)]);
    slot_valid[s] = ok ? 1 : 0;
    any_blocked = any_blocked || !ok;
  }
  if (!any_blocked) return Tensor<T>();
  const Index n = plan.num_windows();
  const Index len = plan.window;
  Tensor<T> mask({n, 1, len, len});
  T* m = mask.data();
  const T blocked = static_cast<T>(kMaskedLogit);
  for (Index w = 0; w < n; ++w) {
    const std::uint8_t* v = slot_valid.data() + w * len;
    T* mw = m + w * len * len;
    for (Index i = 0; i < len; ++i) {
      for (Index j = 0; j < len; ++j) {
        mw[i * len + j] = (i == j || (v[i] && v[j])) ? T(0) : blocked;
      }
    }
  }
  return mask;
}

template <typename T>
RelPosBias1D<T>::RelPosBias1D(const std::string& name, Index window_size, Index num_heads)
    : table(filled_parameter<T>(name, {2 * window_size - 1, num_heads}, T(0))),
      window(window_size),
      heads(num_heads) {}

template <typename T>
Variable<T> RelPosBias1D<T>::materialize() const {
  std::vector<Index> idx;
  idx.reserve(static_cast<std::size_t>(heads * window * window));
  for (Index h = 0; h < heads; ++h) {
    for (Index i = 0; i < window; ++i) {
      for (Index j = 0; j < window; ++j) idx.push_back((i - j + window - 1) * heads + h);
    }
  }
  return gather_rows(table.var, 1, idx, {heads, window, window});
}

template <typename T>
RelPosBias2D<T>::RelPosBias2D(const std::string& name, Index window_size, Index num_heads)
    : table(filled_parameter<T>(
          name, {(2 * window_size - 1) * (2 * window_size - 1), num_heads}, T(0))),
      window(window_size),
      heads(num_heads) {}

template <typename T>
Variable<T> RelPosBias2D<T>::materialize() const {
  const Index n = window * window;
  const Index span = 2 * window - 1;
  std::vector<Index> idx;
  idx.reserve(static_cast<std::size_t>(heads * n * n));
  for (Index h = 0; h < heads; ++h) {
    for (Index p = 0; p < n; ++p) {
      for (Index q = 0; q < n; ++q) {
        const Index dr = p / window - q / window + window - 1;
        const Index dc = p % window - q % window + window - 1;
        idx.push_back((dr * span + dc) * heads + h);
      }
    }
  }
  return gather_rows(table.var, 1, idx, {heads, n, n});
}

template <typename T>
AttnParams<T>::AttnParams(const std::string& name, Index model_dim, Index num_heads, Rng& rng)
    : dim(model_dim), heads(num_heads) {
  if (num_heads < 1 || model_dim % num_heads != 0) {
    throw ConfigError("model dim " + std::to_string(model_dim) + " is not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  w_q = Linear<T>(name + ".w_q", model_dim, model_dim, rng, false);
  w_k = Linear<T>(name + ".w_k", model_dim, model_dim, rng, false);
  w_v = Linear<T>(name + ".w_v", model_dim, model_dim, rng, false);
  w_o = Linear<T>(name + ".w_o", model_dim, model_dim, rng, false);
  // Linear names its matrix "<name>.weight"; attention weights are addressed directly.
  w_q.weight.name = name + ".w_q";
  w_k.weight.name = name + ".w_k";
  w_v.weight.name = name + ".w_v";
  w_o.weight.name = name + ".w_o";
}

template <typename T>
void AttnParams<T>::collect(ParamList<T>& out) {
  w_q.collect(out);
  w_k.collect(out);
  w_v.collect(out);
  w_o.collect(out);
}

namespace {

// Rows of x (flattened to (rows, heads * dh)) gathered straight into the
// per-head window layout (n, H, L, dh), or (n, H, dh, L) when `transpose`.
// Slots mapped to -1 stay zero.
template <typename T>
Variable<T> gather_heads(const Variable<T>& x, const std::vector<Index>& slots, Index n, Index len,
                         Index heads, bool transpose) {
  const Index d = x.value().shape().back();
  const Index dh = d / heads;
  Tensor<T> out(transpose ? Shape{n, heads, dh, len} : Shape{n, heads, len, dh});
  const T* xv = x.value().data();
  T* o = out.data();
  auto offset = [=](Index w, Index h, Index l, Index e) {
    return transpose ? ((w * heads + h) * dh + e) * len + l : ((w * heads + h) * len + l) * dh + e;
  };
  for (Index w = 0; w < n; ++w) {
    for (Index l = 0; l < len; ++l) {
      const Index row = slots[static_cast<std::size_t>(w * len + l)];
      if (row < 0) continue;
      const T* src = xv + row * d;
      for (Index h = 0; h < heads; ++h) {
        for (Index e = 0; e < dh; ++e) o[offset(w, h, l, e)] = src[h * dh + e];
      }
    }
  }
  return detail::make_result<T>(
      std::move(out), "gather_heads", {x.node_ptr()},
      [px = x.node(), slots, n, len, heads, dh, d, offset](Node<T>& self) {
        const T* g = self.grad.data();
        T* gx = px->grad_buffer().data();
        for (Index w = 0; w < n; ++w) {
          for (Index l = 0; l < len; ++l) {
            const Index row = slots[static_cast<std::size_t>(w * len + l)];
            if (row < 0) continue;
            T* dst = gx + row * d;
            for (Index h = 0; h < heads; ++h) {
              for (Index e = 0; e < dh; ++e) dst[h * dh + e] += g[offset(w, h, l, e)];
            }
          }
        }
      });
}

// Inverse of gather_heads for a plan: y (n, H, L, dh) -> (sequences, length,
// H * dh), dropping padded slots.
template <typename T>
Variable<T> scatter_heads(const Variable<T>& y, const WindowPlan& plan) {
  const Index heads = y.dim(1), len = y.dim(2), dh = y.dim(3), d = heads * dh;
  const Index rows = plan.sequences * plan.length;
  auto out = Tensor<T>::uninitialized({plan.sequences, plan.length, d});
  const T* yv = y.value().data();
  T* o = out.data();
  for (Index r = 0; r < rows; ++r) {
    const Index slot = plan.scatter[static_cast<std::size_t>(r)];
    const Index w = slot / len, l = slot % len;
    for (Index h = 0; h < heads; ++h) {
      std::copy_n(yv + ((w * heads + h) * len + l) * dh, dh, o + r * d + h * dh);
    }
  }
  return detail::make_result<T>(
      std::move(out), "scatter_heads", {y.node_ptr()},
      [py = y.node(), scatter = plan.scatter, rows, heads, len, dh, d](Node<T>& self) {
        const T* g = self.grad.data();
        T* gy = py->grad_buffer().data();
        for (Index r = 0; r < rows; ++r) {
          const Index slot = scatter[static_cast<std::size_t>(r)];
          const Index w = slot / len, l = slot % len;
          for (Index h = 0; h < heads; ++h) {
            T* dst = gy + ((w * heads + h) * len + l) * dh;
            const T* src = g + r * d + h * dh;
            for (Index e = 0; e < dh; ++e) dst[e] += src[e];
          }
        }
      });
}

// softmax(q kt / sqrt(dh) + bias + mask) v on per-head windows.
template <typename T>
Variable<T> attention_core(const Variable<T>& q, const Variable<T>& kt, const Variable<T>& v,
                           Index dh, const Variable<T>* bias, const Tensor<T>* mask) {
  Variable<T> scores;
  {
    AttentionCoreScope core;
    scores = matmul(q, kt);
  }
  scores = scale(scores, static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  if (bias) scores = add(scores, *bias);
  if (mask) scores = add(scores, constant(*mask));
  const Variable<T> weights = softmax_lastdim(scores);
  AttentionCoreScope core;
  return matmul(weights, v);
}

}  // namespace

template <typename T>
Variable<T> window_attention(const Variable<T>& windows, const AttnParams<T>& params,
                             const std::type_identity_t<Variable<T>>* bias,
                             const std::type_identity_t<Tensor<T>>* mask) {
  if (windows.value().ndim() != 3) {
    throw DimensionError("window_attention expects (n, L, D), got " +
                         shape_str(windows.shape()));
  }
  const Index n = windows.dim(0), len = windows.dim(1), d = windows.dim(2);
  if (len == 0) throw ContractError("window_attention: empty window");
  if (d != params.dim) {
    throw DimensionError("window_attention: feature dim " + std::to_string(d) +
                         " but projections expect " + std::to_string(params.dim));
  }
  const Index h = params.heads, dh = params.head_dim();
  if (bias && bias->shape() != Shape{h, len, len}) {
    throw DimensionError("window_attention: bias " + shape_str(bias->shape()) +
                         " does not match (heads, L, L) = " + shape_str({h, len, len}));
  }
  if (mask && mask->shape() != Shape{n, 1, len, len}) {
    throw DimensionError("window_attention: mask " + shape_str(mask->shape()) +
                         " does not match windows");
  }

  const Variable<T> q = permute(reshape(params.w_q.forward(windows), {n, len, h, dh}), {0, 2, 1, 3});
  const Variable<T> kt = permute(reshape(params.w_k.forward(windows), {n, len, h, dh}), {0, 2, 3, 1});
  const Variable<T> v = permute(reshape(params.w_v.forward(windows), {n, len, h, dh}), {0, 2, 1, 3});

  Variable<T> ctx = attention_core(q, kt, v, dh, bias, mask);
  ctx = reshape(permute(ctx, {0, 2, 1, 3}), {n, len, d});
  return params.w_o.forward(ctx);
}

bool is_square_grid(Index tokens) { return grid_side(tokens) > 0; }

Index grid_side(Index tokens) {
  if (tokens <= 0) return 0;
  auto r = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(tokens))));
  while (r * r > tokens) --r;
  while ((r + 1) * (r + 1) <= tokens) ++r;
  return r * r == tokens ? r : 0;
}

template <typename T>
WindowAttentionLayer<T>::WindowAttentionLayer(const std::string& name, AttentionAxis axis,
                                              Index model_dim, Index num_heads, Index window,
                                              Rng& rng)
    : axis_(axis), window_(window) {
  if (window < 1) throw ConfigError("window size must be >= 1");
  params_ = AttnParams<T>(name, model_dim, num_heads, rng);
  if (axis == AttentionAxis::temporal || axis == AttentionAxis::spatial) {
    bias_1d_ = RelPosBias1D<T>(name + ".bias_table", window, num_heads);
  }
  if (axis == AttentionAxis::spatial) {
    bias_1d_.table.name = name + ".bias_table_1d";
    bias_2d_ = RelPosBias2D<T>(name + ".bias_table", window, num_heads);
  }
}

template <typename T>
void WindowAttentionLayer<T>::collect(ParamList<T>& out) {
  params_.collect(out);
  if (bias_2d_.table.var.defined()) out.push_back(&bias_2d_.table);
  if (bias_1d_.table.var.defined()) out.push_back(&bias_1d_.table);
}

namespace {

// Same math as partition -> window_attention -> merge_windows. The bias-free
// projections act per token, so they run on the token layout and only the
// per-head Q/K/V are gathered into windows.
template <typename T>
Variable<T> run_plan(const Variable<T>& z, const WindowPlan& plan, const AttnParams<T>& params,
                     const Variable<T>* bias, std::span<const std::uint8_t> token_valid) {
  if (z.dim(0) != plan.sequences || z.dim(1) != plan.length) {
    throw DimensionError("windowed attention: input " + shape_str(z.shape()) + " does not match plan");
  }
  if (z.dim(2) != params.dim) {
    throw DimensionError("windowed attention: feature dim " + std::to_string(z.dim(2)) +
                         " but projections expect " + std::to_string(params.dim));
  }
  const Index n = plan.num_windows(), len = plan.window, h = params.heads;
  if (bias && bias->shape() != Shape{h, len, len}) {
    throw DimensionError("windowed attention: bias " + shape_str(bias->shape()) +
                         " does not match (heads, L, L) = " + shape_str({h, len, len}));
  }
  const Tensor<T> mask = window_mask<T>(plan, token_valid);
  const Variable<T> q = gather_heads(params.w_q.forward(z), plan.gather, n, len, h, false);
  const Variable<T> kt = gather_heads(params.w_k.forward(z), plan.gather, n, len, h, true);
  const Variable<T> v = gather_heads(params.w_v.forward(z), plan.gather, n, len, h, false);
  const Variable<T> ctx = attention_core(q, kt, v, params.head_dim(), bias, mask.empty() ? nullptr : &mask);
  return params.w_o.forward(scatter_heads(ctx, plan));
}

template <typename T>
void check_layer_input(const Variable<T>& z, const char* what) {
  if (z.value().ndim() != 3) {
    throw DimensionError(std::string(what) + " expects a 3D input, got " + shape_str(z.shape()));
  }
}

}  // namespace

template <typename T>
Variable<T> temporal_swin_layer(const Variable<T>& z, const WindowAttentionLayer<T>& layer,
                                bool shifted, std::span<const std::uint8_t> token_valid) {
  check_layer_input(z, "temporal_swin_layer");
  const Index w = layer.window();
  const WindowPlan plan = plan_windows_1d(z.dim(0), z.dim(1), w, shifted ? w / 2 : 0);
  const Variable<T> bias = layer.bias_1d().materialize();
  return run_plan(z, plan, layer.params(), &bias, token_valid);
}

template <typename T>
Variable<T> spatial_swin_layer(const Variable<T>& z, const WindowAttentionLayer<T>& layer,
                               bool shifted, std::span<const std::uint8_t> token_valid) {
  check_layer_input(z, "spatial_swin_layer");
  const Index w = layer.window();
  const Index shift = shifted ? w / 2 : 0;
  const Index side = grid_side(z.dim(1));
  if (side > 0) {
    const WindowPlan plan = plan_windows_2d(z.dim(0), side, w, shift);
    const Variable<T> bias = layer.bias_2d().materialize();
    return run_plan(z, plan, layer.params(), &bias, token_valid);
  }
  const WindowPlan plan = plan_windows_1d(z.dim(0), z.dim(1), w, shift);
  const Variable<T> bias = layer.bias_1d().materialize();
  return run_plan(z, plan, layer.params(), &bias, token_valid);
}

template <typename T>
Variable<T> joint_attention_layer(const Variable<T>& z, const WindowAttentionLayer<T>& layer,
                                  std::span<const std::uint8_t> token_valid) {
  check_layer_input(z, "joint_attention_layer");
  const WindowPlan plan = plan_windows_1d(z.dim(0), z.dim(1), z.dim(1), 0);
  return run_plan<T>(z, plan, layer.params(), nullptr, token_valid);
}

#define EASWIN_INSTANTIATE_ATTN(T)                                                             \
  template Variable<T> partition(const Variable<T>&, const WindowPlan&);                       \
  template Variable<T> merge_windows(const Variable<T>&, const WindowPlan&);                   \
  template Partitioned<T> partition_1d(const Variable<T>&, Index, Index);                      \
  template Tensor<T> window_mask(const WindowPlan&, std::span<const std::uint8_t>);            \
  template struct RelPosBias1D<T>;                                                             \
  template struct RelPosBias2D<T>;                                                             \
  template struct AttnParams<T>;                                                               \
  template class WindowAttentionLayer<T>;                                                      \
  template Variable<T> window_attention(const Variable<T>&, const AttnParams<T>&,              \
                                        const Variable<T>*, const Tensor<T>*);                 \
  template Variable<T> temporal_swin_layer(const Variable<T>&, const WindowAttentionLayer<T>&, \
                                           bool, std::span<const std::uint8_t>);               \
  template Variable<T> spatial_swin_layer(const Variable<T>&, const WindowAttentionLayer<T>&,  \
                                          bool, std::span<const std::uint8_t>);                \
  template Variable<T> joint_attention_layer(const Variable<T>&, const WindowAttentionLayer<T>&, \
                                             std::span<const std::uint8_t>);

EASWIN_INSTANTIATE_ATTN(float)
EASWIN_INSTANTIATE_ATTN(double)

}  // namespace easwin
