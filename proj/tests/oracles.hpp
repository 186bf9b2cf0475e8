// SPDX-License-Identifier: Apache-2.0
// Reference implementations written with explicit loops in double. They share
// no code with the library beyond the Tensor container.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "easwin/attention.hpp"
#include "easwin/random.hpp"

namespace oracle {

using easwin::Index;
using Mat = std::vector<double>;  // row-major

inline Mat matmul(const Mat& a, const Mat& b, Index m, Index k, Index n) {
  Mat c(static_cast<std::size_t>(m * n), 0.0);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j) {
      double s = 0;
      for (Index p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

template <typename T>
Mat to_mat(const easwin::Tensor<T>& t) {
  return Mat(t.values().begin(), t.values().end());
}

/// Slots of every window of one sequence, as token positions (-1 = pad).
/// Built from the definition: roll left by `shift`, pad, cut.
inline std::vector<std::vector<Index>> windows_1d(Index length, Index window, Index shift) {
  const Index count = (length + window - 1) / window;
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(count));
  for (Index w = 0; w < count; ++w) {
    for (Index i = 0; i < window; ++i) {
      const Index p = w * window + i;
      out[w].push_back(p < length ? (p + shift) % length : -1);
    }
  }
  return out;
}

/// Square grid of side `side`, rolled by `shift` on both axes, tiled W x W.
inline std::vector<std::vector<Index>> windows_2d(Index side, Index window, Index shift) {
  const Index tiles = (side + window - 1) / window;
  std::vector<std::vector<Index>> out;
  for (Index tr = 0; tr < tiles; ++tr)
    for (Index tc = 0; tc < tiles; ++tc) {
      std::vector<Index> slots;
      for (Index i = 0; i < window; ++i)
        for (Index j = 0; j < window; ++j) {
          const Index r = tr * window + i, c = tc * window + j;
          slots.push_back(r < side && c < side ? ((r + shift) % side) * side + (c + shift) % side
                                               : -1);
        }
      out.push_back(slots);
    }
  return out;
}

struct AttnWeights {
  Mat wq, wk, wv, wo;  // (D, D), applied as x W
  Index dim = 0, heads = 1;
};

template <typename T>
AttnWeights weights_of(const easwin::AttnParams<T>& p) {
  return {to_mat(p.w_q.weight.var.value()), to_mat(p.w_k.weight.var.value()),
          to_mat(p.w_v.weight.var.value()), to_mat(p.w_o.weight.var.value()), p.dim, p.heads};
}

/// Dense attention over the given slots of one sequence x (length, D).
/// bias(h, i, j) is the additive term for slot pair (i, j); pads and
/// tokens with valid[t] == 0 are blocked as keys. Writes output rows of real
/// tokens into `out` (length, D).
inline void attend_window(const Mat& x, Index dim, const std::vector<Index>& slots,
                          const AttnWeights& w, const std::function<double(Index, Index, Index)>& bias,
                          const std::vector<std::uint8_t>& valid, Mat& out) {
  const Index len = static_cast<Index>(slots.size());
  const Index dh = dim / w.heads;
  Mat xw(static_cast<std::size_t>(len * dim), 0.0);
  for (Index s = 0; s < len; ++s)
    if (slots[s] >= 0)
      for (Index e = 0; e < dim; ++e) xw[s * dim + e] = x[slots[s] * dim + e];
  const Mat q = matmul(xw, w.wq, len, dim, dim);
  const Mat k = matmul(xw, w.wk, len, dim, dim);
  const Mat v = matmul(xw, w.wv, len, dim, dim);
  auto open = [&](Index s) { return slots[s] >= 0 && (valid.empty() || valid[slots[s]]); };
  Mat ctx(static_cast<std::size_t>(len * dim), 0.0);
  for (Index h = 0; h < w.heads; ++h)
    for (Index i = 0; i < len; ++i) {
      std::vector<double> logit(static_cast<std::size_t>(len));
      double mx = -1e300;
      for (Index j = 0; j < len; ++j) {
        if (j != i && !(open(i) && open(j))) {
          logit[j] = -1e300;
          continue;
        }
        double s = 0;
        for (Index e = 0; e < dh; ++e) s += q[i * dim + h * dh + e] * k[j * dim + h * dh + e];
        logit[j] = s / std::sqrt(static_cast<double>(dh)) + bias(h, i, j);
        mx = std::max(mx, logit[j]);
      }
      double z = 0;
      for (Index j = 0; j < len; ++j) z += logit[j] > -1e299 ? std::exp(logit[j] - mx) : 0.0;
      for (Index j = 0; j < len; ++j) {
        const double p = logit[j] > -1e299 ? std::exp(logit[j] - mx) / z : 0.0;
        for (Index e = 0; e < dh; ++e) ctx[i * dim + h * dh + e] += p * v[j * dim + h * dh + e];
      }
    }
  const Mat y = matmul(ctx, w.wo, len, dim, dim);
  for (Index s = 0; s < len; ++s)
    if (slots[s] >= 0)
      for (Index e = 0; e < dim; ++e) out[slots[s] * dim + e] = y[s * dim + e];
}

/// 1D relative bias B[h, i, j] = table[i - j + W - 1, h].
inline std::function<double(Index, Index, Index)> bias_1d(const Mat& table, Index window, Index heads) {
  return [=](Index h, Index i, Index j) { return table[(i - j + window - 1) * heads + h]; };
}

/// 2D relative bias by (row, col) offset inside a W x W window.
inline std::function<double(Index, Index, Index)> bias_2d(const Mat& table, Index window, Index heads) {
  return [=](Index h, Index p, Index q) {
    const Index span = 2 * window - 1;
    const Index dr = p / window - q / window + window - 1;
    const Index dc = p % window - q % window + window - 1;
    return table[(dr * span + dc) * heads + h];
  };
}

inline double zero_bias(Index, Index, Index) { return 0.0; }

/// Runs attend_window over every window of every sequence of z (seqs, len, D).
inline Mat windowed_layer(const Mat& z, Index seqs, Index len, Index dim,
                          const std::vector<std::vector<Index>>& windows, const AttnWeights& w,
                          const std::function<double(Index, Index, Index)>& bias,
                          const std::vector<std::uint8_t>& valid = {}) {
  Mat out(z.size(), 0.0);
  for (Index s = 0; s < seqs; ++s) {
    const Mat x(z.begin() + s * len * dim, z.begin() + (s + 1) * len * dim);
    std::vector<std::uint8_t> v;
    if (!valid.empty()) v.assign(valid.begin() + s * len, valid.begin() + (s + 1) * len);
    Mat y(static_cast<std::size_t>(len * dim), 0.0);
    for (const auto& win : windows) attend_window(x, dim, win, w, bias, v, y);
    std::copy(y.begin(), y.end(), out.begin() + s * len * dim);
  }
  return out;
}

template <typename T>
easwin::Tensor<T> random_tensor(easwin::Shape shape, easwin::Rng& rng, double scale = 1.0) {
  easwin::Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(scale * rng.normal());
  return t;
}

/// Max relative error (|a-n| / max(|a|,|n|,1e-6)) between backprop and
/// central differences of sum(f(inputs) * r) for a fixed random r.
inline double op_gradcheck(std::vector<easwin::Tensor<double>> inputs,
                           const std::function<easwin::Variable<double>(
                               const std::vector<easwin::Variable<double>>&)>& f,
                           easwin::Rng& rng, double h = 1e-5) {
  using namespace easwin;
  auto run = [&](const std::vector<Tensor<double>>& in, bool grad,
                 std::vector<Variable<double>>* leaves, const Tensor<double>* r) {
    std::vector<Variable<double>> vars;
    for (const auto& t : in) vars.emplace_back(t, grad);
    Variable<double> out = f(vars);
    if (leaves) *leaves = vars;
    return std::pair{out, r ? sum_all(mul(out, constant(*r))) : Variable<double>()};
  };
  const auto probe = run(inputs, false, nullptr, nullptr).first;
  const Tensor<double> r = random_tensor<double>(probe.shape(), rng);
  std::vector<Variable<double>> leaves;
  auto [out, loss] = run(inputs, true, &leaves, &r);
  backward(loss);
  double worst = 0;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    for (Index i = 0; i < inputs[a].size(); ++i) {
      const double saved = inputs[a][i];
      inputs[a][i] = saved + h;
      const double up = run(inputs, false, nullptr, &r).second.value()[0];
      inputs[a][i] = saved - h;
      const double down = run(inputs, false, nullptr, &r).second.value()[0];
      inputs[a][i] = saved;
      const double num = (up - down) / (2 * h);
      const double ana = leaves[a].has_grad() ? leaves[a].grad()[i] : 0.0;
      worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6}));
    }
  }
  return worst;
}

enum class CaseKind { temporal, grid, fallback };

struct AttentionCase {
  CaseKind kind;
  Index heads, dim, window, seqs, length;
  bool shifted, masked;
  double max_abs_err;
};

/// One seeded float layer (1D, 2D grid or 1D spatial fallback; shifted or
/// not; sometimes with invalid tokens) against the double loop oracle.
/// Window length L stays <= 9 and D <= 16.
inline AttentionCase attention_case(std::uint64_t seed) {
  using namespace easwin;
  Rng rng(seed);
  AttentionCase c{};
  c.kind = static_cast<CaseKind>(rng.below(3));
  const Index head_opts[] = {1, 2, 4};
  c.heads = head_opts[rng.below(3)];
  c.dim = c.heads * static_cast<Index>(1 + rng.below(16 / c.heads));
  c.shifted = rng.below(2) == 1;
  c.masked = rng.below(3) == 0;
  c.seqs = 1 + static_cast<Index>(rng.below(3));
  Index side = 0;
  if (c.kind == CaseKind::grid) {
    c.window = 1 + static_cast<Index>(rng.below(3));
    side = 1 + static_cast<Index>(rng.below(6));
    c.length = side * side;
  } else {
    c.window = 1 + static_cast<Index>(rng.below(9));
    c.length = 1 + static_cast<Index>(rng.below(12));
    if (c.kind == CaseKind::fallback) {
      while (is_square_grid(c.length)) c.length = 2 + static_cast<Index>(rng.below(11));
    }
  }
  const Index shift = c.shifted ? c.window / 2 : 0;
  const AttentionAxis axis = c.kind == CaseKind::temporal ? AttentionAxis::temporal : AttentionAxis::spatial;
  WindowAttentionLayer<float> layer("attn", axis, c.dim, c.heads, c.window, rng);
  for (auto* table : {&layer.bias_1d().table, &layer.bias_2d().table}) {
    if (!table->var.defined()) continue;
    for (float& v : table->var.mutable_value().values()) v = static_cast<float>(0.5 * rng.normal());
  }
  const auto z = random_tensor<float>({c.seqs, c.length, c.dim}, rng);
  std::vector<std::uint8_t> valid;
  if (c.masked) {
    valid.resize(static_cast<std::size_t>(c.seqs * c.length));
    for (auto& v : valid) v = rng.below(4) != 0;
  }

  const Variable<float> out =
      c.kind == CaseKind::temporal ? temporal_swin_layer(constant(z), layer, c.shifted, valid)
                                   : spatial_swin_layer(constant(z), layer, c.shifted, valid);
  const AttnWeights w = weights_of(layer.params());
  Mat ref;
  if (c.kind == CaseKind::grid) {
    ref = windowed_layer(to_mat(z), c.seqs, c.length, c.dim, windows_2d(side, c.window, shift), w,
                         bias_2d(to_mat(layer.bias_2d().table.var.value()), c.window, c.heads), valid);
  } else {
    ref = windowed_layer(to_mat(z), c.seqs, c.length, c.dim, windows_1d(c.length, c.window, shift), w,
                         bias_1d(to_mat(layer.bias_1d().table.var.value()), c.window, c.heads), valid);
  }
  c.max_abs_err = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    c.max_abs_err = std::max(c.max_abs_err, std::abs(ref[i] - out.value()[static_cast<Index>(i)]));
  }
  return c;
}

/// O(n^2) pair count: (2 * correctly ordered + ties) / (2 * pos * neg).
inline double auc_pairs(const std::vector<double>& s, const std::vector<int>& y) {
  std::int64_t twice = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) (y[i] ? pos : neg) += 1;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) twice += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
  return static_cast<double>(twice) / static_cast<double>(2 * pos * neg);
}

}  // namespace oracle
