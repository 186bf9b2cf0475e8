// SPDX-License-Identifier: Apache-2.0
#include "easwin/ops.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace easwin {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// Row-major strides of `in` right-aligned against `out`; broadcast axes get 0.
std::vector<Index> aligned_strides(const Shape& in, const Shape& out) {
  std::vector<Index> st(out.size(), 0);
  Index s = 1;
  auto j = static_cast<std::ptrdiff_t>(out.size()) - 1;
  for (auto i = static_cast<std::ptrdiff_t>(in.size()) - 1; i >= 0; --i, --j) {
    st[static_cast<std::size_t>(j)] = (in[i] == 1 && out[j] != 1) ? 0 : s;
    s *= in[i];
  }
  return st;
}

// Visits every output element with the matching offsets into both inputs.
template <typename F>
void broadcast_loop(const Shape& out, const std::vector<Index>& sa,
                    const std::vector<Index>& sb, F&& f) {
  const Index total = shape_numel(out);
  if (total == 0) return;
  const auto nd = static_cast<std::ptrdiff_t>(out.size());
  if (nd == 0) {
    f(0, 0, 0);
    return;
  }
  const Index inner = out[nd - 1];
  const Index da = sa[nd - 1], db = sb[nd - 1];
  std::vector<Index> ctr(static_cast<std::size_t>(nd), 0);
  Index oa = 0, ob = 0;
  for (Index o = 0; o < total; o += inner) {
    for (Index k = 0; k < inner; ++k) f(o + k, oa + k * da, ob + k * db);
    for (auto d = nd - 2; d >= 0; --d) {
      ++ctr[d];
      oa += sa[d];
      ob += sb[d];
      if (ctr[d] < out[d]) break;
      oa -= sa[d] * out[d];
      ob -= sb[d] * out[d];
      ctr[d] = 0;
    }
  }
}

// True when `small` equals the trailing dims of `big` (and is not all of it).
bool is_suffix(const Shape& small, const Shape& big) {
  if (small.empty() || small.size() >= big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

// a (..., *b.shape) + b repeated over the leading dims.
template <typename T>
Variable<T> add_rows(const Variable<T>& a, const Variable<T>& b) {
  const Index cols = b.value().size();
  const Index rows = a.value().size() / cols;
  auto out = Tensor<T>::uninitialized(a.shape());
  MatMap<T>(out.data(), rows, cols) =
      ConstMatMap<T>(a.value().data(), rows, cols).rowwise() +
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.value().data(), cols);
  return detail::make_result<T>(
      std::move(out), "add", {a.node_ptr(), b.node_ptr()},
      [pa = a.node(), pb = b.node(), rows, cols](Node<T>& self) {
        if (pa->requires_grad) pa->accumulate(self.grad);
        if (pb->requires_grad) {
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(pb->grad_buffer().data(), cols) +=
              ConstMatMap<T>(self.grad.data(), rows, cols).colwise().sum();
        }
      });
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (std::size_t i = 0; i < nd; ++i) {
    const Index ea = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const Index eb = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError("shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcastable");
    }
    out[i] = ea == 1 ? eb : ea;
  }
  return out;
}

template <typename T>
Variable<T> matmul(const Variable<T>& a, const Variable<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2 || sa.back() != sb[sb.size() - 2]) {
    throw DimensionError("matmul: incompatible shapes a=" + shape_str(sa) +
                         " b=" + shape_str(sb));
  }
  const Index m = sa[sa.size() - 2], k = sa.back(), n = sb.back();
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  Shape batch;
  try {
    batch = broadcast_shapes(batch_a, batch_b);
  } catch (const DimensionError&) {
    throw DimensionError("matmul: batch extents of a=" + shape_str(sa) + " and b=" +
                         shape_str(sb) + " do not broadcast");
  }
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  auto out = Tensor<T>::uninitialized(out_shape);
  const Index nbatch = shape_numel(batch);

  auto& macs = mac_counter();
  const auto count = static_cast<std::uint64_t>(nbatch * m * k * n);
  macs.total += count;
  if (macs.in_core) macs.attention_core += count;

  const bool flat = batch_b.empty();
  std::vector<Index> stride_a, stride_b;
  if (flat) {
    const Index rows = nbatch * m;
    MatMap<T>(out.data(), rows, n).noalias() =
        ConstMatMap<T>(a.value().data(), rows, k) * ConstMatMap<T>(b.value().data(), k, n);
  } else {
    stride_a = aligned_strides(batch_a, batch);
    stride_b = aligned_strides(batch_b, batch);
    broadcast_loop(batch, stride_a, stride_b, [&](Index o, Index ia, Index ib) {
      MatMap<T>(out.data() + o * m * n, m, n).noalias() =
          ConstMatMap<T>(a.value().data() + ia * m * k, m, k) *
          ConstMatMap<T>(b.value().data() + ib * k * n, k, n);
    });
  }

  return detail::make_result<T>(
      std::move(out), "matmul", {a.node_ptr(), b.node_ptr()},
      [pa = a.node(), pb = b.node(), m, k, n, nbatch, flat, batch, stride_a,
       stride_b](Node<T>& self) {
        const T* g = self.grad.data();
        const T* av = pa->value.data();
        const T* bv = pb->value.data();
        if (flat) {
          const Index rows = nbatch * m;
          if (pa->requires_grad) {
            MatMap<T>(pa->grad_buffer().data(), rows, k).noalias() +=
                ConstMatMap<T>(g, rows, n) * ConstMatMap<T>(bv, k, n).transpose();
          }
          if (pb->requires_grad) {
            MatMap<T>(pb->grad_buffer().data(), k, n).noalias() +=
                ConstMatMap<T>(av, rows, k).transpose() * ConstMatMap<T>(g, rows, n);
          }
          return;
        }
        T* ga = pa->requires_grad ? pa->grad_buffer().data() : nullptr;
        T* gb = pb->requires_grad ? pb->grad_buffer().data() : nullptr;
        broadcast_loop(batch, stride_a, stride_b, [&](Index o, Index ia, Index ib) {
          ConstMatMap<T> go(g + o * m * n, m, n);
          if (ga) {
            MatMap<T>(ga + ia * m * k, m, k).noalias() +=
                go * ConstMatMap<T>(bv + ib * k * n, k, n).transpose();
          }
          if (gb) {
            MatMap<T>(gb + ib * k * n, k, n).noalias() +=
                ConstMatMap<T>(av + ia * m * k, m, k).transpose() * go;
          }
        });
      });
}

template <typename T>
Variable<T> add(const Variable<T>& a, const Variable<T>& b) {
  if (a.shape() == b.shape()) {
    Tensor<T> out = a.value();
    const T* bv = b.value().data();
    T* o = out.data();
    for (Index i = 0, n = out.size(); i < n; ++i) o[i] += bv[i];
    return detail::make_result<T>(std::move(out), "add", {a.node_ptr(), b.node_ptr()},
                                  [pa = a.node(), pb = b.node()](Node<T>& self) {
                                    if (pa->requires_grad) pa->accumulate(self.grad);
                                    if (pb->requires_grad) pb->accumulate(self.grad);
                                  });
  }
  if (is_suffix(b.shape(), a.shape())) return add_rows(a, b);
  if (is_suffix(a.shape(), b.shape())) return add_rows(b, a);
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  auto sa = aligned_strides(a.shape(), out_shape);
  auto sb = aligned_strides(b.shape(), out_shape);
  auto out = Tensor<T>::uninitialized(out_shape);
  const T* av = a.value().data();
  const T* bv = b.value().data();
  T* o = out.data();
  broadcast_loop(out_shape, sa, sb, [&](Index i, Index ia, Index ib) { o[i] = av[ia] + bv[ib]; });
  return detail::make_result<T>(
      std::move(out), "add", {a.node_ptr(), b.node_ptr()},
      [pa = a.node(), pb = b.node(), out_shape, sa, sb](Node<T>& self) {
        const T* g = self.grad.data();
        T* ga = pa->requires_grad ? pa->grad_buffer().data() : nullptr;
        T* gb = pb->requires_grad ? pb->grad_buffer().data() : nullptr;
        broadcast_loop(out_shape, sa, sb, [&](Index i, Index ia, Index ib) {
          if (ga) ga[ia] += g[i];
          if (gb) gb[ib] += g[i];
        });
      });
}

template <typename T>
Variable<T> mul(const Variable<T>& a, const Variable<T>& b) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  auto sa = aligned_strides(a.shape(), out_shape);
  auto sb = aligned_strides(b.shape(), out_shape);
  auto out = Tensor<T>::uninitialized(out_shape);
  const T* av = a.value().data();
  const T* bv = b.value().data();
  T* o = out.data();
  broadcast_loop(out_shape, sa, sb, [&](Index i, Index ia, Index ib) { o[i] = av[ia] * bv[ib]; });
  return detail::make_result<T>(
      std::move(out), "mul", {a.node_ptr(), b.node_ptr()},
      [pa = a.node(), pb = b.node(), out_shape, sa, sb](Node<T>& self) {
        const T* g = self.grad.data();
        const T* av = pa->value.data();
        const T* bv = pb->value.data();
        T* ga = pa->requires_grad ? pa->grad_buffer().data() : nullptr;
        T* gb = pb->requires_grad ? pb->grad_buffer().data() : nullptr;
        broadcast_loop(out_shape, sa, sb, [&](Index i, Index ia, Index ib) {
          if (ga) ga[ia] += g[i] * bv[ib];
          if (gb) gb[ib] += g[i] * av[ia];
        });
      });
}

template <typename T>
Variable<T> scale(const Variable<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (T& v : out.values()) v *= factor;
  return detail::make_result<T>(std::move(out), "scale", {a.node_ptr()},
                                [pa = a.node(), factor](Node<T>& self) {
                                  T* ga = pa->grad_buffer().data();
                                  const T* g = self.grad.data();
                                  for (Index i = 0, n = self.grad.size(); i < n; ++i) {
                                    ga[i] += factor * g[i];
                                  }
                                });
}

template <typename T>
Variable<T> softmax_lastdim(const Variable<T>& x) {
  if (x.value().ndim() < 1 || x.shape().back() < 1) {
    throw ContractError("softmax_lastdim: last extent must be >= 1, got shape " +
                        shape_str(x.shape()));
  }
  const Index len = x.shape().back();
  const Index rows = x.value().size() / len;
  const T masked = static_cast<T>(0.5 * kMaskedLogit);
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  T* o = out.data();
  for (Index r = 0; r < rows; ++r) {
    const T* in = xv + r * len;
    T* y = o + r * len;
    const T mx = *std::max_element(in, in + len);
    if (!(mx > masked)) continue;  // fully masked: stays zero
    T total = 0;
    for (Index j = 0; j < len; ++j) {
      y[j] = std::exp(in[j] - mx);
      total += y[j];
    }
    const T inv = T(1) / total;
    for (Index j = 0; j < len; ++j) y[j] *= inv;
  }
  return detail::make_result<T>(std::move(out), "softmax", {x.node_ptr()},
                                [px = x.node(), len, rows](Node<T>& self) {
                                  const T* g = self.grad.data();
                                  const T* y = self.value.data();
                                  T* gx = px->grad_buffer().data();
                                  for (Index r = 0; r < rows; ++r) {
                                    const Index base = r * len;
                                    T dot = 0;
                                    for (Index j = 0; j < len; ++j) dot += g[base + j] * y[base + j];
                                    for (Index j = 0; j < len; ++j) {
                                      gx[base + j] += y[base + j] * (g[base + j] - dot);
                                    }
                                  }
                                });
}

template <typename T>
Variable<T> layer_norm(const Variable<T>& x, const Variable<T>& gamma, const Variable<T>& beta,
                       T eps) {
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  if (x.value().ndim() < 1) throw DimensionError("layer_norm: input must have an axis");
  const Index d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: feature extent " + std::to_string(d) +
                         " does not match gamma " + shape_str(gamma.shape()) + " / beta " +
                         shape_str(beta.shape()));
  }
  const Index rows = x.value().size() / d;
  auto out = Tensor<T>::uninitialized(x.shape());
  std::vector<T> mean(static_cast<std::size_t>(rows)), rstd(static_cast<std::size_t>(rows));
  const T* xv = x.value().data();
  const T* gm = gamma.value().data();
  const T* bt = beta.value().data();
  T* o = out.data();
  for (Index r = 0; r < rows; ++r) {
    const T* in = xv + r * d;
    T mu = 0;
    for (Index j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (Index j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (Index j = 0; j < d; ++j) o[r * d + j] = (in[j] - mu) * rs * gm[j] + bt[j];
  }
  return detail::make_result<T>(
      std::move(out), "layer_norm", {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [px = x.node(), pg = gamma.node(), pb = beta.node(), mean = std::move(mean),
       rstd = std::move(rstd), d, rows](Node<T>& self) {
        const T* g = self.grad.data();
        const T* xv = px->value.data();
        const T* gm = pg->value.data();
        T* gx = px->requires_grad ? px->grad_buffer().data() : nullptr;
        T* gg = pg->requires_grad ? pg->grad_buffer().data() : nullptr;
        T* gbt = pb->requires_grad ? pb->grad_buffer().data() : nullptr;
        std::vector<T> xhat(static_cast<std::size_t>(d)), dxhat(static_cast<std::size_t>(d));
        for (Index r = 0; r < rows; ++r) {
          const T* gr = g + r * d;
          T s1 = 0, s2 = 0;
          for (Index j = 0; j < d; ++j) {
            xhat[j] = (xv[r * d + j] - mean[r]) * rstd[r];
            dxhat[j] = gr[j] * gm[j];
            s1 += dxhat[j];
            s2 += dxhat[j] * xhat[j];
            if (gg) gg[j] += gr[j] * xhat[j];
            if (gbt) gbt[j] += gr[j];
          }
          if (gx) {
            const T inv_d = T(1) / static_cast<T>(d);
            for (Index j = 0; j < d; ++j) {
              gx[r * d + j] += rstd[r] * (dxhat[j] - s1 * inv_d - xhat[j] * s2 * inv_d);
            }
          }
        }
      });
}

template <typename T>
Variable<T> gelu(const Variable<T>& x) {
  auto out = Tensor<T>::uninitialized(x.shape());
  const Index n = out.size();
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  const ConstArrMap<T> xa(x.value().data(), n);
  ArrMap<T>(out.data(), n) = T(0.5) * xa * (T(1) + (xa * inv_sqrt2).erf());
  return detail::make_result<T>(
      std::move(out), "gelu", {x.node_ptr()}, [px = x.node(), inv_sqrt2, n](Node<T>& self) {
        const T inv_sqrt_2pi = static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
        const ConstArrMap<T> v(px->value.data(), n);
        const ConstArrMap<T> g(self.grad.data(), n);
        ArrMap<T>(px->grad_buffer().data(), n) +=
            g * (T(0.5) * (T(1) + (v * inv_sqrt2).erf()) + v * inv_sqrt_2pi * (T(-0.5) * v.square()).exp());
      });
}

template <typename T>
Variable<T> reshape(const Variable<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return detail::make_result<T>(std::move(out), "reshape", {x.node_ptr()},
                                [px = x.node()](Node<T>& self) {
                                  px->accumulate(self.grad.reshaped(px->value.shape()));
                                });
}

template <typename T>
Variable<T> permute(const Variable<T>& x, const std::vector<Index>& axes) {
  const Shape& in = x.shape();
  const std::size_t nd = in.size();
  if (axes.size() != nd) {
    throw DimensionError("permute: " + std::to_string(axes.size()) + " axes for shape " +
                         shape_str(in));
  }
  std::vector<bool> used(nd, false);
  Shape out_shape(nd);
  std::vector<Index> in_strides(nd, 1), src_strides(nd);
  for (auto i = static_cast<std::ptrdiff_t>(nd) - 2; i >= 0; --i) {
    in_strides[i] = in_strides[i + 1] * in[i + 1];
  }
  for (std::size_t i = 0; i < nd; ++i) {
    const Index ax = axes[i];
    if (ax < 0 || ax >= static_cast<Index>(nd) || used[static_cast<std::size_t>(ax)]) {
      throw DimensionError("permute: invalid axis list for shape " + shape_str(in));
    }
    used[static_cast<std::size_t>(ax)] = true;
    out_shape[i] = in[static_cast<std::size_t>(ax)];
    src_strides[i] = in_strides[static_cast<std::size_t>(ax)];
  }
  auto out = Tensor<T>::uninitialized(out_shape);
  const std::vector<Index> zero(nd, 0);
  const T* xv = x.value().data();
  T* o = out.data();
  broadcast_loop(out_shape, src_strides, zero, [&](Index i, Index src, Index) { o[i] = xv[src]; });
  return detail::make_result<T>(std::move(out), "permute", {x.node_ptr()},
                                [px = x.node(), out_shape, src_strides, zero](Node<T>& self) {
                                  const T* g = self.grad.data();
                                  T* gx = px->grad_buffer().data();
                                  broadcast_loop(out_shape, src_strides, zero,
                                                 [&](Index i, Index src, Index) { gx[src] += g[i]; });
                                });
}

template <typename T>
Variable<T> gather_rows(const Variable<T>& x, Index row_width, std::span<const Index> idx,
                        Shape out_shape) {
  if (row_width <= 0 || x.value().size() % row_width != 0) {
    throw DimensionError("gather_rows: row width " + std::to_string(row_width) +
                         " does not divide shape " + shape_str(x.shape()));
  }
  const Index rows = x.value().size() / row_width;
  const Index n = static_cast<Index>(idx.size());
  if (shape_numel(out_shape) != n * row_width) {
    throw DimensionError("gather_rows: output shape " + shape_str(out_shape) + " cannot hold " +
                         std::to_string(n) + " rows of " + std::to_string(row_width));
  }
  Tensor<T> out(std::move(out_shape));
  const T* xv = x.value().data();
  T* o = out.data();
  for (Index r = 0; r < n; ++r) {
    const Index src = idx[static_cast<std::size_t>(r)];
    if (src < 0) continue;
    if (src >= rows) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(xv + src * row_width, row_width, o + r * row_width);
  }
  std::vector<Index> index(idx.begin(), idx.end());
  return detail::make_result<T>(std::move(out), "gather_rows", {x.node_ptr()},
                                [px = x.node(), index = std::move(index), row_width](Node<T>& self) {
                                  const T* g = self.grad.data();
                                  T* gx = px->grad_buffer().data();
                                  for (std::size_t r = 0; r < index.size(); ++r) {
                                    if (index[r] < 0) continue;
                                    T* dst = gx + index[r] * row_width;
                                    const T* src = g + static_cast<Index>(r) * row_width;
                                    for (Index j = 0; j < row_width; ++j) dst[j] += src[j];
                                  }
                                });
}

template <typename T>
Variable<T> sum_all(const Variable<T>& x) {
  T total = 0;
  for (T v : x.value().values()) total += v;
  return detail::make_result<T>(Tensor<T>::scalar(total), "sum", {x.node_ptr()},
                                [px = x.node()](Node<T>& self) {
                                  const T g = self.grad[0];
                                  for (T& v : px->grad_buffer().values()) v += g;
                                });
}

template <typename T>
Variable<T> mean_all(const Variable<T>& x) {
  const Index n = x.value().size();
  if (n == 0) throw ContractError("mean_all of an empty tensor");
  return scale(sum_all(x), T(1) / static_cast<T>(n));
}

template <typename T>
Variable<T> bce_with_logits(const Variable<T>& logits, std::span<const int> labels) {
  const Index n = logits.value().size();
  if (n == 0) throw ContractError("bce_with_logits: empty batch");
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw DimensionError("bce_with_logits: " + std::to_string(n) + " logits but " +
                         std::to_string(labels.size()) + " labels");
  }
  std::vector<int> y(labels.begin(), labels.end());
  T total = 0;
  const T* x = logits.value().data();
  for (Index i = 0; i < n; ++i) {
    if (y[i] != 0 && y[i] != 1) throw ContractError("bce_with_logits: labels must be 0 or 1");
    // log(1 + exp(-s x)) with s = 2y - 1
    const T z = (y[i] == 1 ? -x[i] : x[i]);
    total += std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
  }
  return detail::make_result<T>(Tensor<T>::scalar(total / static_cast<T>(n)), "bce",
                                {logits.node_ptr()},
                                [px = logits.node(), y = std::move(y), n](Node<T>& self) {
                                  const T g = self.grad[0] / static_cast<T>(n);
                                  const T* x = px->value.data();
                                  T* gx = px->grad_buffer().data();
                                  for (Index i = 0; i < n; ++i) {
                                    const T p = T(1) / (T(1) + std::exp(-x[i]));
                                    gx[i] += g * (p - static_cast<T>(y[i]));
                                  }
                                });
}

#define EASWIN_INSTANTIATE_OPS(T)                                                            \
  template Variable<T> matmul(const Variable<T>&, const Variable<T>&);                       \
  template Variable<T> add(const Variable<T>&, const Variable<T>&);                          \
  template Variable<T> mul(const Variable<T>&, const Variable<T>&);                          \
  template Variable<T> scale(const Variable<T>&, T);                                         \
  template Variable<T> softmax_lastdim(const Variable<T>&);                                  \
  template Variable<T> layer_norm(const Variable<T>&, const Variable<T>&, const Variable<T>&, \
                                  T);                                                        \
  template Variable<T> gelu(const Variable<T>&);                                             \
  template Variable<T> reshape(const Variable<T>&, Shape);                                   \
  template Variable<T> permute(const Variable<T>&, const std::vector<Index>&);               \
  template Variable<T> gather_rows(const Variable<T>&, Index, std::span<const Index>, Shape); \
  template Variable<T> sum_all(const Variable<T>&);                                          \
  template Variable<T> mean_all(const Variable<T>&);                                         \
  template Variable<T> bce_with_logits(const Variable<T>&, std::span<const int>);

EASWIN_INSTANTIATE_OPS(float)
EASWIN_INSTANTIATE_OPS(double)

}  // namespace easwin
