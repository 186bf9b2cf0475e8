// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "easwin/ops.hpp"
#include "easwin/random.hpp"

namespace easwin {

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

/// Parameter drawn from U(-bound, bound).
template <typename T>
Parameter<T> uniform_parameter(std::string name, Shape shape, Rng& rng, double bound);

template <typename T>
Parameter<T> filled_parameter(std::string name, Shape shape, T value);

/// y = x W (+ b), W of shape (in, out). Weights U(+-1/sqrt(in)), bias zero.
template <typename T>
struct Linear {
  Parameter<T> weight;
  Parameter<T> bias;  // undefined var when built without bias
  Index in = 0, out = 0;

  Linear() = default;
  Linear(const std::string& name, Index in_features, Index out_features, Rng& rng,
         bool with_bias = true);

  bool has_bias() const { return bias.var.defined(); }
  Variable<T> forward(const Variable<T>& x) const;
  void collect(ParamList<T>& out_params);
};

template <typename T>
struct LayerNorm {
  Parameter<T> gamma, beta;
  T eps = T(1e-5);

  LayerNorm() = default;
  LayerNorm(const std::string& name, Index dim);
  Variable<T> forward(const Variable<T>& x) const;
  void collect(ParamList<T>& out_params);
};

/// Two-layer perceptron with GELU between the layers.
template <typename T>
struct FeedForward {
  Linear<T> fc1, fc2;

  FeedForward() = default;
  FeedForward(const std::string& name, Index in, Index hidden, Index out, Rng& rng);
  Variable<T> forward(const Variable<T>& x) const;
  void collect(ParamList<T>& out_params);
};

}  // namespace easwin
