// SPDX-License-Identifier: Apache-2.0
#include "easwin/nn.hpp"

#include <cmath>

namespace easwin {

template <typename T>
Parameter<T> uniform_parameter(std::string name, Shape shape, Rng& rng, double bound) {
  Tensor<T> t(std::move(shape));
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return Parameter<T>{std::move(name), Variable<T>(std::move(t), true)};
}

template <typename T>
Parameter<T> filled_parameter(std::string name, Shape shape, T value) {
  return Parameter<T>{std::move(name), Variable<T>(Tensor<T>(std::move(shape), value), true)};
}

template <typename T>
Linear<T>::Linear(const std::string& name, Index in_features, Index out_features, Rng& rng,
                  bool with_bias)
    : in(in_features), out(out_features) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  weight = uniform_parameter<T>(name + ".weight", {in_features, out_features}, rng, bound);
  if (with_bias) bias = filled_parameter<T>(name + ".bias", {out_features}, T(0));
}

template <typename T>
Variable<T> Linear<T>::forward(const Variable<T>& x) const {
  Variable<T> y = matmul(x, weight.var);
  return has_bias() ? add(y, bias.var) : y;
}

template <typename T>
void Linear<T>::collect(ParamList<T>& out_params) {
  out_params.push_back(&weight);
  if (has_bias()) out_params.push_back(&bias);
}

template <typename T>
LayerNorm<T>::LayerNorm(const std::string& name, Index dim)
    : gamma(filled_parameter<T>(name + ".gamma", {dim}, T(1))),
      beta(filled_parameter<T>(name + ".beta", {dim}, T(0))) {}

template <typename T>
Variable<T> LayerNorm<T>::forward(const Variable<T>& x) const {
  return layer_norm(x, gamma.var, beta.var, eps);
}

template <typename T>
void LayerNorm<T>::collect(ParamList<T>& out_params) {
  out_params.push_back(&gamma);
  out_params.push_back(&beta);
}

template <typename T>
FeedForward<T>::FeedForward(const std::string& name, Index in, Index hidden, Index out, Rng& rng)
    : fc1(name + ".fc1", in, hidden, rng), fc2(name + ".fc2", hidden, out, rng) {}

template <typename T>
Variable<T> FeedForward<T>::forward(const Variable<T>& x) const {
  return fc2.forward(gelu(fc1.forward(x)));
}

template <typename T>
void FeedForward<T>::collect(ParamList<T>& out_params) {
  fc1.collect(out_params);
  fc2.collect(out_params);
}

template Parameter<float> uniform_parameter(std::string, Shape, Rng&, double);
template Parameter<double> uniform_parameter(std::string, Shape, Rng&, double);
template Parameter<float> filled_parameter(std::string, Shape, float);
template Parameter<double> filled_parameter(std::string, Shape, double);
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct FeedForward<float>;
template struct FeedForward<double>;

}  // namespace easwin
