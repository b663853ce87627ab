#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "common/rng.hpp"
#include "ndgrad/tape.hpp"

namespace rosmm::ndgrad {

enum class LayerKind { Conv, ConvTranspose, BatchNorm, Linear };

// One parametric layer. Forward dispatches on kind; activations are applied
// by the caller so layers stay reusable.
template <typename T>
struct Layer {
  LayerKind kind;
  TensorPtr<T> weight;        // conv/linear
  TensorPtr<T> bias;          // conv/linear/conv_transpose
  TensorPtr<T> gamma;         // batch norm
  TensorPtr<T> beta;          // batch norm
  TensorPtr<T> running_mean;  // batch norm, not trained
  TensorPtr<T> running_var;   // batch norm, not trained
  int stride = 1;
  int pad = 0;
  int out_pad = 0;
  T momentum = T(0.1);
  T eps = T(1e-5);

  TensorPtr<T> forward(Tape<T>* tape, const TensorPtr<T>& x, bool training) const {
    switch (kind) {
      case LayerKind::Conv:
        return conv2d(tape, x, weight, bias, stride, pad);
      case LayerKind::ConvTranspose:
        return conv_transpose2d(tape, x, weight, bias, stride, pad, out_pad);
      case LayerKind::BatchNorm:
        return batch_norm(tape, x, gamma, beta, running_mean, running_var, training, momentum, eps);
      case LayerKind::Linear:
        return linear(tape, x, weight, bias);
    }
    throw std::logic_error("Layer::forward: unknown kind");
  }

  std::vector<TensorPtr<T>> trainable() const {
    switch (kind) {
      case LayerKind::Conv:
      case LayerKind::ConvTranspose:
      case LayerKind::Linear:
        return {weight, bias};
      case LayerKind::BatchNorm:
        return {gamma, beta};
    }
    throw std::logic_error("Layer::trainable: unknown kind");
  }

  // every tensor that must persist through save/load, keyed for checkpoints
  std::vector<std::pair<std::string, TensorPtr<T>>> state(const std::string& prefix) const {
    switch (kind) {
      case LayerKind::Conv:
      case LayerKind::ConvTranspose:
      case LayerKind::Linear:
        return {{prefix + ".weight", weight}, {prefix + ".bias", bias}};
      case LayerKind::BatchNorm:
        return {{prefix + ".gamma", gamma},
                {prefix + ".beta", beta},
                {prefix + ".running_mean", running_mean},
                {prefix + ".running_var", running_var}};
    }
    throw std::logic_error("Layer::state: unknown kind");
  }
};

// uniform Kaiming fan-in init: limit = sqrt(6 / fan_in)
template <typename T>
void fill_kaiming_uniform(TensorPtr<T>& w, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w->data) v = static_cast<T>(rng.uniform_range(-limit, limit));
}

template <typename T>
Layer<T> make_conv(int in_ch, int out_ch, int k, int stride, int pad, Rng& rng) {
  Layer<T> l;
  l.kind = LayerKind::Conv;
  l.stride = stride;
  l.pad = pad;
  l.weight = make_tensor<T>({out_ch, in_ch, k, k});
  l.weight->requires_grad = true;
  fill_kaiming_uniform(l.weight, in_ch * k * k, rng);
  l.bias = make_tensor<T>({out_ch});
  l.bias->requires_grad = true;
  return l;
}

template <typename T>
Layer<T> make_conv_transpose(int in_ch, int out_ch, int k, int stride, int pad, int out_pad, Rng& rng) {
  Layer<T> l;
  l.kind = LayerKind::ConvTranspose;
  l.stride = stride;
  l.pad = pad;
  l.out_pad = out_pad;
  l.weight = make_tensor<T>({in_ch, out_ch, k, k});
  l.weight->requires_grad = true;
  fill_kaiming_uniform(l.weight, in_ch * k * k, rng);
  l.bias = make_tensor<T>({out_ch});
  l.bias->requires_grad = true;
  return l;
}

template <typename T>
Layer<T> make_batch_norm(int ch) {
  Layer<T> l;
  l.kind = LayerKind::BatchNorm;
  l.gamma = make_tensor<T>({ch});
  l.gamma->requires_grad = true;
  std::fill(l.gamma->data.begin(), l.gamma->data.end(), T(1));
  l.beta = make_tensor<T>({ch});
  l.beta->requires_grad = true;
  l.running_mean = make_tensor<T>({ch});
  l.running_var = make_tensor<T>({ch});
  std::fill(l.running_var->data.begin(), l.running_var->data.end(), T(1));
  return l;
}

template <typename T>
Layer<T> make_linear(int in_dim, int out_dim, Rng& rng) {
  Layer<T> l;
  l.kind = LayerKind::Linear;
  l.weight = make_tensor<T>({out_dim, in_dim});
  l.weight->requires_grad = true;
  fill_kaiming_uniform(l.weight, in_dim, rng);
  l.bias = make_tensor<T>({out_dim});
  l.bias->requires_grad = true;
  return l;
}

}  // namespace rosmm::ndgrad
