#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ndgrad/tensor.hpp"

namespace rosmm::ndgrad {

// Adam with bias correction. State is keyed by parameter position, so the
// parameter list must be identical on every step.
template <typename T>
class Adam {
 public:
  Adam(std::vector<TensorPtr<T>> params, T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (params_.empty()) throw std::invalid_argument("Adam: empty parameter list");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i]->requires_grad) throw std::invalid_argument("Adam: parameter without requires_grad");
      m_[i].assign(params_[i]->data.size(), T(0));
      v_[i].assign(params_[i]->data.size(), T(0));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      if (p.grad.size() != p.data.size())
        throw std::runtime_error("Adam: parameter " + std::to_string(i) + " has no gradient");
      for (size_t j = 0; j < p.data.size(); ++j) {
        const T g = p.grad[j];
        m_[i][j] = beta1_ * m_[i][j] + (T(1) - beta1_) * g;
        v_[i][j] = beta2_ * v_[i][j] + (T(1) - beta2_) * g * g;
        const T mhat = m_[i][j] / bc1;
        const T vhat = v_[i][j] / bc2;
        p.data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  int64_t steps_taken() const { return t_; }
  T lr() const { return lr_; }
  void set_lr(T lr) { lr_ = lr; }

 private:
  std::vector<TensorPtr<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  T lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace rosmm::ndgrad
