#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rosmm::ndgrad {

// Dense row-major tensor. Data is mutable only until it enters a graph;
// after that the single mutation path is gradient accumulation.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;  // same length as data once touched

  int64_t numel() const {
    int64_t n = 1;
    for (int e : shape) n *= e;
    return n;
  }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }

  void zero_grad() { grad.assign(data.size(), T(0)); }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << ")";
  return os.str();
}

template <typename T>
TensorPtr<T> make_tensor(std::vector<int> shape, bool requires_grad = false) {
  auto t = std::make_shared<Tensor<T>>();
  t->shape = std::move(shape);
  int64_t n = 1;
  for (int e : t->shape) {
    if (e <= 0) throw std::invalid_argument("tensor extent must be positive, got shape " + shape_str(t->shape));
    n *= e;
  }
  t->data.assign(static_cast<size_t>(n), T(0));
  t->requires_grad = requires_grad;
  if (requires_grad) t->ensure_grad();
  return t;
}

template <typename T>
TensorPtr<T> make_tensor(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
  auto t = make_tensor<T>(std::move(shape), requires_grad);
  if (values.size() != t->data.size())
    throw std::invalid_argument("tensor value count " + std::to_string(values.size()) + " does not match shape " +
                                shape_str(t->shape));
  t->data = std::move(values);
  return t;
}

template <typename T>
TensorPtr<T> scalar_tensor(T value, bool requires_grad = false) {
  return make_tensor<T>({1}, {value}, requires_grad);
}

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!same_shape(a, b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* context) {
  if (!all_finite(t)) throw std::runtime_error(std::string(context) + ": non-finite values");
}

}  // namespace rosmm::ndgrad
