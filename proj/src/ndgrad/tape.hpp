#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "ndgrad/tensor.hpp"

namespace rosmm::ndgrad {

// Reverse-mode tape. One tape per evaluation context; never shared across
// concurrent evaluations. backward() may be called once.
template <typename T>
class Tape {
 public:
  // out is the node's output; backward() zero-fills its grad buffer before the
  // lambda runs so nodes never reached by the loss contribute exactly zero
  void record(const TensorPtr<T>& out, std::function<void()> backward_fn) {
    nodes_.push_back({out, std::move(backward_fn)});
  }

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  void backward(const TensorPtr<T>& loss) {
    if (consumed_) throw std::runtime_error("backward: tape already consumed");
    if (loss->numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss->shape));
    if (nodes_.empty()) throw std::runtime_error("backward: tape is empty");
    loss->ensure_grad();
    loss->grad[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      it->first->ensure_grad();
      it->second();
    }
    consumed_ = true;
  }

 private:
  std::vector<std::pair<TensorPtr<T>, std::function<void()>>> nodes_;
  bool consumed_ = false;
};

namespace detail {

template <typename T>
bool want_grad(Tape<T>* tape, std::initializer_list<const TensorPtr<T>*> inputs) {
  if (!tape) return false;
  for (auto* p : inputs)
    if (*p && (*p)->requires_grad) return true;
  return false;
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(*a, *b, "add");
  auto out = make_tensor<T>(a->shape);
  const size_t n = a->data.size();
  for (size_t i = 0; i < n; ++i) out->data[i] = a->data[i] + b->data[i];
  if (detail::want_grad(tape, {&a, &b})) {
    out->requires_grad = true;
    tape->record(out, [a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < b->data.size(); ++i) b->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> sub(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(*a, *b, "sub");
  auto out = make_tensor<T>(a->shape);
  const size_t n = a->data.size();
  for (size_t i = 0; i < n; ++i) out->data[i] = a->data[i] - b->data[i];
  if (detail::want_grad(tape, {&a, &b})) {
    out->requires_grad = true;
    tape->record(out, [a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < b->data.size(); ++i) b->grad[i] -= out->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> mul(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(*a, *b, "mul");
  auto out = make_tensor<T>(a->shape);
  const size_t n = a->data.size();
  for (size_t i = 0; i < n; ++i) out->data[i] = a->data[i] * b->data[i];
  if (detail::want_grad(tape, {&a, &b})) {
    out->requires_grad = true;
    tape->record(out, [a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < b->data.size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> scale(Tape<T>* tape, const TensorPtr<T>& a, T factor) {
  auto out = make_tensor<T>(a->shape);
  for (size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * factor;
  if (detail::want_grad(tape, {&a})) {
    out->requires_grad = true;
    tape->record(out, [a, out, factor] {
      a->ensure_grad();
      for (size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i] * factor;
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& x) {
  auto out = make_tensor<T>(x->shape);
  for (size_t i = 0; i < x->data.size(); ++i) out->data[i] = x->data[i] > T(0) ? x->data[i] : T(0);
  if (detail::want_grad(tape, {&x})) {
    out->requires_grad = true;
    tape->record(out, [x, out] {
      x->ensure_grad();
      for (size_t i = 0; i < x->data.size(); ++i)
        if (x->data[i] > T(0)) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

// hard clip to [0,1]; gradient passes only strictly inside the range
template <typename T>
TensorPtr<T> clamp01(Tape<T>* tape, const TensorPtr<T>& x) {
  auto out = make_tensor<T>(x->shape);
  for (size_t i = 0; i < x->data.size(); ++i) out->data[i] = std::min(T(1), std::max(T(0), x->data[i]));
  if (detail::want_grad(tape, {&x})) {
    out->requires_grad = true;
    tape->record(out, [x, out] {
      x->ensure_grad();
      for (size_t i = 0; i < x->data.size(); ++i)
        if (x->data[i] > T(0) && x->data[i] < T(1)) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

// value copy with the graph cut
template <typename T>
TensorPtr<T> detach(const TensorPtr<T>& x) {
  auto out = make_tensor<T>(x->shape);
  out->data = x->data;
  return out;
}

// ---- reductions and losses -------------------------------------------------

template <typename T>
TensorPtr<T> sum(Tape<T>* tape, const TensorPtr<T>& x) {
  T acc = 0;
  for (T v : x->data) acc += v;
  auto out = scalar_tensor<T>(acc);
  if (detail::want_grad(tape, {&x})) {
    out->requires_grad = true;
    tape->record(out, [x, out] {
      x->ensure_grad();
      const T g = out->grad[0];
      for (size_t i = 0; i < x->data.size(); ++i) x->grad[i] += g;
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> mean(Tape<T>* tape, const TensorPtr<T>& x) {
  T acc = 0;
  for (T v : x->data) acc += v;
  const T inv = T(1) / static_cast<T>(x->data.size());
  auto out = scalar_tensor<T>(acc * inv);
  if (detail::want_grad(tape, {&x})) {
    out->requires_grad = true;
    tape->record(out, [x, out, inv] {
      x->ensure_grad();
      const T g = out->grad[0] * inv;
      for (size_t i = 0; i < x->data.size(); ++i) x->grad[i] += g;
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> l1_loss(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(*a, *b, "l1_loss");
  T acc = 0;
  for (size_t i = 0; i < a->data.size(); ++i) acc += std::abs(a->data[i] - b->data[i]);
  const T inv = T(1) / static_cast<T>(a->data.size());
  auto out = scalar_tensor<T>(acc * inv);
  if (detail::want_grad(tape, {&a, &b})) {
    out->requires_grad = true;
    tape->record(out, [a, b, out, inv] {
      const T g = out->grad[0] * inv;
      if (a->requires_grad) a->ensure_grad();
      if (b->requires_grad) b->ensure_grad();
      for (size_t i = 0; i < a->data.size(); ++i) {
        const T d = a->data[i] - b->data[i];
        const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
        if (a->requires_grad) a->grad[i] += g * s;
        if (b->requires_grad) b->grad[i] -= g * s;
      }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> mse_loss(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  require_same_shape(*a, *b, "mse_loss");
  T acc = 0;
  for (size_t i = 0; i < a->data.size(); ++i) {
    const T d = a->data[i] - b->data[i];
    acc += d * d;
  }
  const T inv = T(1) / static_cast<T>(a->data.size());
  auto out = scalar_tensor<T>(acc * inv);
  if (detail::want_grad(tape, {&a, &b})) {
    out->requires_grad = true;
    tape->record(out, [a, b, out, inv] {
      const T g = out->grad[0] * inv * T(2);
      if (a->requires_grad) a->ensure_grad();
      if (b->requires_grad) b->ensure_grad();
      for (size_t i = 0; i < a->data.size(); ++i) {
        const T d = a->data[i] - b->data[i];
        if (a->requires_grad) a->grad[i] += g * d;
        if (b->requires_grad) b->grad[i] -= g * d;
      }
    });
  }
  return out;
}

// y = sum_i weights[i] * scalars[i]
template <typename T>
TensorPtr<T> weighted_sum(Tape<T>* tape, const std::vector<TensorPtr<T>>& scalars, const std::vector<T>& weights) {
  if (scalars.size() != weights.size()) throw std::invalid_argument("weighted_sum: size mismatch");
  T acc = 0;
  bool grad = false;
  for (size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i]->numel() != 1) throw std::invalid_argument("weighted_sum: inputs must be scalar");
    acc += weights[i] * scalars[i]->data[0];
    grad = grad || scalars[i]->requires_grad;
  }
  auto out = scalar_tensor<T>(acc);
  if (tape && grad) {
    out->requires_grad = true;
    tape->record(out, [scalars, weights, out] {
      for (size_t i = 0; i < scalars.size(); ++i)
        if (scalars[i]->requires_grad) {
          scalars[i]->ensure_grad();
          scalars[i]->grad[0] += out->grad[0] * weights[i];
        }
    });
  }
  return out;
}

// ---- layout ----------------------------------------------------------------

template <typename T>
TensorPtr<T> concat_channels(Tape<T>* tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
  if (a->shape.size() != 4 || b->shape.size() != 4)
    throw std::invalid_argument("concat_channels: expected 4-d tensors");
  if (a->shape[0] != b->shape[0] || a->shape[2] != b->shape[2] || a->shape[3] != b->shape[3])
    throw std::invalid_argument("concat_channels: shape mismatch " + shape_str(a->shape) + " vs " +
                                shape_str(b->shape));
  const int n = a->shape[0], ca = a->shape[1], cb = b->shape[1], h = a->shape[2], w = a->shape[3];
  auto out = make_tensor<T>({n, ca + cb, h, w});
  const size_t plane = static_cast<size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    std::copy_n(&a->data[i * ca * plane], ca * plane, &out->data[i * (ca + cb) * plane]);
    std::copy_n(&b->data[i * cb * plane], cb * plane, &out->data[(i * (ca + cb) + ca) * plane]);
  }
  if (detail::want_grad(tape, {&a, &b})) {
    out->requires_grad = true;
    tape->record(out, [a, b, out, n, ca, cb, plane] {
      if (a->requires_grad) a->ensure_grad();
      if (b->requires_grad) b->ensure_grad();
      for (int i = 0; i < n; ++i) {
        if (a->requires_grad)
          for (size_t j = 0; j < ca * plane; ++j) a->grad[i * ca * plane + j] += out->grad[i * (ca + cb) * plane + j];
        if (b->requires_grad)
          for (size_t j = 0; j < cb * plane; ++j)
            b->grad[i * cb * plane + j] += out->grad[(i * (ca + cb) + ca) * plane + j];
      }
    });
  }
  return out;
}

// (N,C,H,W) -> (N*H*W, C), one row per grid cell
template <typename T>
TensorPtr<T> nchw_to_cells(Tape<T>* tape, const TensorPtr<T>& x) {
  if (x->shape.size() != 4) throw std::invalid_argument("nchw_to_cells: expected 4-d tensor");
  const int n = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
  auto out = make_tensor<T>({n * h * w, c});
  const size_t plane = static_cast<size_t>(h) * w;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const T* src = &x->data[(i * c + ch) * plane];
      for (size_t p = 0; p < plane; ++p) out->data[(i * plane + p) * c + ch] = src[p];
    }
  if (detail::want_grad(tape, {&x})) {
    out->requires_grad = true;
    tape->record(out, [x, out, n, c, plane] {
      x->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
          T* dst = &x->grad[(i * c + ch) * plane];
          for (size_t p = 0; p < plane; ++p) dst[p] += out->grad[(i * plane + p) * c + ch];
        }
    });
  }
  return out;
}

template <typename T>
TensorPtr<T> cells_to_nchw(Tape<T>* tape, const TensorPtr<T>& x, int n, int c, int h, int w) {
  if (x->shape.size() != 2 || x->shape[0] != n * h * w || x->shape[1] != c)
    throw std::invalid_argument("cells_to_nchw: cells shape " + shape_str(x->shape) + " does not match " +
                                shape_str({n, c, h, w}));
  auto out = make_tensor<T>({n, c, h, w});
  const size_t plane = static_cast<size_t>(h) * w;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      T* dst = &out->data[(i * c + ch) * plane];
      for (size_t p = 0; p < plane; ++p) dst[p] = x->data[(i * plane + p) * c + ch];
    }
  if (detail::want_grad(tape, {&x})) {
    out->requires_grad = true;
    tape->record(out, [x, out, n, c, plane] {
      x->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
          const T* src = &out->grad[(i * c + ch) * plane];
          for (size_t p = 0; p < plane; ++p) x->grad[(i * plane + p) * c + ch] += src[p];
        }
    });
  }
  return out;
}

// ---- table lookup and straight-through -------------------------------------

// rows of table selected by index; gradient scatters into the table
template <typename T>
TensorPtr<T> gather_rows(Tape<T>* tape, const TensorPtr<T>& table, const std::vector<int32_t>& indices) {
  if (table->shape.size() != 2) throw std::invalid_argument("gather_rows: table must be 2-d");
  const int k = table->shape[0], d = table->shape[1];
  for (int32_t idx : indices)
    if (idx < 0 || idx >= k)
      throw std::invalid_argument("gather_rows: index " + std::to_string(idx) + " outside [0, " + std::to_string(k) +
                                  ")");
  auto out = make_tensor<T>({static_cast<int>(indices.size()), d});
  for (size_t i = 0; i < indices.size(); ++i)
    std::copy_n(&table->data[indices[i] * d], d, &out->data[i * d]);
  if (detail::want_grad(tape, {&table})) {
    out->requires_grad = true;
    tape->record(out, [table, out, indices, d] {
      table->ensure_grad();
      for (size_t i = 0; i < indices.size(); ++i)
        for (int j = 0; j < d; ++j) table->grad[indices[i] * d + j] += out->grad[i * d + j];
    });
  }
  return out;
}

// forward takes the quantized value; backward passes gradient to the latents
// unchanged and nothing to the quantized path
template <typename T>
TensorPtr<T> straight_through(Tape<T>* tape, const TensorPtr<T>& latents, const TensorPtr<T>& quantized) {
  require_same_shape(*latents, *quantized, "straight_through");
  auto out = make_tensor<T>(quantized->shape);
  out->data = quantized->data;
  if (detail::want_grad(tape, {&latents})) {
    out->requires_grad = true;
    tape->record(out, [latents, out] {
      latents->ensure_grad();
      for (size_t i = 0; i < latents->data.size(); ++i) latents->grad[i] += out->grad[i];
    });
  }
  return out;
}

// ---- conv2d ----------------------------------------------------------------

inline int conv_out_extent(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
TensorPtr<T> conv2d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b, int stride,
                    int pad) {
  if (x->shape.size() != 4) throw std::invalid_argument("conv2d: input must be NxCxHxW, got " + shape_str(x->shape));
  if (w->shape.size() != 4) throw std::invalid_argument("conv2d: weight must be OCxICxKHxKW, got " + shape_str(w->shape));
  const int n = x->shape[0], c = x->shape[1], h = x->shape[2], ww = x->shape[3];
  const int oc = w->shape[0], wc = w->shape[1], kh = w->shape[2], kw = w->shape[3];
  if (c != wc)
    throw std::invalid_argument("conv2d: input shape " + shape_str(x->shape) + " incompatible with weight shape " +
                                shape_str(w->shape));
  if (b->numel() != oc)
    throw std::invalid_argument("conv2d: bias shape " + shape_str(b->shape) + " does not match " +
                                std::to_string(oc) + " output channels");
  const int oh = conv_out_extent(h, kh, stride, pad);
  const int ow = conv_out_extent(ww, kw, stride, pad);
  if (oh <= 0 || ow <= 0)
    throw std::invalid_argument("conv2d: input " + shape_str(x->shape) + " too small for kernel " +
                                shape_str(w->shape));
  auto out = make_tensor<T>({n, oc, oh, ow});

  for (int ni = 0; ni < n; ++ni)
    for (int o = 0; o < oc; ++o) {
      T* ybase = &out->data[static_cast<size_t>((ni * oc + o)) * oh * ow];
      const T bias = b->data[o];
      for (int i = 0; i < oh * ow; ++i) ybase[i] = bias;
      for (int ci = 0; ci < c; ++ci) {
        const T* xbase = &x->data[static_cast<size_t>((ni * c + ci)) * h * ww];
        const T* wbase = &w->data[static_cast<size_t>((o * c + ci)) * kh * kw];
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const T wv = wbase[ky * kw + kx];
            if (wv == T(0)) continue;
            // ox range keeping ix = ox*stride - pad + kx inside [0, ww)
            int ox_lo = 0;
            while (ox_lo * stride - pad + kx < 0) ++ox_lo;
            int ox_hi = ow;
            while (ox_hi > ox_lo && (ox_hi - 1) * stride - pad + kx >= ww) --ox_hi;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              const T* xrow = xbase + static_cast<size_t>(iy) * ww - pad + kx;
              T* yrow = ybase + static_cast<size_t>(oy) * ow;
              for (int ox = ox_lo; ox < ox_hi; ++ox) yrow[ox] += wv * xrow[ox * stride];
            }
          }
      }
    }

  if (detail::want_grad(tape, {&x, &w, &b})) {
    out->requires_grad = true;
    tape->record(out, [x, w, b, out, n, c, h, ww, oc, kh, kw, oh, ow, stride, pad] {
      if (x->requires_grad) {
        x->ensure_grad();
        for (int ni = 0; ni < n; ++ni)
          for (int o = 0; o < oc; ++o) {
            const T* gybase = &out->grad[static_cast<size_t>((ni * oc + o)) * oh * ow];
            for (int ci = 0; ci < c; ++ci) {
              T* gxbase = &x->grad[static_cast<size_t>((ni * c + ci)) * h * ww];
              const T* wbase = &w->data[static_cast<size_t>((o * c + ci)) * kh * kw];
              for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                  const T wv = wbase[ky * kw + kx];
                  if (wv == T(0)) continue;
                  int ox_lo = 0;
                  while (ox_lo * stride - pad + kx < 0) ++ox_lo;
                  int ox_hi = ow;
                  while (ox_hi > ox_lo && (ox_hi - 1) * stride - pad + kx >= ww) --ox_hi;
                  for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    T* gxrow = gxbase + static_cast<size_t>(iy) * ww - pad + kx;
                    const T* gyrow = gybase + static_cast<size_t>(oy) * ow;
                    for (int ox = ox_lo; ox < ox_hi; ++ox) gxrow[ox * stride] += wv * gyrow[ox];
                  }
                }
            }
          }
      }
      if (w->requires_grad) {
        w->ensure_grad();
        for (int o = 0; o < oc; ++o)
          for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                T acc = 0;
                int ox_lo = 0;
                while (ox_lo * stride - pad + kx < 0) ++ox_lo;
                int ox_hi = ow;
                while (ox_hi > ox_lo && (ox_hi - 1) * stride - pad + kx >= ww) --ox_hi;
                for (int ni = 0; ni < n; ++ni) {
                  const T* xbase = &x->data[static_cast<size_t>((ni * c + ci)) * h * ww];
                  const T* gybase = &out->grad[static_cast<size_t>((ni * oc + o)) * oh * ow];
                  for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const T* xrow = xbase + static_cast<size_t>(iy) * ww - pad + kx;
                    const T* gyrow = gybase + static_cast<size_t>(oy) * ow;
                    for (int ox = ox_lo; ox < ox_hi; ++ox) acc += xrow[ox * stride] * gyrow[ox];
                  }
                }
                w->grad[static_cast<size_t>((o * c + ci)) * kh * kw + ky * kw + kx] += acc;
              }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int ni = 0; ni < n; ++ni)
          for (int o = 0; o < oc; ++o) {
            const T* gyrow = &out->grad[static_cast<size_t>((ni * oc + o)) * oh * ow];
            T acc = 0;
            for (int i = 0; i < oh * ow; ++i) acc += gyrow[i];
            b->grad[o] += acc;
          }
      }
    });
  }
  return out;
}

// ---- conv_transpose2d ------------------------------------------------------

inline int conv_transpose_out_extent(int in, int kernel, int stride, int pad, int out_pad) {
  return (in - 1) * stride - 2 * pad + kernel + out_pad;
}

// weight layout (IC, OC, KH, KW); forward is the adjoint scatter of conv2d
template <typename T>
TensorPtr<T> conv_transpose2d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b,
                              int stride, int pad, int out_pad) {
  if (x->shape.size() != 4)
    throw std::invalid_argument("conv_transpose2d: input must be NxCxHxW, got " + shape_str(x->shape));
  if (w->shape.size() != 4)
    throw std::invalid_argument("conv_transpose2d: weight must be ICxOCxKHxKW, got " + shape_str(w->shape));
  const int n = x->shape[0], c = x->shape[1], h = x->shape[2], ww = x->shape[3];
  const int wic = w->shape[0], oc = w->shape[1], kh = w->shape[2], kw = w->shape[3];
  if (c != wic)
    throw std::invalid_argument("conv_transpose2d: input shape " + shape_str(x->shape) +
                                " incompatible with weight shape " + shape_str(w->shape));
  if (b->numel() != oc)
    throw std::invalid_argument("conv_transpose2d: bias shape " + shape_str(b->shape) + " does not match " +
                                std::to_string(oc) + " output channels");
  const int oh = conv_transpose_out_extent(h, kh, stride, pad, out_pad);
  const int ow = conv_transpose_out_extent(ww, kw, stride, pad, out_pad);
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv_transpose2d: degenerate output extent");
  auto out = make_tensor<T>({n, oc, oh, ow});

  for (int ni = 0; ni < n; ++ni)
    for (int o = 0; o < oc; ++o) {
      T* ybase = &out->data[static_cast<size_t>((ni * oc + o)) * oh * ow];
      const T bias = b->data[o];
      for (int i = 0; i < oh * ow; ++i) ybase[i] = bias;
      for (int ci = 0; ci < c; ++ci) {
        const T* xbase = &x->data[static_cast<size_t>((ni * c + ci)) * h * ww];
        const T* wbase = &w->data[static_cast<size_t>((ci * oc + o)) * kh * kw];
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const T wv = wbase[ky * kw + kx];
            if (wv == T(0)) continue;
            int ix_lo = 0;
            while (ix_lo * stride - pad + kx < 0) ++ix_lo;
            int ix_hi = ww;
            while (ix_hi > ix_lo && (ix_hi - 1) * stride - pad + kx >= ow) --ix_hi;
            for (int iy = 0; iy < h; ++iy) {
              const int oy = iy * stride - pad + ky;
              if (oy < 0 || oy >= oh) continue;
              const T* xrow = xbase + static_cast<size_t>(iy) * ww;
              T* yrow = ybase + static_cast<size_t>(oy) * ow - pad + kx;
              for (int ix = ix_lo; ix < ix_hi; ++ix) yrow[ix * stride] += wv * xrow[ix];
            }
          }
      }
    }

  if (detail::want_grad(tape, {&x, &w, &b})) {
    out->requires_grad = true;
    tape->record(out, [x, w, b, out, n, c, h, ww, oc, kh, kw, oh, ow, stride, pad] {
      if (x->requires_grad) {
        x->ensure_grad();
        for (int ni = 0; ni < n; ++ni)
          for (int ci = 0; ci < c; ++ci) {
            T* gxbase = &x->grad[static_cast<size_t>((ni * c + ci)) * h * ww];
            for (int o = 0; o < oc; ++o) {
              const T* gybase = &out->grad[static_cast<size_t>((ni * oc + o)) * oh * ow];
              const T* wbase = &w->data[static_cast<size_t>((ci * oc + o)) * kh * kw];
              for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                  const T wv = wbase[ky * kw + kx];
                  if (wv == T(0)) continue;
                  int ix_lo = 0;
                  while (ix_lo * stride - pad + kx < 0) ++ix_lo;
                  int ix_hi = ww;
                  while (ix_hi > ix_lo && (ix_hi - 1) * stride - pad + kx >= ow) --ix_hi;
                  for (int iy = 0; iy < h; ++iy) {
                    const int oy = iy * stride - pad + ky;
                    if (oy < 0 || oy >= oh) continue;
                    T* gxrow = gxbase + static_cast<size_t>(iy) * ww;
                    const T* gyrow = gybase + static_cast<size_t>(oy) * ow - pad + kx;
                    for (int ix = ix_lo; ix < ix_hi; ++ix) gxrow[ix] += wv * gyrow[ix * stride];
                  }
                }
            }
          }
      }
      if (w->requires_grad) {
        w->ensure_grad();
        for (int ci = 0; ci < c; ++ci)
          for (int o = 0; o < oc; ++o)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                T acc = 0;
                int ix_lo = 0;
                while (ix_lo * stride - pad + kx < 0) ++ix_lo;
                int ix_hi = ww;
                while (ix_hi > ix_lo && (ix_hi - 1) * stride - pad + kx >= ow) --ix_hi;
                for (int ni = 0; ni < n; ++ni) {
                  const T* xbase = &x->data[static_cast<size_t>((ni * c + ci)) * h * ww];
                  const T* gybase = &out->grad[static_cast<size_t>((ni * oc + o)) * oh * ow];
                  for (int iy = 0; iy < h; ++iy) {
                    const int oy = iy * stride - pad + ky;
                    if (oy < 0 || oy >= oh) continue;
                    const T* xrow = xbase + static_cast<size_t>(iy) * ww;
                    const T* gyrow = gybase + static_cast<size_t>(oy) * ow - pad + kx;
                    for (int ix = ix_lo; ix < ix_hi; ++ix) acc += xrow[ix] * gyrow[ix * stride];
                  }
                }
                w->grad[static_cast<size_t>((ci * oc + o)) * kh * kw + ky * kw + kx] += acc;
              }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int ni = 0; ni < n; ++ni)
          for (int o = 0; o < oc; ++o) {
            const T* gyrow = &out->grad[static_cast<size_t>((ni * oc + o)) * oh * ow];
            T acc = 0;
            for (int i = 0; i < oh * ow; ++i) acc += gyrow[i];
            b->grad[o] += acc;
          }
      }
    });
  }
  return out;
}

// ---- batch_norm -------------------------------------------------------------

// Normalizes over every dim except the channel dim (dim 1). In training
// mode with batch size >= 2 the batch statistics are used and running stats
// advance; batch size 1 falls back to running stats without an update.
template <typename T>
TensorPtr<T> batch_norm(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& gamma, const TensorPtr<T>& beta,
                        const TensorPtr<T>& running_mean, const TensorPtr<T>& running_var, bool training, T momentum,
                        T eps) {
  if (x->shape.size() != 4 && x->shape.size() != 2)
    throw std::invalid_argument("batch_norm: input must be NxC or NxCxHxW, got " + shape_str(x->shape));
  const int n = x->shape[0];
  const int c = x->shape[1];
  const int plane = x->shape.size() == 4 ? x->shape[2] * x->shape[3] : 1;
  if (gamma->numel() != c || beta->numel() != c || running_mean->numel() != c || running_var->numel() != c)
    throw std::invalid_argument("batch_norm: affine/stat shapes do not match " + std::to_string(c) + " channels");
  if (momentum <= T(0) || momentum >= T(1)) throw std::invalid_argument("batch_norm: momentum must be in (0,1)");

  const bool use_batch_stats = training && n >= 2;
  const int64_t count = static_cast<int64_t>(n) * plane;
  auto out = make_tensor<T>(x->shape);

  std::vector<T> mean_c(c), invstd_c(c);
  if (use_batch_stats) {
    for (int ch = 0; ch < c; ++ch) {
      T m = 0;
      for (int ni = 0; ni < n; ++ni) {
        const T* row = &x->data[static_cast<size_t>((ni * c + ch)) * plane];
        for (int p = 0; p < plane; ++p) m += row[p];
      }
      m /= static_cast<T>(count);
      T v = 0;
      for (int ni = 0; ni < n; ++ni) {
        const T* row = &x->data[static_cast<size_t>((ni * c + ch)) * plane];
        for (int p = 0; p < plane; ++p) {
          const T d = row[p] - m;
          v += d * d;
        }
      }
      v /= static_cast<T>(count);
      mean_c[ch] = m;
      invstd_c[ch] = T(1) / std::sqrt(v + eps);
      running_mean->data[ch] = (T(1) - momentum) * running_mean->data[ch] + momentum * m;
      running_var->data[ch] = (T(1) - momentum) * running_var->data[ch] + momentum * v;
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean_c[ch] = running_mean->data[ch];
      if (running_var->data[ch] <= T(0)) throw std::runtime_error("batch_norm: running_var must be strictly positive");
      invstd_c[ch] = T(1) / std::sqrt(running_var->data[ch] + eps);
    }
  }

  // xhat retained for the backward rule
  auto xhat = std::make_shared<std::vector<T>>(x->data.size());
  for (int ni = 0; ni < n; ++ni)
    for (int ch = 0; ch < c; ++ch) {
      const size_t base = static_cast<size_t>((ni * c + ch)) * plane;
      const T m = mean_c[ch], is = invstd_c[ch], g = gamma->data[ch], bb = beta->data[ch];
      for (int p = 0; p < plane; ++p) {
        const T xh = (x->data[base + p] - m) * is;
        (*xhat)[base + p] = xh;
        out->data[base + p] = g * xh + bb;
      }
    }

  if (detail::want_grad(tape, {&x, &gamma, &beta})) {
    out->requires_grad = true;
    auto invstd = std::make_shared<std::vector<T>>(invstd_c);
    tape->record(out, [x, gamma, beta, out, xhat, invstd, n, c, plane, count, use_batch_stats] {
      if (gamma->requires_grad) gamma->ensure_grad();
      if (beta->requires_grad) beta->ensure_grad();
      if (x->requires_grad) x->ensure_grad();
      for (int ch = 0; ch < c; ++ch) {
        T sum_gy = 0, sum_gy_xhat = 0;
        for (int ni = 0; ni < n; ++ni) {
          const size_t base = static_cast<size_t>((ni * c + ch)) * plane;
          for (int p = 0; p < plane; ++p) {
            sum_gy += out->grad[base + p];
            sum_gy_xhat += out->grad[base + p] * (*xhat)[base + p];
          }
        }
        if (gamma->requires_grad) gamma->grad[ch] += sum_gy_xhat;
        if (beta->requires_grad) beta->grad[ch] += sum_gy;
        if (x->requires_grad) {
          const T g = gamma->data[ch], is = (*invstd)[ch];
          if (use_batch_stats) {
            const T inv_count = T(1) / static_cast<T>(count);
            for (int ni = 0; ni < n; ++ni) {
              const size_t base = static_cast<size_t>((ni * c + ch)) * plane;
              for (int p = 0; p < plane; ++p) {
                const T gy = out->grad[base + p];
                x->grad[base + p] +=
                    g * is * (gy - inv_count * sum_gy - (*xhat)[base + p] * inv_count * sum_gy_xhat);
              }
            }
          } else {
            for (int ni = 0; ni < n; ++ni) {
              const size_t base = static_cast<size_t>((ni * c + ch)) * plane;
              for (int p = 0; p < plane; ++p) x->grad[base + p] += g * is * out->grad[base + p];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---- linear -----------------------------------------------------------------

template <typename T>
TensorPtr<T> linear(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w, const TensorPtr<T>& b) {
  if (x->shape.size() != 2) throw std::invalid_argument("linear: input must be NxI, got " + shape_str(x->shape));
  if (w->shape.size() != 2) throw std::invalid_argument("linear: weight must be OxI, got " + shape_str(w->shape));
  const int n = x->shape[0], in = x->shape[1], out_dim = w->shape[0];
  if (w->shape[1] != in)
    throw std::invalid_argument("linear: input shape " + shape_str(x->shape) + " incompatible with weight shape " +
                                shape_str(w->shape));
  if (b->numel() != out_dim)
    throw std::invalid_argument("linear: bias shape " + shape_str(b->shape) + " does not match " +
                                std::to_string(out_dim) + " outputs");
  auto out = make_tensor<T>({n, out_dim});
  for (int ni = 0; ni < n; ++ni)
    for (int o = 0; o < out_dim; ++o) {
      T acc = b->data[o];
      const T* xr = &x->data[static_cast<size_t>(ni) * in];
      const T* wr = &w->data[static_cast<size_t>(o) * in];
      for (int i = 0; i < in; ++i) acc += xr[i] * wr[i];
      out->data[static_cast<size_t>(ni) * out_dim + o] = acc;
    }
  if (detail::want_grad(tape, {&x, &w, &b})) {
    out->requires_grad = true;
    tape->record(out, [x, w, b, out, n, in, out_dim] {
      if (x->requires_grad) {
        x->ensure_grad();
        for (int ni = 0; ni < n; ++ni)
          for (int o = 0; o < out_dim; ++o) {
            const T gy = out->grad[static_cast<size_t>(ni) * out_dim + o];
            const T* wr = &w->data[static_cast<size_t>(o) * in];
            T* gx = &x->grad[static_cast<size_t>(ni) * in];
            for (int i = 0; i < in; ++i) gx[i] += gy * wr[i];
          }
      }
      if (w->requires_grad) {
        w->ensure_grad();
        for (int ni = 0; ni < n; ++ni)
          for (int o = 0; o < out_dim; ++o) {
            const T gy = out->grad[static_cast<size_t>(ni) * out_dim + o];
            const T* xr = &x->data[static_cast<size_t>(ni) * in];
            T* gw = &w->grad[static_cast<size_t>(o) * in];
            for (int i = 0; i < in; ++i) gw[i] += gy * xr[i];
          }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int ni = 0; ni < n; ++ni)
          for (int o = 0; o < out_dim; ++o) b->grad[o] += out->grad[static_cast<size_t>(ni) * out_dim + o];
      }
    });
  }
  return out;
}

}  // namespace rosmm::ndgrad
