#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ndgrad/tensor.hpp"

namespace rosmm {

// 8-bit RGB image, planar channel-major storage (channel, row, column)
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<uint8_t> pixels;

  Image() = default;
  Image(int c, int h, int w) : channels(c), height(h), width(w), pixels(static_cast<size_t>(c) * h * w, 0) {
    if (c <= 0 || h <= 0 || w <= 0) throw std::invalid_argument("Image: non-positive dimension");
  }

  size_t idx(int c, int y, int x) const { return (static_cast<size_t>(c) * height + y) * width + x; }
  uint8_t at(int c, int y, int x) const { return pixels[idx(c, y, x)]; }
  uint8_t& at(int c, int y, int x) { return pixels[idx(c, y, x)]; }

  bool same_shape(const Image& o) const { return channels == o.channels && height == o.height && width == o.width; }
};

inline uint8_t clamp_round_u8(double v) {
  const double r = std::round(v);
  if (r <= 0.0) return 0;
  if (r >= 255.0) return 255;
  return static_cast<uint8_t>(r);
}

// ITU-R 601 luma from 8-bit RGB, kept in double
inline double luma601(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// [0,255] bytes -> [0,1] floats, single-image NCHW batch entry
template <typename T>
ndgrad::TensorPtr<T> image_to_tensor(const Image& img) {
  auto t = ndgrad::make_tensor<T>({1, img.channels, img.height, img.width});
  const T inv = T(1) / T(255);
  for (size_t i = 0; i < img.pixels.size(); ++i) t->data[i] = static_cast<T>(img.pixels[i]) * inv;
  return t;
}

// batch of images stacked into one NCHW tensor; all images must share a shape
template <typename T>
ndgrad::TensorPtr<T> images_to_tensor(const std::vector<Image>& imgs) {
  if (imgs.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  for (const auto& im : imgs)
    if (!im.same_shape(imgs[0])) throw std::invalid_argument("images_to_tensor: mixed shapes in batch");
  const int c = imgs[0].channels, h = imgs[0].height, w = imgs[0].width;
  auto t = ndgrad::make_tensor<T>({static_cast<int>(imgs.size()), c, h, w});
  const T inv = T(1) / T(255);
  const size_t per = imgs[0].pixels.size();
  for (size_t n = 0; n < imgs.size(); ++n)
    for (size_t i = 0; i < per; ++i) t->data[n * per + i] = static_cast<T>(imgs[n].pixels[i]) * inv;
  return t;
}

// one batch entry of a [0,1] NCHW tensor -> rounded 8-bit image
template <typename T>
Image tensor_to_image(const ndgrad::TensorPtr<T>& t, int batch_index = 0) {
  if (t->shape.size() != 4) throw std::invalid_argument("tensor_to_image: expected NCHW tensor");
  const int c = t->shape[1], h = t->shape[2], w = t->shape[3];
  if (batch_index < 0 || batch_index >= t->shape[0]) throw std::invalid_argument("tensor_to_image: batch index");
  Image img(c, h, w);
  const size_t per = img.pixels.size();
  for (size_t i = 0; i < per; ++i)
    img.pixels[i] = clamp_round_u8(static_cast<double>(t->data[batch_index * per + i]) * 255.0);
  return img;
}

}  // namespace rosmm
