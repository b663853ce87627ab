#include "carrier/carrier.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "common/rng.hpp"

namespace rosmm::carrier {

std::vector<double> embed_bits(const payload::BitPayload& bits, LatentShape shape, int r, uint64_t perm_seed,
                               uint64_t rng_seed) {
  if (r < 1) throw std::invalid_argument("embed_bits: replication must be >= 1");
  const int64_t cells = shape.cells();
  const int64_t needed = static_cast<int64_t>(bits.size()) * r;
  if (needed > cells)
    throw std::invalid_argument("embed_bits: capacity exceeded, need " + std::to_string(needed) + " cells for " +
                                std::to_string(bits.size()) + " bits at r=" + std::to_string(r) + ", have " +
                                std::to_string(cells));
  Rng perm_rng(perm_seed);
  const auto perm = perm_rng.permutation(static_cast<uint32_t>(cells));
  Rng rng(rng_seed);
  std::vector<double> values(cells);
  for (int64_t slot = 0; slot < cells; ++slot) {
    const double g = rng.normal();
    if (slot < needed) {
      const uint8_t bit = bits[static_cast<size_t>(slot / r)];
      values[perm[slot]] = bit ? std::abs(g) : -std::abs(g);
    } else {
      values[perm[slot]] = g;
    }
  }
  return values;
}

payload::BitPayload extract_bits(const std::vector<double>& values, LatentShape shape, size_t n_bits, int r,
                                 uint64_t perm_seed) {
  if (r < 1) throw std::invalid_argument("extract_bits: replication must be >= 1");
  const int64_t cells = shape.cells();
  if (static_cast<int64_t>(values.size()) != cells)
    throw std::invalid_argument("extract_bits: latent has " + std::to_string(values.size()) + " values, shape needs " +
                                std::to_string(cells));
  if (static_cast<int64_t>(n_bits) * r > cells)
    throw std::invalid_argument("extract_bits: " + std::to_string(n_bits) + " bits at r=" + std::to_string(r) +
                                " exceed " + std::to_string(cells) + " cells");
  Rng perm_rng(perm_seed);
  const auto perm = perm_rng.permutation(static_cast<uint32_t>(cells));
  payload::BitPayload bits(n_bits);
  for (size_t j = 0; j < n_bits; ++j) {
    double sum = 0;
    for (int t = 0; t < r; ++t) sum += values[perm[j * r + t]];
    bits[j] = sum > 0.0 ? 1 : 0;
  }
  return bits;
}

namespace {

// cos(pi*(2n+1)*k/(2N)) table with orthonormal scale factors folded in
const std::vector<double>& dct_table(int n) {
  static std::map<int, std::vector<double>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> tab(static_cast<size_t>(n) * n);
  const double a0 = std::sqrt(1.0 / n);
  const double ak = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      tab[static_cast<size_t>(k) * n + i] = (k == 0 ? a0 : ak) * std::cos(M_PI * (2.0 * i + 1.0) * k / (2.0 * n));
  return cache.emplace(n, std::move(tab)).first->second;
}

// out[k] = sum_i tab[k,i] * in[i] over rows, then columns (or transposed)
void transform_rows(const std::vector<double>& src, std::vector<double>& dst, int h, int w, const std::vector<double>& tab,
                    bool transpose_tab) {
  for (int y = 0; y < h; ++y)
    for (int k = 0; k < w; ++k) {
      double acc = 0;
      for (int i = 0; i < w; ++i) {
        const double t = transpose_tab ? tab[static_cast<size_t>(i) * w + k] : tab[static_cast<size_t>(k) * w + i];
        acc += t * src[static_cast<size_t>(y) * w + i];
      }
      dst[static_cast<size_t>(y) * w + k] = acc;
    }
}

void transform_cols(const std::vector<double>& src, std::vector<double>& dst, int h, int w, const std::vector<double>& tab,
                    bool transpose_tab) {
  for (int x = 0; x < w; ++x)
    for (int k = 0; k < h; ++k) {
      double acc = 0;
      for (int i = 0; i < h; ++i) {
        const double t = transpose_tab ? tab[static_cast<size_t>(i) * h + k] : tab[static_cast<size_t>(k) * h + i];
        acc += t * src[static_cast<size_t>(i) * w + x];
      }
      dst[static_cast<size_t>(k) * w + x] = acc;
    }
}

}  // namespace

std::vector<double> dct2_forward(const std::vector<double>& plane, int h, int w) {
  if (static_cast<size_t>(h) * w != plane.size()) throw std::invalid_argument("dct2_forward: size mismatch");
  std::vector<double> tmp(plane.size()), out(plane.size());
  transform_rows(plane, tmp, h, w, dct_table(w), false);
  transform_cols(tmp, out, h, w, dct_table(h), false);
  return out;
}

std::vector<double> dct2_inverse(const std::vector<double>& coef, int h, int w) {
  if (static_cast<size_t>(h) * w != coef.size()) throw std::invalid_argument("dct2_inverse: size mismatch");
  std::vector<double> tmp(coef.size()), out(coef.size());
  transform_rows(coef, tmp, h, w, dct_table(w), true);
  transform_cols(tmp, out, h, w, dct_table(h), true);
  return out;
}

Image render_latent(const std::vector<double>& values, LatentShape shape, double scale) {
  if (shape.channels != 3)
    throw std::invalid_argument("render_latent: latent must have 3 channels, got " + std::to_string(shape.channels));
  if (static_cast<int64_t>(values.size()) != shape.cells())
    throw std::invalid_argument("render_latent: latent size mismatch");
  Image img(3, shape.height, shape.width);
  const size_t plane = static_cast<size_t>(shape.height) * shape.width;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> coef(values.begin() + c * plane, values.begin() + (c + 1) * plane);
    const auto pix = dct2_inverse(coef, shape.height, shape.width);
    for (size_t i = 0; i < plane; ++i) img.pixels[c * plane + i] = clamp_round_u8(128.0 + scale * pix[i]);
  }
  return img;
}

std::vector<double> invert_render(const Image& img, double scale) {
  if (img.channels != 3) throw std::invalid_argument("invert_render: image must have 3 channels");
  const size_t plane = static_cast<size_t>(img.height) * img.width;
  std::vector<double> values(3 * plane);
  std::vector<double> pix(plane);
  for (int c = 0; c < 3; ++c) {
    for (size_t i = 0; i < plane; ++i) pix[i] = (static_cast<double>(img.pixels[c * plane + i]) - 128.0) / scale;
    const auto coef = dct2_forward(pix, img.height, img.width);
    std::copy(coef.begin(), coef.end(), values.begin() + c * plane);
  }
  return values;
}

}  // namespace rosmm::carrier
