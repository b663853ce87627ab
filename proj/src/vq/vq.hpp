#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "common/rng.hpp"
#include "ndgrad/tape.hpp"

namespace rosmm::vq {

// K codewords of dimension D plus usage counts since the last reseed/reset.
// K stays <= 256 so an index packs into one byte.
template <typename T>
struct Codebook {
  ndgrad::TensorPtr<T> entries;  // (K, D)
  std::vector<uint64_t> usage;

  int k() const { return entries->shape[0]; }
  int d() const { return entries->shape[1]; }
};

template <typename T>
Codebook<T> make_codebook(int k, int d) {
  if (k < 1 || k > 256) throw std::invalid_argument("codebook: K must be in [1, 256], got " + std::to_string(k));
  if (d < 1) throw std::invalid_argument("codebook: D must be positive");
  Codebook<T> cb;
  cb.entries = ndgrad::make_tensor<T>({k, d});
  cb.usage.assign(k, 0);
  return cb;
}

template <typename T>
struct QuantizedGrid {
  std::vector<int32_t> indices;       // row-major over grid cells
  ndgrad::TensorPtr<T> quantized;     // (cells, D), rows copied from entries
  std::vector<T> distances;           // per-cell L2 residual
};

// argmin-L2 codeword per row of cells (cells, D); ties break to the lowest
// index; usage counts advance by one per row
template <typename T>
QuantizedGrid<T> quantize_nearest(const ndgrad::TensorPtr<T>& cells, Codebook<T>& cb) {
  if (cells->shape.size() != 2 || cells->shape[1] != cb.d())
    throw std::invalid_argument("quantize_nearest: cells shape " + ndgrad::shape_str(cells->shape) +
                                " does not match codebook dimension " + std::to_string(cb.d()));
  const int m = cells->shape[0], d = cb.d(), k = cb.k();
  QuantizedGrid<T> out;
  out.indices.resize(m);
  out.distances.resize(m);
  out.quantized = ndgrad::make_tensor<T>({m, d});
  for (int i = 0; i < m; ++i) {
    const T* row = &cells->data[static_cast<size_t>(i) * d];
    T best = std::numeric_limits<T>::infinity();
    int best_k = 0;
    for (int c = 0; c < k; ++c) {
      const T* e = &cb.entries->data[static_cast<size_t>(c) * d];
      T acc = 0;
      for (int j = 0; j < d; ++j) {
        const T diff = row[j] - e[j];
        acc += diff * diff;
      }
      if (acc < best) {
        best = acc;
        best_k = c;
      }
    }
    out.indices[i] = best_k;
    out.distances[i] = std::sqrt(best);
    std::copy_n(&cb.entries->data[static_cast<size_t>(best_k) * d], d, &out.quantized->data[static_cast<size_t>(i) * d]);
    ++cb.usage[best_k];
  }
  return out;
}

// embedding term moves codewords toward latents; commitment term moves
// latents toward codewords; each is a mean over elements with the other
// side's gradient cut
template <typename T>
std::pair<ndgrad::TensorPtr<T>, ndgrad::TensorPtr<T>> vq_losses(ndgrad::Tape<T>* tape,
                                                                const ndgrad::TensorPtr<T>& cells, Codebook<T>& cb,
                                                                const std::vector<int32_t>& indices) {
  auto selected = ndgrad::gather_rows(tape, cb.entries, indices);
  auto embedding = ndgrad::mse_loss(tape, ndgrad::detach(cells), selected);
  auto commitment = ndgrad::mse_loss(tape, cells, ndgrad::detach(selected));
  return {embedding, commitment};
}

// Lloyd's k-means over sample rows, seeded distinct-sample init; an empty
// cluster is reseeded from the sample farthest from its assigned center
template <typename T>
Codebook<T> init_codebook_kmeans(const std::vector<T>& samples, int n, int d, int k, int iterations, uint64_t seed) {
  if (n < k) throw std::invalid_argument("init_codebook_kmeans: need at least K samples, got " + std::to_string(n) +
                                         " for K=" + std::to_string(k));
  if (iterations < 1) throw std::invalid_argument("init_codebook_kmeans: iterations must be >= 1");
  if (static_cast<size_t>(n) * d != samples.size()) throw std::invalid_argument("init_codebook_kmeans: size mismatch");
  Codebook<T> cb = make_codebook<T>(k, d);

  Rng rng(seed);
  auto order = rng.permutation(static_cast<uint32_t>(n));
  for (int c = 0; c < k; ++c)
    std::copy_n(&samples[static_cast<size_t>(order[c]) * d], d, &cb.entries->data[static_cast<size_t>(c) * d]);

  std::vector<int> assign(n, 0);
  std::vector<T> dist(n, 0);
  for (int it = 0; it < iterations; ++it) {
    for (int i = 0; i < n; ++i) {
      const T* row = &samples[static_cast<size_t>(i) * d];
      T best = std::numeric_limits<T>::infinity();
      int best_k = 0;
      for (int c = 0; c < k; ++c) {
        const T* e = &cb.entries->data[static_cast<size_t>(c) * d];
        T acc = 0;
        for (int j = 0; j < d; ++j) {
          const T diff = row[j] - e[j];
          acc += diff * diff;
        }
        if (acc < best) {
          best = acc;
          best_k = c;
        }
      }
      assign[i] = best_k;
      dist[i] = best;
    }
    std::vector<T> sums(static_cast<size_t>(k) * d, T(0));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      const T* row = &samples[static_cast<size_t>(i) * d];
      T* s = &sums[static_cast<size_t>(assign[i]) * d];
      for (int j = 0; j < d; ++j) s[j] += row[j];
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        const T inv = T(1) / static_cast<T>(counts[c]);
        for (int j = 0; j < d; ++j) cb.entries->data[static_cast<size_t>(c) * d + j] = sums[static_cast<size_t>(c) * d + j] * inv;
      } else {
        int far = 0;
        for (int i = 1; i < n; ++i)
          if (dist[i] > dist[far]) far = i;
        std::copy_n(&samples[static_cast<size_t>(far) * d], d, &cb.entries->data[static_cast<size_t>(c) * d]);
        dist[far] = 0;  // a sample seeds at most one empty cluster per round
      }
    }
  }
  return cb;
}

// replace codewords whose usage fell at or below threshold with seeded draws
// from recent latent rows; returns how many were replaced (0 with no donor
// latents available leaves the codebook untouched)
template <typename T>
int reseed_dead_codes(Codebook<T>& cb, const std::vector<T>& recent, int n_recent, uint64_t threshold, uint64_t seed) {
  if (n_recent > 0 && static_cast<size_t>(n_recent) * cb.d() != recent.size())
    throw std::invalid_argument("reseed_dead_codes: size mismatch");
  std::vector<int> dead;
  for (int c = 0; c < cb.k(); ++c)
    if (cb.usage[c] <= threshold) dead.push_back(c);
  if (dead.empty()) {
    std::fill(cb.usage.begin(), cb.usage.end(), 0);
    return 0;
  }
  if (n_recent == 0) return -1;  // warning: nothing to draw from, no-op
  Rng rng(seed);
  const int d = cb.d();
  for (int c : dead) {
    const int pick = static_cast<int>(rng.below(static_cast<uint64_t>(n_recent)));
    std::copy_n(&recent[static_cast<size_t>(pick) * d], d, &cb.entries->data[static_cast<size_t>(c) * d]);
  }
  std::fill(cb.usage.begin(), cb.usage.end(), 0);
  return static_cast<int>(dead.size());
}

}  // namespace rosmm::vq
