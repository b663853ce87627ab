#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "common/rng.hpp"
#include "payload/payload.hpp"

using namespace rosmm;
using namespace rosmm::payload;

namespace {

int popcount(const BitPayload& bits) {
  int n = 0;
  for (uint8_t b : bits) n += b;
  return n;
}

}  // namespace

TEST_CASE("pack_indices: single index 255 becomes 11111111") {
  auto bits = pack_indices({255});
  REQUIRE(bits.size() == 8);
  for (uint8_t b : bits) CHECK(b == 1);
}

TEST_CASE("pack_indices: [1, 2] concatenates MSB-first bytes") {
  auto bits = pack_indices({1, 2});
  const BitPayload want = {0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0};
  CHECK(bits == want);
}

TEST_CASE("pack_indices: a 16x16 grid yields exactly 2048 bits") {
  std::vector<int32_t> grid(256, 170);
  CHECK(pack_indices(grid).size() == 2048);
}

TEST_CASE("pack_indices: index outside one byte rejected") {
  CHECK_THROWS_AS(pack_indices({256}), std::invalid_argument);
  CHECK_THROWS_AS(pack_indices({-1}), std::invalid_argument);
}

TEST_CASE("unpack_indices: inverse of pack over random grids") {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int32_t> grid(16);
    for (auto& v : grid) v = static_cast<int32_t>(rng.below(256));
    CHECK(unpack_indices(pack_indices(grid), 16) == grid);
  }
  CHECK(unpack_indices(BitPayload(32, 0), 4) == std::vector<int32_t>{0, 0, 0, 0});
  CHECK_THROWS_AS(unpack_indices(BitPayload(31, 0), 4), std::invalid_argument);
}

TEST_CASE("unpack_indices: one flipped bit moves one index by a power of two") {
  Rng rng(32);
  std::vector<int32_t> grid(8);
  for (auto& v : grid) v = static_cast<int32_t>(rng.below(256));
  auto bits = pack_indices(grid);
  for (size_t p : {size_t(0), size_t(5), size_t(17), size_t(63)}) {
    auto flipped = bits;
    flipped[p] ^= 1;
    auto got = unpack_indices(flipped, 8);
    int changed = 0;
    for (size_t i = 0; i < 8; ++i)
      if (got[i] != grid[i]) {
        ++changed;
        CHECK(std::abs(got[i] - grid[i]) == (1 << (7 - (p % 8))));
        CHECK(i == p / 8);
      }
    CHECK(changed == 1);
  }
}

TEST_CASE("cosine_matrix: identical nonzero vectors give all ones") {
  std::vector<double> rows = {2.0, 1.0, 2.0, 1.0, 2.0, 1.0};
  auto m = cosine_matrix(rows, 3, 2);
  REQUIRE(m.n == 3);
  for (double v : m.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(m.zero_norm_warning);
}

TEST_CASE("cosine_matrix: orthogonal pair gives identity structure") {
  std::vector<double> rows = {1.0, 0.0, 0.0, 3.0};
  auto m = cosine_matrix(rows, 2, 2);
  CHECK(m.values[0] == doctest::Approx(1.0));
  CHECK(m.values[3] == doctest::Approx(1.0));
  CHECK(m.values[1] == doctest::Approx(0.0));
  CHECK(m.values[2] == doctest::Approx(0.0));
}

TEST_CASE("cosine_matrix: matches the double-loop oracle, symmetric, unit diagonal") {
  Rng rng(33);
  const int mcount = 25, d = 7;
  std::vector<double> rows(mcount * d);
  for (auto& v : rows) v = rng.normal();
  auto m = cosine_matrix(rows, mcount, d);

  for (int i = 0; i < mcount; ++i) {
    CHECK(m.values[i * mcount + i] == 1.0);
    for (int j = 0; j < mcount; ++j) {
      double dot = 0, na = 0, nb = 0;
      for (int k = 0; k < d; ++k) {
        dot += rows[i * d + k] * rows[j * d + k];
        na += rows[i * d + k] * rows[i * d + k];
        nb += rows[j * d + k] * rows[j * d + k];
      }
      const double want = dot / (std::sqrt(na) * std::sqrt(nb));
      CHECK(std::abs(m.values[i * mcount + j] - want) < 1e-6);
      CHECK(std::abs(m.values[i * mcount + j] - m.values[j * mcount + i]) < 1e-6);
    }
  }
}

TEST_CASE("cosine_matrix: zero-norm row contributes zeros with a warning") {
  std::vector<double> rows = {0.0, 0.0, 1.0, 2.0};
  auto m = cosine_matrix(rows, 2, 2);
  CHECK(m.zero_norm_warning);
  CHECK(m.values[0] == 0.0);
  CHECK(m.values[1] == 0.0);
  CHECK(m.values[2] == 0.0);
  CHECK(m.values[3] == doctest::Approx(1.0));
}

TEST_CASE("adjacency_matrix: 16x16 output inside [-1, 1]; constant grid stays all ones") {
  Rng rng(34);
  const int mcount = 64, d = 5;
  std::vector<double> rows(mcount * d);
  for (auto& v : rows) v = rng.normal();
  auto adj = adjacency_matrix(rows, mcount, d);
  REQUIRE(adj.values.size() == 256);
  for (double v : adj.values) {
    CHECK(v <= 1.0 + 1e-12);
    CHECK(v >= -1.0 - 1e-12);
  }

  std::vector<double> same(mcount * d, 0.7);
  auto ones = adjacency_matrix(same, mcount, d);
  for (double v : ones.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("quantize_adjacency: endpoints and the 0.5 rounding case") {
  auto q = quantize_adjacency({1.0, -1.0, 0.5});
  REQUIRE(q.bits.size() == 24);
  const BitPayload want = {1, 1, 1, 1, 1, 1, 1, 1,   // 255
                           0, 0, 0, 0, 0, 0, 0, 0,   // 0
                           1, 0, 1, 1, 1, 1, 1, 1};  // round(191.25) = 191
  CHECK(q.bits == want);
  CHECK_FALSE(q.clamped_warning);

  auto back = dequantize_adjacency(q.bits);
  CHECK(back[0] == 1.0);
  CHECK(back[1] == -1.0);
  CHECK(back[2] == doctest::Approx(2.0 * 191 / 255 - 1.0).epsilon(1e-12));
}

TEST_CASE("quantize_adjacency: out-of-range clamps with warning; idempotent through the code") {
  auto q = quantize_adjacency({1.75, -3.0});
  CHECK(q.clamped_warning);
  auto v = dequantize_adjacency(q.bits);
  CHECK(v[0] == 1.0);
  CHECK(v[1] == -1.0);

  // exhaustive byte-level losslessness: dequantize then quantize returns
  // every byte unchanged
  BitPayload all;
  for (int byte = 0; byte < 256; ++byte)
    for (int bit = 7; bit >= 0; --bit) all.push_back(static_cast<uint8_t>((byte >> bit) & 1));
  auto round = quantize_adjacency(dequantize_adjacency(all));
  CHECK(round.bits == all);
  CHECK_FALSE(round.clamped_warning);
}

TEST_CASE("whiten: involution that preserves length") {
  Rng rng(35);
  BitPayload bits(333);
  for (auto& b : bits) b = static_cast<uint8_t>(rng.below(2));
  auto w = whiten(bits, 0x1234567890abcdefULL);
  CHECK(w.size() == bits.size());
  CHECK(whiten(w, 0x1234567890abcdefULL) == bits);
  CHECK(w != bits);
}

TEST_CASE("whiten: all-zero payload under key 42 lands in the binomial band") {
  BitPayload zeros(2048, 0);
  auto w = whiten(zeros, 42);
  const int ones = popcount(w);
  CHECK(ones >= 896);
  CHECK(ones <= 1152);
  // keystream is pure in (key, length): same call twice gives the same count
  CHECK(popcount(whiten(zeros, 42)) == ones);
}

TEST_CASE("whiten: flipping one key bit rewrites at least 40% of bits on average") {
  Rng rng(36);
  double flipped = 0;
  const int trials = 100, n = 256;
  for (int t = 0; t < trials; ++t) {
    BitPayload bits(n);
    for (auto& b : bits) b = static_cast<uint8_t>(rng.below(2));
    const uint64_t key = rng.next_u64();
    auto a = whiten(bits, key);
    auto b = whiten(bits, key ^ (1ULL << (t % 64)));
    for (int i = 0; i < n; ++i) flipped += a[i] != b[i];
  }
  CHECK(flipped / (trials * n) >= 0.40);
}

TEST_CASE("payload files: hex round trip with a bits= header") {
  Rng rng(37);
  BitPayload bits(52);
  for (auto& b : bits) b = static_cast<uint8_t>(rng.below(2));

  auto hex = bits_to_hex(bits);
  CHECK(hex.size() == 14);  // padded to whole bytes
  CHECK(hex_to_bits(hex, 52) == bits);

  const std::string path = "payload_roundtrip.txt";
  write_payload_file(path, bits);
  {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "bits=52");
  }
  CHECK(read_payload_file(path) == bits);
  std::remove(path.c_str());
}
