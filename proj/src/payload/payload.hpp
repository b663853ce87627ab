#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rosmm::payload {

// ordered bit sequence, one byte per bit holding 0 or 1
using BitPayload = std::vector<uint8_t>;

// row-major indices, each emitted MSB-first as 8 bits
BitPayload pack_indices(const std::vector<int32_t>& indices);
std::vector<int32_t> unpack_indices(const BitPayload& bits, int cells);

struct CosineMatrix {
  int n = 0;
  std::vector<double> values;  // n*n, row-major
  bool zero_norm_warning = false;
};

struct AdjacencyMatrix {
  std::vector<double> values;  // 16*16, row-major, in [-1, 1]
  bool zero_norm_warning = false;
};

// full pairwise cosine matrix over m rows of dimension d; zero-norm rows
// contribute 0 everywhere (flagged), nonzero diagonal is exactly 1
CosineMatrix cosine_matrix(const std::vector<double>& rows, int m, int d);

// cosine matrix bilinearly resized (corner-aligned) to 16x16
AdjacencyMatrix adjacency_matrix(const std::vector<double>& rows, int m, int d);

struct QuantizeResult {
  BitPayload bits;
  bool clamped_warning = false;
};

// v -> round((v+1)/2*255) as a byte (half away from zero), MSB-first;
// out-of-range values clamp with a warning
QuantizeResult quantize_adjacency(const std::vector<double>& values);
std::vector<double> dequantize_adjacency(const BitPayload& bits);

// XOR with the splitmix64 keystream of the key, 64 bits per block MSB-first;
// applying twice with the same key restores the input
BitPayload whiten(const BitPayload& bits, uint64_t key);

// file format: "bits=<n>" line, then one lowercase hex line (bits packed
// MSB-first, final byte zero-padded)
void write_payload_file(const std::string& path, const BitPayload& bits);
BitPayload read_payload_file(const std::string& path);

std::string bits_to_hex(const BitPayload& bits);
BitPayload hex_to_bits(const std::string& hex, size_t bit_count);

}  // namespace rosmm::payload
