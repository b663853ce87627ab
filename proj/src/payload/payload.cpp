#include "payload/payload.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "common/resize.hpp"
#include "common/rng.hpp"

namespace rosmm::payload {

BitPayload pack_indices(const std::vector<int32_t>& indices) {
  BitPayload bits;
  bits.reserve(indices.size() * 8);
  for (int32_t v : indices) {
    if (v < 0 || v >= 256)
      throw std::invalid_argument("pack_indices: index " + std::to_string(v) + " outside [0, 256)");
    for (int b = 7; b >= 0; --b) bits.push_back(static_cast<uint8_t>((v >> b) & 1));
  }
  return bits;
}

std::vector<int32_t> unpack_indices(const BitPayload& bits, int cells) {
  if (bits.size() != static_cast<size_t>(cells) * 8)
    throw std::invalid_argument("unpack_indices: payload length " + std::to_string(bits.size()) +
                                " does not match " + std::to_string(cells) + " cells");
  std::vector<int32_t> out(cells, 0);
  for (int i = 0; i < cells; ++i)
    for (int b = 0; b < 8; ++b) out[i] = (out[i] << 1) | bits[static_cast<size_t>(i) * 8 + b];
  return out;
}

CosineMatrix cosine_matrix(const std::vector<double>& rows, int m, int d) {
  if (m < 2) throw std::invalid_argument("cosine_matrix: need at least 2 vectors");
  if (static_cast<size_t>(m) * d != rows.size()) throw std::invalid_argument("cosine_matrix: size mismatch");
  CosineMatrix cm;
  cm.n = m;
  cm.values.assign(static_cast<size_t>(m) * m, 0.0);
  std::vector<double> norms(m, 0.0);
  for (int i = 0; i < m; ++i) {
    double acc = 0;
    for (int j = 0; j < d; ++j) {
      const double v = rows[static_cast<size_t>(i) * d + j];
      acc += v * v;
    }
    norms[i] = std::sqrt(acc);
    if (norms[i] == 0.0) cm.zero_norm_warning = true;
  }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (norms[i] == 0.0 || norms[j] == 0.0) continue;
      double dot = 0;
      for (int t = 0; t < d; ++t)
        dot += rows[static_cast<size_t>(i) * d + t] * rows[static_cast<size_t>(j) * d + t];
      double c = i == j ? 1.0 : dot / (norms[i] * norms[j]);
      if (c > 1.0) c = 1.0;
      if (c < -1.0) c = -1.0;
      cm.values[static_cast<size_t>(i) * m + j] = c;
    }
  return cm;
}

AdjacencyMatrix adjacency_matrix(const std::vector<double>& rows, int m, int d) {
  CosineMatrix cm = cosine_matrix(rows, m, d);
  AdjacencyMatrix adj;
  adj.zero_norm_warning = cm.zero_norm_warning;
  adj.values = bilinear_resize_plane(cm.values, cm.n, cm.n, 16, 16);
  return adj;
}

QuantizeResult quantize_adjacency(const std::vector<double>& values) {
  QuantizeResult out;
  out.bits.reserve(values.size() * 8);
  for (double v : values) {
    if (v < -1.0 || v > 1.0) {
      out.clamped_warning = true;
      v = v < -1.0 ? -1.0 : 1.0;
    }
    const int byte = static_cast<int>(std::round((v + 1.0) / 2.0 * 255.0));
    for (int b = 7; b >= 0; --b) out.bits.push_back(static_cast<uint8_t>((byte >> b) & 1));
  }
  return out;
}

std::vector<double> dequantize_adjacency(const BitPayload& bits) {
  if (bits.size() % 8 != 0) throw std::invalid_argument("dequantize_adjacency: bit count not a multiple of 8");
  std::vector<double> out(bits.size() / 8);
  for (size_t i = 0; i < out.size(); ++i) {
    int byte = 0;
    for (int b = 0; b < 8; ++b) byte = (byte << 1) | bits[i * 8 + b];
    out[i] = 2.0 * byte / 255.0 - 1.0;
  }
  return out;
}

BitPayload whiten(const BitPayload& bits, uint64_t key) {
  BitPayload out(bits.size());
  uint64_t state = key;
  uint64_t block = 0;
  for (size_t i = 0; i < bits.size(); ++i) {
    const int pos = static_cast<int>(i % 64);
    if (pos == 0) block = splitmix64_next(state);
    const uint8_t ks = static_cast<uint8_t>((block >> (63 - pos)) & 1);
    out[i] = bits[i] ^ ks;
  }
  return out;
}

std::string bits_to_hex(const BitPayload& bits) {
  static const char* digits = "0123456789abcdef";
  std::string hex;
  const size_t nbytes = (bits.size() + 7) / 8;
  hex.reserve(nbytes * 2);
  for (size_t i = 0; i < nbytes; ++i) {
    int byte = 0;
    for (int b = 0; b < 8; ++b) {
      const size_t pos = i * 8 + b;
      byte = (byte << 1) | (pos < bits.size() ? bits[pos] : 0);
    }
    hex.push_back(digits[byte >> 4]);
    hex.push_back(digits[byte & 0xF]);
  }
  return hex;
}

BitPayload hex_to_bits(const std::string& hex, size_t bit_count) {
  if (hex.size() * 4 < bit_count) throw std::invalid_argument("hex_to_bits: hex string too short");
  BitPayload bits;
  bits.reserve(bit_count);
  for (size_t i = 0; i < bit_count; ++i) {
    const char c = hex[i / 4];
    int nib;
    if (c >= '0' && c <= '9')
      nib = c - '0';
    else if (c >= 'a' && c <= 'f')
      nib = c - 'a' + 10;
    else
      throw std::invalid_argument(std::string("hex_to_bits: invalid hex character '") + c + "'");
    bits.push_back(static_cast<uint8_t>((nib >> (3 - i % 4)) & 1));
  }
  return bits;
}

void write_payload_file(const std::string& path, const BitPayload& bits) {
  for (uint8_t b : bits)
    if (b > 1) throw std::invalid_argument("write_payload_file: payload contains non-bit values");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("payload: cannot open '" + path + "' for writing");
  out << "bits=" << bits.size() << "\n" << bits_to_hex(bits) << "\n";
  if (!out) throw std::runtime_error("payload: write to '" + path + "' failed");
}

BitPayload read_payload_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("payload: cannot open '" + path + "'");
  std::string header, hex;
  if (!std::getline(in, header) || header.rfind("bits=", 0) != 0)
    throw std::runtime_error("payload: '" + path + "' is missing the bits= header");
  size_t bit_count = 0;
  try {
    bit_count = std::stoull(header.substr(5));
  } catch (...) {
    throw std::runtime_error("payload: '" + path + "' has invalid bit count '" + header.substr(5) + "'");
  }
  if (!std::getline(in, hex)) throw std::runtime_error("payload: '" + path + "' is missing the hex line");
  return hex_to_bits(hex, bit_count);
}

}  // namespace rosmm::payload
