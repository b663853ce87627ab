#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ndgrad/tensor.hpp"

namespace rosmm::ndgrad {

// Flat named-tensor container with a fixed little-endian binary layout:
//   "RSMM" | version u32 | record count u32
//   per record: name_len u16 | name bytes | dtype u8 (0=f32, 1=f64)
//               | ndim u8 | extents u32 each | raw values
// Records serialize in insertion order so files are byte-reproducible.
class Checkpoint {
 public:
  struct Record {
    std::string name;
    uint8_t dtype = 0;  // 0 = f32, 1 = f64
    std::vector<int> shape;
    std::vector<float> f32;
    std::vector<double> f64;

    int64_t numel() const {
      int64_t n = 1;
      for (int e : shape) n *= e;
      return n;
    }
  };

  static constexpr uint32_t kVersion = 1;

  void put_f32(const std::string& name, const std::vector<int>& shape, const std::vector<float>& data) {
    Record r;
    r.name = name;
    r.dtype = 0;
    r.shape = shape;
    r.f32 = data;
    insert(std::move(r));
  }

  void put_f64(const std::string& name, const std::vector<int>& shape, const std::vector<double>& data) {
    Record r;
    r.name = name;
    r.dtype = 1;
    r.shape = shape;
    r.f64 = data;
    insert(std::move(r));
  }

  void put_scalar(const std::string& name, double value) { put_f64(name, {1}, {value}); }

  void put_tensor(const std::string& name, const Tensor<float>& t) { put_f32(name, t.shape, t.data); }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const Record& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::runtime_error("checkpoint: missing record '" + name + "'");
    return records_[it->second];
  }

  double scalar(const std::string& name) const {
    const Record& r = get(name);
    if (r.numel() != 1) throw std::runtime_error("checkpoint: record '" + name + "' is not a scalar");
    return r.dtype == 0 ? static_cast<double>(r.f32[0]) : r.f64[0];
  }

  void load_into(const std::string& name, Tensor<float>& t) const {
    const Record& r = get(name);
    if (r.dtype != 0) throw std::runtime_error("checkpoint: record '" + name + "' is not f32");
    if (r.shape != t.shape)
      throw std::runtime_error("checkpoint: record '" + name + "' has shape " + shape_str(r.shape) + ", expected " +
                               shape_str(t.shape));
    t.data = r.f32;
  }

  const std::vector<Record>& records() const { return records_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::ios_base::failure("checkpoint: cannot open '" + path + "' for writing");
    out.write("RSMM", 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<uint32_t>(records_.size()));
    for (const auto& r : records_) {
      if (r.name.size() > 0xFFFF) throw std::runtime_error("checkpoint: record name too long");
      write_u16(out, static_cast<uint16_t>(r.name.size()));
      out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
      out.put(static_cast<char>(r.dtype));
      out.put(static_cast<char>(r.shape.size()));
      for (int e : r.shape) write_u32(out, static_cast<uint32_t>(e));
      if (r.dtype == 0)
        for (float v : r.f32) write_raw(out, &v, sizeof v);
      else
        for (double v : r.f64) write_raw(out, &v, sizeof v);
    }
    if (!out) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("checkpoint: cannot open '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "RSMM", 4) != 0)
      throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint file");
    const uint32_t version = read_u32(in, path);
    if (version != kVersion)
      throw std::runtime_error("checkpoint: '" + path + "' has unsupported version " + std::to_string(version));
    const uint32_t count = read_u32(in, path);
    Checkpoint cp;
    for (uint32_t i = 0; i < count; ++i) {
      Record r;
      const uint16_t name_len = read_u16(in, path);
      r.name.resize(name_len);
      if (!in.read(r.name.data(), name_len)) throw truncated(path);
      int dtype = in.get();
      int ndim = in.get();
      if (dtype == EOF || ndim == EOF) throw truncated(path);
      if (dtype != 0 && dtype != 1)
        throw std::runtime_error("checkpoint: record '" + r.name + "' has unknown dtype " + std::to_string(dtype));
      r.dtype = static_cast<uint8_t>(dtype);
      r.shape.resize(ndim);
      for (int d = 0; d < ndim; ++d) r.shape[d] = static_cast<int>(read_u32(in, path));
      const int64_t n = r.numel();
      if (n < 0) throw std::runtime_error("checkpoint: record '" + r.name + "' has invalid shape");
      if (r.dtype == 0) {
        r.f32.resize(n);
        if (n && !in.read(reinterpret_cast<char*>(r.f32.data()), n * static_cast<int64_t>(sizeof(float))))
          throw truncated(path);
      } else {
        r.f64.resize(n);
        if (n && !in.read(reinterpret_cast<char*>(r.f64.data()), n * static_cast<int64_t>(sizeof(double))))
          throw truncated(path);
      }
      cp.insert(std::move(r));
    }
    return cp;
  }

 private:
  std::vector<Record> records_;
  std::map<std::string, size_t> index_;

  void insert(Record&& r) {
    if (index_.count(r.name)) throw std::invalid_argument("checkpoint: duplicate record '" + r.name + "'");
    const int64_t n = r.numel();
    const int64_t have = r.dtype == 0 ? static_cast<int64_t>(r.f32.size()) : static_cast<int64_t>(r.f64.size());
    if (n != have)
      throw std::runtime_error("checkpoint: record '" + r.name + "' shape " + shape_str(r.shape) + " expects " +
                               std::to_string(n) + " values, got " + std::to_string(have));
    index_[r.name] = records_.size();
    records_.push_back(std::move(r));
  }

  static std::runtime_error truncated(const std::string& path) {
    return std::runtime_error("checkpoint: '" + path + "' is truncated");
  }

  static void write_raw(std::ofstream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  static void write_u16(std::ofstream& out, uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
    out.write(b, 2);
  }
  static void write_u32(std::ofstream& out, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
  }
  static uint16_t read_u16(std::ifstream& in, const std::string& path) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2)) throw truncated(path);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  static uint32_t read_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw truncated(path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  }
};

}  // namespace rosmm::ndgrad
