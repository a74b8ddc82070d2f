#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecgid/tensor.hpp"

namespace ecgid::tn {

// Weight checkpoint: versioned binary of named parameter blocks.
//   "ECGW" | version u32 | dtype u8 (4 = f32, 8 = f64) | count u32
//   per block: name_len u16 | name | rank u8 | dims i64 * rank | raw values
// Little-endian throughout; write -> read is the identity.

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error("checkpoint: " + what) {}
};

namespace detail {

inline void put_bytes(std::vector<uint8_t>& out, const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

template <class V>
void put(std::vector<uint8_t>& out, V v) {
  put_bytes(out, &v, sizeof(V));
}

struct Reader {
  const uint8_t* p;
  size_t remaining;
  void need(size_t n) const {
    if (remaining < n) throw CheckpointError("truncated");
  }
  void read(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, p, n);
    p += n;
    remaining -= n;
  }
  template <class V>
  V get() {
    V v;
    read(&v, sizeof(V));
    return v;
  }
};

}  // namespace detail

template <class T>
std::vector<uint8_t> write_checkpoint(const std::vector<std::pair<std::string, const Tensor<T>*>>& blocks) {
  std::vector<uint8_t> out;
  out.insert(out.end(), {'E', 'C', 'G', 'W'});
  detail::put<uint32_t>(out, 1);
  detail::put<uint8_t>(out, static_cast<uint8_t>(sizeof(T)));
  detail::put<uint32_t>(out, static_cast<uint32_t>(blocks.size()));
  for (const auto& [name, t] : blocks) {
    detail::put<uint16_t>(out, static_cast<uint16_t>(name.size()));
    detail::put_bytes(out, name.data(), name.size());
    detail::put<uint8_t>(out, static_cast<uint8_t>(t->rank()));
    for (int64_t d : t->shape) detail::put<int64_t>(out, d);
    detail::put_bytes(out, t->data(), static_cast<size_t>(t->size()) * sizeof(T));
  }
  return out;
}

template <class T>
std::map<std::string, Tensor<T>> read_checkpoint(const std::vector<uint8_t>& bytes) {
  detail::Reader r{bytes.data(), bytes.size()};
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, "ECGW", 4) != 0) throw CheckpointError("bad magic");
  const auto version = r.get<uint32_t>();
  if (version != 1) throw CheckpointError("unsupported version " + std::to_string(version));
  const auto dtype = r.get<uint8_t>();
  if (dtype != sizeof(T)) {
    throw CheckpointError("dtype width " + std::to_string(dtype) + " does not match model scalar width " +
                          std::to_string(sizeof(T)));
  }
  const auto count = r.get<uint32_t>();
  std::map<std::string, Tensor<T>> out;
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<uint16_t>();
    std::string name(name_len, '\0');
    r.read(name.data(), name_len);
    const auto rank = r.get<uint8_t>();
    std::vector<int64_t> shape(rank);
    for (auto& d : shape) d = r.get<int64_t>();
    Tensor<T> t(shape);
    r.read(t.data(), static_cast<size_t>(t.size()) * sizeof(T));
    if (!out.emplace(std::move(name), std::move(t)).second) throw CheckpointError("duplicate block name");
  }
  if (r.remaining != 0) throw CheckpointError("trailing bytes");
  return out;
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write failed: " + path);
}

inline std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw CheckpointError("cannot open " + path);
  const auto size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw CheckpointError("read failed: " + path);
  return bytes;
}

}  // namespace ecgid::tn
