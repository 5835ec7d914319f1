#pragma once

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "caseforge/core/tensor.hpp"

namespace caseforge {

static_assert(std::endian::native == std::endian::little,
              "archives are defined little-endian; big-endian hosts need byte swaps");

// ---------------------------------------------------------------------------
// Tensor archive: magic "CFTA", u32 version, u32 record count, then records of
// (u16 name_len, name, u8 dtype, u8 ndim, i64 dims..., raw little-endian data).
// ---------------------------------------------------------------------------

enum class Dtype : uint8_t { f32 = 0, f64 = 1, i64 = 2 };

template <typename T>
constexpr Dtype dtype_of();
template <>
constexpr Dtype dtype_of<float>() { return Dtype::f32; }
template <>
constexpr Dtype dtype_of<double>() { return Dtype::f64; }
template <>
constexpr Dtype dtype_of<int64_t>() { return Dtype::i64; }

inline size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f32: return 4;
    case Dtype::f64: return 8;
    case Dtype::i64: return 8;
  }
  return 0;
}

namespace io_detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(is), Errc::io_error, "archive: unexpected end of stream");
  return v;
}

}  // namespace io_detail

class TensorArchiveWriter {
 public:
  template <typename T>
  void add(const std::string& name, const Tensor<T>& t) {
    Record r;
    r.name = name;
    r.dtype = dtype_of<T>();
    r.shape = t.shape();
    r.bytes.resize(static_cast<size_t>(t.numel()) * sizeof(T));
    std::memcpy(r.bytes.data(), t.data(), r.bytes.size());
    records_.push_back(std::move(r));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    require(static_cast<bool>(os), Errc::io_error, "cannot open for write: " + path.string());
    os.write("CFTA", 4);
    io_detail::write_pod<uint32_t>(os, 1);
    io_detail::write_pod<uint32_t>(os, static_cast<uint32_t>(records_.size()));
    for (const auto& r : records_) {
      io_detail::write_pod<uint16_t>(os, static_cast<uint16_t>(r.name.size()));
      os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
      io_detail::write_pod<uint8_t>(os, static_cast<uint8_t>(r.dtype));
      io_detail::write_pod<uint8_t>(os, static_cast<uint8_t>(r.shape.size()));
      for (int64_t d : r.shape) io_detail::write_pod<int64_t>(os, d);
      os.write(reinterpret_cast<const char*>(r.bytes.data()),
               static_cast<std::streamsize>(r.bytes.size()));
    }
    require(static_cast<bool>(os), Errc::io_error, "write failed: " + path.string());
  }

 private:
  struct Record {
    std::string name;
    Dtype dtype;
    Shape shape;
    std::vector<uint8_t> bytes;
  };
  std::vector<Record> records_;
};

class TensorArchiveReader {
 public:
  explicit TensorArchiveReader(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    require(static_cast<bool>(is), Errc::missing_file, "cannot open: " + path.string());
    char magic[4];
    is.read(magic, 4);
    require(is && std::memcmp(magic, "CFTA", 4) == 0, Errc::bad_checkpoint,
            "bad archive magic in " + path.string());
    const auto version = io_detail::read_pod<uint32_t>(is);
    require(version == 1, Errc::bad_checkpoint,
            "unsupported archive version " + std::to_string(version));
    const auto count = io_detail::read_pod<uint32_t>(is);
    for (uint32_t i = 0; i < count; ++i) {
      const auto name_len = io_detail::read_pod<uint16_t>(is);
      std::string name(name_len, '\0');
      is.read(name.data(), name_len);
      const auto dtype = static_cast<Dtype>(io_detail::read_pod<uint8_t>(is));
      const auto ndim = io_detail::read_pod<uint8_t>(is);
      Shape shape(ndim);
      int64_t numel = 1;
      for (auto& d : shape) {
        d = io_detail::read_pod<int64_t>(is);
        numel *= d;
      }
      Entry e;
      e.dtype = dtype;
      e.shape = shape;
      e.bytes.resize(static_cast<size_t>(numel) * dtype_size(dtype));
      is.read(reinterpret_cast<char*>(e.bytes.data()),
              static_cast<std::streamsize>(e.bytes.size()));
      require(static_cast<bool>(is), Errc::bad_checkpoint, "truncated archive: " + path.string());
      entries_.emplace(std::move(name), std::move(e));
    }
  }

  template <typename T>
  Tensor<T> get(const std::string& name) const {
    auto it = entries_.find(name);
    require(it != entries_.end(), Errc::bad_checkpoint, "archive: missing tensor '" + name + "'");
    require(it->second.dtype == dtype_of<T>(), Errc::bad_checkpoint,
            "archive: dtype mismatch for '" + name + "'");
    Tensor<T> t(it->second.shape);
    std::memcpy(t.data(), it->second.bytes.data(), it->second.bytes.size());
    return t;
  }

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    Dtype dtype;
    Shape shape;
    std::vector<uint8_t> bytes;
  };
  std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// misc file helpers
// ---------------------------------------------------------------------------

inline std::string sha256_hex(const void* data, size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int dlen = 0;
  EVP_Digest(data, len, digest, &dlen, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(dlen * 2);
  for (unsigned int i = 0; i < dlen; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

inline std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  require(static_cast<bool>(is), Errc::missing_file, "cannot open: " + path.string());
  const auto size = is.tellg();
  is.seekg(0);
  std::vector<uint8_t> buf(static_cast<size_t>(size));
  is.read(reinterpret_cast<char*>(buf.data()), size);
  require(static_cast<bool>(is), Errc::io_error, "read failed: " + path.string());
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), Errc::io_error, "cannot open for write: " + path.string());
  os << text;
  require(static_cast<bool>(os), Errc::io_error, "write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace caseforge
