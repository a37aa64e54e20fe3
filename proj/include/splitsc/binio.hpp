#pragma once

#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "splitsc/common.hpp"

// Little-endian binary container plumbing shared by the artifact formats
// (interface spec, dataset cache, checkpoints).

namespace splitsc {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

inline void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

// Cursor over an in-memory blob; any read past the end reports the file as
// corrupted rather than returning garbage.
class BinReader {
 public:
  BinReader(const std::string& data, std::string context)
      : data_(data), context_(std::move(context)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(u(4)); }
  std::uint64_t u64() { return u(8); }

  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string str() { return bytes(u32()); }

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::uint64_t u(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  void need(std::size_t n) {
    if (pos_ + n > data_.size())
      fail(ErrorKind::corrupted, context_ + ": truncated");
  }

  const std::string& data_;
  std::string context_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path, const std::string& what) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open " + what + ": " + path);
  return std::string(std::istreambuf_iterator<char>(f),
                     std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  f.flush();
  if (!f) fail(ErrorKind::io, "write failed: " + path);
}

}  // namespace splitsc
