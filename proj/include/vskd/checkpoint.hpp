#pragma once

// Flat binary tensor container used for model checkpoints and raw GAF dumps.
// Layout (all integers little-endian):
//   magic "VSKD" | version u32 | records until EOF
//   record: name_len u64 | name bytes | rank u64 | dims u64 each | values f64
// Values are IEEE-754 binary64, little-endian, row-major.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "vskd/common.hpp"
#include "vskd/tensor.hpp"

namespace vskd::io {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

/// Bounds-checked little-endian reads over an in-memory file image.
class Cursor {
 public:
  Cursor(const std::string& bytes, const std::string& what)
      : bytes_(bytes), what_(what) {}

  bool at_end() const { return pos_ == bytes_.size(); }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string take(std::uint64_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::uint64_t n) {
    if (n > bytes_.size() - pos_)
      throw ArtifactError(what_ + ": truncated file");
  }

  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError(path + ": cannot open");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) throw ArtifactError(path + ": read failed");
  return bytes;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError(path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw ArtifactError(path + ": write failed");
}

}  // namespace detail

inline std::string serialize_checkpoint(const std::vector<NamedTensor>& params) {
  std::string out;
  out += "VSKD";
  detail::put_u32(out, kCheckpointVersion);
  for (const NamedTensor& p : params) {
    detail::put_u64(out, p.name.size());
    out += p.name;
    detail::put_u64(out, p.tensor.rank());
    for (std::size_t d : p.tensor.shape) detail::put_u64(out, d);
    for (double v : p.tensor.values) detail::put_f64(out, v);
  }
  return out;
}

inline std::vector<NamedTensor> parse_checkpoint(const std::string& bytes,
                                                 const std::string& what) {
  detail::Cursor cur(bytes, what);
  if (cur.take(4) != "VSKD") throw ArtifactError(what + ": bad magic bytes");
  const std::uint32_t version = cur.u32();
  if (version != kCheckpointVersion)
    throw ArtifactError(what + ": unsupported format version " +
                        std::to_string(version));
  std::vector<NamedTensor> params;
  while (!cur.at_end()) {
    NamedTensor p;
    p.name = cur.take(cur.u64());
    const std::uint64_t rank = cur.u64();
    if (rank > 8) throw ArtifactError(what + ": implausible tensor rank");
    std::vector<std::size_t> shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<std::size_t>(cur.u64());
      numel *= d;
    }
    std::vector<double> values(numel);
    for (auto& v : values) v = cur.f64();
    p.tensor = Tensor(std::move(shape), std::move(values));
    params.push_back(std::move(p));
  }
  return params;
}

inline void write_checkpoint(const std::string& path,
                             const std::vector<NamedTensor>& params) {
  detail::write_file(path, serialize_checkpoint(params));
}

inline std::vector<NamedTensor> read_checkpoint(const std::string& path) {
  return parse_checkpoint(detail::read_file(path), path);
}

}  // namespace vskd::io
