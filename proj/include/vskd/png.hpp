#pragma once

// Minimal PNG codec for 8-bit RGB rasters over zlib. The writer emits filter
// type 0 scanlines; the reader handles all five standard filters and verifies
// chunk CRCs, so it can read more than it writes.

#include <zlib.h>

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include "vskd/checkpoint.hpp"  // detail::read_file / write_file
#include "vskd/common.hpp"

namespace vskd::io {

struct PngImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

namespace detail {

inline void put_u32_be(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32_be(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void put_chunk(std::string& out, const char type[5], const std::string& data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  std::string body = std::string(type, 4) + data;
  out += body;
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                         static_cast<uInt>(body.size()));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

inline int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

}  // namespace detail

inline std::string encode_png_rgb(std::size_t width, std::size_t height,
                                  const std::vector<std::uint8_t>& rgb) {
  if (width == 0 || height == 0 || rgb.size() != width * height * 3)
    throw InvalidInput("png: raster size does not match dimensions");
  std::string out("\x89PNG\r\n\x1a\n", 8);

  std::string ihdr;
  detail::put_u32_be(ihdr, static_cast<std::uint32_t>(width));
  detail::put_u32_be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter method
  ihdr.push_back(0);   // no interlace
  detail::put_chunk(out, "IHDR", ihdr);

  const std::size_t stride = width * 3;
  std::vector<std::uint8_t> raw((stride + 1) * height);
  for (std::size_t y = 0; y < height; ++y) {
    raw[y * (stride + 1)] = 0;  // filter type 0
    std::copy(rgb.begin() + y * stride, rgb.begin() + (y + 1) * stride,
              raw.begin() + y * (stride + 1) + 1);
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(bound);
  if (compress2(packed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                Z_BEST_SPEED) != Z_OK)
    throw ArtifactError("png: zlib compression failed");
  detail::put_chunk(out, "IDAT",
                    std::string(reinterpret_cast<char*>(packed.data()), bound));
  detail::put_chunk(out, "IEND", "");
  return out;
}

inline PngImage decode_png_rgb(const std::string& bytes, const std::string& what) {
  if (bytes.size() < 8 || bytes.compare(0, 8, "\x89PNG\r\n\x1a\n", 8) != 0)
    throw ArtifactError(what + ": not a PNG file");

  const auto* data = reinterpret_cast<const std::uint8_t*>(bytes.data());
  std::size_t pos = 8;
  PngImage img;
  std::string idat;
  bool saw_ihdr = false, saw_iend = false;

  while (!saw_iend) {
    if (pos + 8 > bytes.size()) throw ArtifactError(what + ": truncated chunk header");
    const std::uint32_t len = detail::get_u32_be(data + pos);
    const std::string type = bytes.substr(pos + 4, 4);
    if (pos + 12 + len > bytes.size())
      throw ArtifactError(what + ": truncated chunk body");
    const auto crc_stored = detail::get_u32_be(data + pos + 8 + len);
    const auto crc_actual = crc32(0L, data + pos + 4, static_cast<uInt>(4 + len));
    if (crc_stored != static_cast<std::uint32_t>(crc_actual))
      throw ArtifactError(what + ": chunk CRC mismatch");
    const std::uint8_t* body = data + pos + 8;

    if (type == "IHDR") {
      if (len != 13) throw ArtifactError(what + ": malformed IHDR");
      img.width = detail::get_u32_be(body);
      img.height = detail::get_u32_be(body + 4);
      if (body[8] != 8 || body[9] != 2 || body[12] != 0)
        throw ArtifactError(what + ": only 8-bit non-interlaced RGB is supported");
      if (img.width == 0 || img.height == 0)
        throw ArtifactError(what + ": zero-sized image");
      saw_ihdr = true;
    } else if (type == "IDAT") {
      idat.append(reinterpret_cast<const char*>(body), len);
    } else if (type == "IEND") {
      saw_iend = true;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr || idat.empty())
    throw ArtifactError(what + ": missing IHDR or IDAT");

  const std::size_t stride = img.width * 3;
  std::vector<std::uint8_t> raw((stride + 1) * img.height);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len,
                 reinterpret_cast<const Bytef*>(idat.data()),
                 static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw ArtifactError(what + ": corrupt image data");

  img.rgb.assign(img.width * img.height * 3, 0);
  std::vector<std::uint8_t> prior(stride, 0);
  for (std::size_t y = 0; y < img.height; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* line = raw.data() + y * (stride + 1) + 1;
    std::uint8_t* out = img.rgb.data() + y * stride;
    for (std::size_t x = 0; x < stride; ++x) {
      const int left = x >= 3 ? out[x - 3] : 0;
      const int up = prior[x];
      const int upleft = x >= 3 ? prior[x - 3] : 0;
      int v = line[x];
      switch (filter) {
        case 0: break;
        case 1: v += left; break;
        case 2: v += up; break;
        case 3: v += (left + up) / 2; break;
        case 4: v += detail::paeth(left, up, upleft); break;
        default: throw ArtifactError(what + ": unknown scanline filter");
      }
      out[x] = static_cast<std::uint8_t>(v & 0xFF);
    }
    std::copy(out, out + stride, prior.begin());
  }
  return img;
}

inline void write_png_rgb(const std::string& path, std::size_t width,
                          std::size_t height, const std::vector<std::uint8_t>& rgb) {
  detail::write_file(path, encode_png_rgb(width, height, rgb));
}

inline PngImage read_png_rgb(const std::string& path) {
  return decode_png_rgb(detail::read_file(path), path);
}

}  // namespace vskd::io
