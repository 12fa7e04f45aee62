// SPDX-License-Identifier: Apache-2.0
//
// Minimal PNG codec (8-bit RGB, non-interlaced) over zlib, plus base64.
// Covers exactly what the annotation files and eval overlays need.

#pragma once

#include "unires/common.hpp"
#include "unires/encoders.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace unires {

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>((v >> 24) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>(v & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void put_chunk(std::string& out, const char type[4], const std::string& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  std::uint32_t crc = crc32(0, reinterpret_cast<const Bytef*>(body.data()),
                            static_cast<uInt>(body.size()));
  put_u32(out, crc);
}

}  // namespace detail

inline std::string png_encode(const ImageTensor& img) {
  int h = img.height, w = img.width;
  std::vector<unsigned char> raw(static_cast<size_t>(h) * (1 + 3 * w));
  size_t p = 0;
  for (int y = 0; y < h; ++y) {
    raw[p++] = 0;  // filter: none
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < 3; ++k) {
        double v = std::clamp(img.chan[k](y, x), 0.0, 1.0);
        raw[p++] = static_cast<unsigned char>(v * 255.0 + 0.5);
      }
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) !=
      Z_OK)
    throw invalid_state_error("png_encode: deflate failed");

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  detail::put_u32(ihdr, static_cast<std::uint32_t>(w));
  detail::put_u32(ihdr, static_cast<std::uint32_t>(h));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit, RGB
  detail::put_chunk(out, "IHDR", ihdr);
  detail::put_chunk(out, "IDAT",
                    std::string(reinterpret_cast<char*>(comp.data()), comp_len));
  detail::put_chunk(out, "IEND", "");
  return out;
}

inline ImageTensor png_decode(const std::string& data) {
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() < 8 || std::memcmp(p, "\x89PNG\r\n\x1a\n", 8) != 0)
    throw parse_error("png_decode: bad signature");
  size_t off = 8;
  int w = 0, h = 0, bit_depth = 0, color_type = 0;
  std::string idat;
  while (off + 8 <= data.size()) {
    std::uint32_t len = detail::get_u32(p + off);
    std::string type(data.substr(off + 4, 4));
    const unsigned char* body = p + off + 8;
    if (type == "IHDR") {
      w = static_cast<int>(detail::get_u32(body));
      h = static_cast<int>(detail::get_u32(body + 4));
      bit_depth = body[8];
      color_type = body[9];
      if (body[12] != 0) throw parse_error("png_decode: interlacing unsupported");
    } else if (type == "IDAT") {
      idat.append(reinterpret_cast<const char*>(body), len);
    } else if (type == "IEND") {
      break;
    }
    off += 12 + len;
  }
  if (bit_depth != 8 || color_type != 2)
    throw parse_error("png_decode: only 8-bit RGB supported");

  size_t row_bytes = 1 + 3 * static_cast<size_t>(w);
  std::vector<unsigned char> raw(row_bytes * h);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, reinterpret_cast<const Bytef*>(idat.data()),
                 static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw parse_error("png_decode: inflate failed");

  // unfilter (per-pixel stride is 3 bytes)
  std::vector<unsigned char> img(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    int filter = raw[y * row_bytes];
    const unsigned char* src = raw.data() + y * row_bytes + 1;
    unsigned char* dst = img.data() + static_cast<size_t>(y) * w * 3;
    const unsigned char* up = y > 0 ? img.data() + static_cast<size_t>(y - 1) * w * 3
                                    : nullptr;
    for (int i = 0; i < w * 3; ++i) {
      int a = i >= 3 ? dst[i - 3] : 0;
      int b = up ? up[i] : 0;
      int c = (up && i >= 3) ? up[i - 3] : 0;
      int x = src[i];
      switch (filter) {
        case 0: dst[i] = static_cast<unsigned char>(x); break;
        case 1: dst[i] = static_cast<unsigned char>(x + a); break;
        case 2: dst[i] = static_cast<unsigned char>(x + b); break;
        case 3: dst[i] = static_cast<unsigned char>(x + (a + b) / 2); break;
        case 4: {
          int pp = a + b - c;
          int pa = std::abs(pp - a), pb = std::abs(pp - b), pc = std::abs(pp - c);
          int pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          dst[i] = static_cast<unsigned char>(x + pred);
          break;
        }
        default: throw parse_error("png_decode: unknown filter");
      }
    }
  }
  ImageTensor out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < 3; ++k)
        out.chan[k](y, x) = img[(static_cast<size_t>(y) * w + x) * 3 + k] / 255.0;
  return out;
}

inline void png_write_file(const std::string& path, const ImageTensor& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw invalid_state_error("png_write_file: cannot open " + path);
  std::string data = png_encode(img);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
}

inline ImageTensor png_read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw parse_error("png_read_file: cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return png_decode(data);
}

inline std::string base64_encode(const std::string& in) {
  static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 3 <= in.size()) {
    std::uint32_t v = (static_cast<unsigned char>(in[i]) << 16) |
                      (static_cast<unsigned char>(in[i + 1]) << 8) |
                      static_cast<unsigned char>(in[i + 2]);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back(tbl[v & 63]);
    i += 3;
  }
  size_t rem = in.size() - i;
  if (rem == 1) {
    std::uint32_t v = static_cast<unsigned char>(in[i]) << 16;
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out += "==";
  } else if (rem == 2) {
    std::uint32_t v = (static_cast<unsigned char>(in[i]) << 16) |
                      (static_cast<unsigned char>(in[i + 1]) << 8);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

inline std::string base64_decode(const std::string& in) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  int buf = 0, bits = 0;
  for (char c : in) {
    if (c == '=') break;
    int v = val(c);
    if (v < 0) continue;
    buf = (buf << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<char>((buf >> bits) & 0xff));
    }
  }
  return out;
}

}  // namespace unires
