#pragma once

#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "restora/tensor.hpp"

namespace restora {

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

inline void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_f32(std::vector<unsigned char>& buf, float v) {
  put_u32(buf, std::bit_cast<std::uint32_t>(v));
}

// Little-endian cursor over a byte buffer; throws on overrun.
class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  void expect_magic(std::string_view magic) {
    need(magic.size());
    for (char c : magic) {
      if (bytes_[pos_++] != static_cast<unsigned char>(c)) {
        throw FormatError(what_ + ": bad magic, expected '" + std::string(magic) + "'");
      }
    }
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) throw FormatError(what_ + ": truncated payload");
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Largest element count accepted from a file header (2^31 values).
inline constexpr std::uint64_t kMaxRawElements = std::uint64_t{1} << 31;

/// Writes "RFT1", u32 rank (always 3), u32 dims, then little-endian f32 values.
inline void save_raw(const ImageTensor& t, const std::filesystem::path& path) {
  std::vector<unsigned char> buf;
  buf.reserve(4 + 4 * 4 + 4 * t.size());
  for (char c : std::string_view("RFT1")) buf.push_back(static_cast<unsigned char>(c));
  detail::put_u32(buf, 3);
  detail::put_u32(buf, static_cast<std::uint32_t>(t.shape().channels));
  detail::put_u32(buf, static_cast<std::uint32_t>(t.shape().height));
  detail::put_u32(buf, static_cast<std::uint32_t>(t.shape().width));
  for (float v : t.data()) detail::put_f32(buf, v);
  detail::write_file(path, buf);
}

/// Reads an RFT1 file. Ranks 1 and 2 are accepted and padded with leading
/// unit dimensions; ranks above 3 are rejected.
inline ImageTensor load_raw(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes, "RFT1 '" + path.string() + "'");
  r.expect_magic("RFT1");
  const std::uint32_t rank = r.u32();
  if (rank == 0 || rank > 3) {
    throw FormatError("RFT1: unsupported rank " + std::to_string(rank));
  }
  std::array<std::uint64_t, 3> dims{1, 1, 1};
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint64_t d = r.u32();
    if (d == 0) throw FormatError("RFT1: zero dimension");
    count *= d;
    if (count > kMaxRawElements) throw FormatError("RFT1: dimension overflow");
    dims[3 - rank + i] = d;
  }
  if (r.remaining() != count * 4) {
    throw FormatError("RFT1: truncated payload (header declares " + std::to_string(count) +
                      " values, file holds " + std::to_string(r.remaining()) + " bytes)");
  }
  std::vector<float> data(count);
  for (auto& v : data) v = r.f32();
  return ImageTensor(Shape{dims[0], dims[1], dims[2]}, std::move(data));
}

namespace detail {

// Parses the next whitespace/comment-delimited header token.
inline std::uint64_t pnm_header_int(const std::vector<unsigned char>& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError("PNM: malformed header");
  std::uint64_t v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + static_cast<std::uint64_t>(b[pos] - '0');
    if (v > std::numeric_limits<std::uint32_t>::max()) throw FormatError("PNM: header value overflow");
    ++pos;
  }
  return v;
}

}  // namespace detail

inline float pnm_byte_to_model(unsigned char u) {
  return static_cast<float>(2.0 * static_cast<double>(u) / 255.0 - 1.0);
}

// Clamp to [-1,1], then invert the byte map with round-half-up.
inline unsigned char model_to_pnm_byte(float v) {
  const double c = std::clamp(static_cast<double>(v), -1.0, 1.0);
  return static_cast<unsigned char>(std::floor((c + 1.0) * 127.5 + 0.5));
}

/// Binary P5 (1 channel) or P6 (3 channels), maxval 255.
inline ImageTensor load_pnm(const std::filesystem::path& path) {
  const auto b = detail::read_file(path);
  if (b.size() < 2 || b[0] != 'P') throw FormatError("PNM: malformed header in '" + path.string() + "'");
  std::size_t channels = 0;
  switch (b[1]) {
    case '5': channels = 1; break;
    case '6': channels = 3; break;
    case '2':
    case '3': throw FormatError("PNM: ASCII variants (P2/P3) are not supported");
    default: throw FormatError("PNM: unsupported magic 'P" + std::string(1, static_cast<char>(b[1])) + "'");
  }
  std::size_t pos = 2;
  const auto width = detail::pnm_header_int(b, pos);
  const auto height = detail::pnm_header_int(b, pos);
  const auto maxval = detail::pnm_header_int(b, pos);
  if (width == 0 || height == 0) throw FormatError("PNM: zero dimension");
  if (maxval != 255) throw FormatError("PNM: maxval " + std::to_string(maxval) + " unsupported (need 255)");
  if (pos >= b.size() || !std::isspace(b[pos])) throw FormatError("PNM: malformed header");
  ++pos;
  const std::uint64_t count = channels * width * height;
  if (count > kMaxRawElements) throw FormatError("PNM: dimension overflow");
  if (b.size() - pos < count) throw FormatError("PNM: truncated payload");

  ImageTensor out(Shape{channels, height, width});
  // Interleaved RGB on disk, planar in memory.
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        out.at(c, y, x) = pnm_byte_to_model(b[pos++]);
      }
    }
  }
  return out;
}

inline void save_pnm(const ImageTensor& t, const std::filesystem::path& path) {
  const auto& s = t.shape();
  if (s.channels != 1 && s.channels != 3) {
    throw ShapeError("PNM: need 1 or 3 channels, got " + std::to_string(s.channels));
  }
  const std::string header = std::string(s.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(s.width) + " " + std::to_string(s.height) + "\n255\n";
  std::vector<unsigned char> buf(header.begin(), header.end());
  buf.reserve(buf.size() + t.size());
  for (std::size_t y = 0; y < s.height; ++y) {
    for (std::size_t x = 0; x < s.width; ++x) {
      for (std::size_t c = 0; c < s.channels; ++c) buf.push_back(model_to_pnm_byte(t.at(c, y, x)));
    }
  }
  detail::write_file(path, buf);
}

}  // namespace restora
