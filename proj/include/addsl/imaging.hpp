#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "addsl/error.hpp"
#include "addsl/geometry.hpp"

namespace addsl {

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
class Raster {
 public:
  Raster(int width, int height, int channels)
      : Raster(width, height, channels,
               std::vector<std::uint8_t>(checked_size(width, height, channels), 0)) {}

  Raster(int width, int height, int channels, std::vector<std::uint8_t> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (data_.size() != checked_size(width, height, channels)) {
      throw Error(ErrorCode::InvalidArgument, "raster data length does not match width*height*channels");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  std::uint8_t at(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  static std::size_t checked_size(int width, int height, int channels) {
    if (width < 1 || height < 1) throw Error(ErrorCode::InvalidArgument, "raster dimensions must be >= 1");
    if (channels != 1 && channels != 3) throw Error(ErrorCode::InvalidArgument, "raster channels must be 1 or 3");
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * static_cast<std::size_t>(channels);
  }

  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_;
  int height_;
  int channels_;
  std::vector<std::uint8_t> data_;
};

struct ImageInfo {
  int width = 0;
  int height = 0;
  int channels = 0;
};

namespace detail {

struct NetpbmHeader {
  ImageInfo info;
  std::size_t data_offset = 0;
};

inline bool is_pnm_space(std::uint8_t c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Reads one unsigned decimal header field, skipping whitespace and comments.
inline long read_header_field(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (is_pnm_space(bytes[pos])) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size()) throw Error(ErrorCode::TruncatedData, "header ends early");
  if (bytes[pos] < '0' || bytes[pos] > '9') throw Error(ErrorCode::BadHeader, "expected a decimal header field");
  long value = 0;
  while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
    value = value * 10 + (bytes[pos] - '0');
    if (value > 1'000'000'000L) throw Error(ErrorCode::BadHeader, "header field too large");
    ++pos;
  }
  return value;
}

inline NetpbmHeader parse_netpbm_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) throw Error(ErrorCode::TruncatedData, "missing magic number");
  if (bytes[0] != 'P') throw Error(ErrorCode::UnsupportedFormat, "not a netpbm image");
  NetpbmHeader header;
  switch (bytes[1]) {
    case '5': header.info.channels = 1; break;
    case '6': header.info.channels = 3; break;
    default: throw Error(ErrorCode::UnsupportedFormat, "only binary P5/P6 images are supported");
  }
  std::size_t pos = 2;
  if (pos < bytes.size() && !is_pnm_space(bytes[pos])) throw Error(ErrorCode::BadHeader, "magic not followed by whitespace");
  const long width = read_header_field(bytes, pos);
  const long height = read_header_field(bytes, pos);
  const long maxval = read_header_field(bytes, pos);
  if (width < 1 || height < 1) throw Error(ErrorCode::BadHeader, "image dimensions must be positive");
  if (maxval != 255) throw Error(ErrorCode::UnsupportedFormat, "only maxval 255 is supported");
  if (pos >= bytes.size()) throw Error(ErrorCode::TruncatedData, "no raster data");
  if (!is_pnm_space(bytes[pos])) throw Error(ErrorCode::BadHeader, "maxval not followed by whitespace");
  header.info.width = static_cast<int>(width);
  header.info.height = static_cast<int>(height);
  header.data_offset = pos + 1;
  return header;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

}  // namespace detail

/// Decodes a binary PGM (P5) or PPM (P6) image with maxval 255.
inline Raster read_image(std::span<const std::uint8_t> bytes) {
  const auto header = detail::parse_netpbm_header(bytes);
  const auto& info = header.info;
  const std::size_t need =
      static_cast<std::size_t>(info.width) * static_cast<std::size_t>(info.height) * static_cast<std::size_t>(info.channels);
  if (bytes.size() - header.data_offset < need) throw Error(ErrorCode::TruncatedData, "raster data shorter than header claims");
  const auto first = bytes.begin() + static_cast<std::ptrdiff_t>(header.data_offset);
  return Raster(info.width, info.height, info.channels,
                std::vector<std::uint8_t>(first, first + static_cast<std::ptrdiff_t>(need)));
}

/// Encodes with the normalized header "P5|P6\n<w> <h>\n255\n".
inline std::vector<std::uint8_t> write_image(const Raster& img) {
  const std::string header = std::string(img.channels() == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width()) + " " +
                             std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data().begin(), img.data().end());
  return out;
}

inline Raster read_image_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return read_image(bytes);
}

inline void write_image_file(const std::filesystem::path& path, const Raster& img) {
  detail::write_file_bytes(path, write_image(img));
}

/// Reads only the header of a netpbm file.
inline ImageInfo read_image_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> head(512);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  return detail::parse_netpbm_header(head).info;
}

/// BT.601 luma, round half up. Single-channel input is returned unchanged.
inline Raster to_grayscale(const Raster& img) {
  if (img.channels() == 1) return img;
  Raster out(img.width(), img.height(), 1);
  const auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const unsigned r = src[3 * i];
    const unsigned g = src[3 * i + 1];
    const unsigned b = src[3 * i + 2];
    const unsigned luma = (299 * r + 587 * g + 114 * b + 500) / 1000;
    dst[i] = static_cast<std::uint8_t>(std::min(luma, 255u));
  }
  return out;
}

enum class ResizeMode { Nearest, Bilinear };

inline Raster resize(const Raster& img, int out_w, int out_h, ResizeMode mode) {
  if (out_w < 1 || out_h < 1) throw Error(ErrorCode::InvalidArgument, "resize target must be at least 1x1");
  const int in_w = img.width();
  const int in_h = img.height();
  const int ch = img.channels();
  Raster out(out_w, out_h, ch);

  if (mode == ResizeMode::Nearest) {
    for (int y = 0; y < out_h; ++y) {
      // floor((y + 0.5) * H / out_h) in exact integer arithmetic
      const int sy = std::min(in_h - 1, static_cast<int>((2LL * y + 1) * in_h / (2LL * out_h)));
      for (int x = 0; x < out_w; ++x) {
        const int sx = std::min(in_w - 1, static_cast<int>((2LL * x + 1) * in_w / (2LL * out_w)));
        for (int c = 0; c < ch; ++c) out.at(x, y, c) = img.at(sx, sy, c);
      }
    }
    return out;
  }

  const double scale_x = static_cast<double>(in_w) / out_w;
  const double scale_y = static_cast<double>(in_h) / out_h;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * scale_y - 0.5, 0.0, static_cast<double>(in_h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * scale_x - 0.5, 0.0, static_cast<double>(in_w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - x0;
      for (int c = 0; c < ch; ++c) {
        const double top = img.at(x0, y0, c) + wx * (img.at(x1, y0, c) - img.at(x0, y0, c));
        const double bot = img.at(x0, y1, c) + wx * (img.at(x1, y1, c) - img.at(x0, y1, c));
        const double v = top + wy * (bot - top);
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

namespace detail {
inline int normalize_turns(int turns) {
  if (turns < 0 || turns > 3) throw Error(ErrorCode::InvalidArgument, "turns must be in 0..3");
  return turns;
}
}  // namespace detail

/// Rotates clockwise by `turns` quarter turns. Pure pixel permutation.
inline Raster rotate_quarter(const Raster& img, int turns) {
  turns = detail::normalize_turns(turns);
  const int w = img.width();
  const int h = img.height();
  const int ch = img.channels();
  if (turns == 0) return img;
  if (turns == 2) {
    Raster out(w, h, ch);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < ch; ++c) out.at(x, y, c) = img.at(w - 1 - x, h - 1 - y, c);
    return out;
  }
  Raster out(h, w, ch);
  for (int y = 0; y < w; ++y) {
    for (int x = 0; x < h; ++x) {
      for (int c = 0; c < ch; ++c) {
        out.at(x, y, c) = turns == 1 ? img.at(y, h - 1 - x, c) : img.at(w - 1 - y, x, c);
      }
    }
  }
  return out;
}

/// Box transform matching rotate_quarter.
inline Box rotate_box(const Box& b, int turns) {
  switch (detail::normalize_turns(turns)) {
    case 1: return Box(1.0 - b.cy(), b.cx(), b.h(), b.w());
    case 2: return Box(1.0 - b.cx(), 1.0 - b.cy(), b.w(), b.h());
    case 3: return Box(b.cy(), 1.0 - b.cx(), b.h(), b.w());
    default: return b;
  }
}

struct FrameRange {
  int start = 50;
  int step = 10;
  int count = 6;
};

/// Either an explicit index list or an arithmetic progression.
using FramePolicy = std::variant<std::vector<int>, FrameRange>;

/// Keeps frames 50, 60, ..., 100.
inline FramePolicy default_frame_policy() { return FrameRange{}; }

inline std::vector<int> select_frames(int total, const FramePolicy& policy) {
  if (total < 1) throw Error(ErrorCode::InvalidArgument, "total frame count must be >= 1");
  std::vector<int> picked;
  if (const auto* range = std::get_if<FrameRange>(&policy)) {
    if (range->step < 1 || range->count < 1 || range->start < 0) {
      throw Error(ErrorCode::InvalidArgument, "frame range needs start >= 0, step >= 1, count >= 1");
    }
    for (int k = 0; k < range->count; ++k) picked.push_back(range->start + k * range->step);
  } else {
    picked = std::get<std::vector<int>>(policy);
    std::sort(picked.begin(), picked.end());
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
  }
  for (int idx : picked) {
    if (idx < 0 || idx >= total) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "frame " + std::to_string(idx) + " requested but only " + std::to_string(total) + " frames exist");
    }
  }
  return picked;
}

}  // namespace addsl
