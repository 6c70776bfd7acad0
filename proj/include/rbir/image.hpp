#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "rbir/error.hpp"

namespace rbir {

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline bool in_gamut(const Rgb& p) {
  auto ok = [](double v) { return v >= 0.0 && v <= 1.0; };
  return ok(p.r) && ok(p.g) && ok(p.b);
}

/// Row-major real-valued 2-D field. Used for luminance, responses and kernels.
class Field {
 public:
  Field() = default;
  Field(int width, int height, double fill = 0.0)
      : width_(width), height_(height), values_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 0 || height < 0) fail(Errc::invalid_parameter, "negative field dimensions");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& at(int x, int y) { return values_[index(x, y)]; }
  double at(int x, int y) const { return values_[index(x, y)]; }

  /// Replicate-border access.
  double clamped(int x, int y) const {
    return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
  }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const Field&, const Field&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

/// Decoded raster, channels in [0,1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {})
      : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height, fill) {
    if (width <= 0 || height <= 0) fail(Errc::invalid_parameter, "image dimensions must be positive");
    if (!in_gamut(fill)) fail(Errc::invalid_input, "pixel channel outside [0,1]");
  }
  Image(int width, int height, std::vector<Rgb> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width <= 0 || height <= 0) fail(Errc::invalid_parameter, "image dimensions must be positive");
    if (pixels_.size() != static_cast<std::size_t>(width) * height)
      fail(Errc::invalid_input, "pixel count does not match dimensions");
    for (const auto& p : pixels_)
      if (!in_gamut(p)) fail(Errc::invalid_input, "pixel channel outside [0,1]");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  const Rgb& at(int x, int y) const { return pixels_[index(x, y)]; }
  void set(int x, int y, const Rgb& p) {
    if (!in_gamut(p)) fail(Errc::invalid_input, "pixel channel outside [0,1]");
    pixels_[index(x, y)] = p;
  }

  const std::vector<Rgb>& pixels() const noexcept { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Rgb> pixels_;
};

struct YCbCrImage {
  Field y;
  Field cb;
  Field cr;

  int width() const noexcept { return y.width(); }
  int height() const noexcept { return y.height(); }
};

namespace detail {

inline void skip_pnm_space(const std::vector<std::uint8_t>& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    const auto c = buf[pos];
    if (c == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      ++pos;
    } else {
      break;
    }
  }
}

inline long read_pnm_int(const std::vector<std::uint8_t>& buf, std::size_t& pos, const std::string& what) {
  skip_pnm_space(buf, pos);
  if (pos >= buf.size() || buf[pos] < '0' || buf[pos] > '9')
    fail(Errc::malformed_file, "bad PPM header field: " + what);
  long v = 0;
  while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
    v = v * 10 + (buf[pos] - '0');
    if (v > (1L << 24)) fail(Errc::malformed_file, "PPM header value too large: " + what);
    ++pos;
  }
  return v;
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

/// Decodes a binary PPM (P6) held in memory.
inline Image decode_ppm(const std::vector<std::uint8_t>& buf) {
  if (buf.size() < 2 || buf[0] != 'P') fail(Errc::unsupported_format, "not a PNM file");
  if (buf[1] != '6') fail(Errc::unsupported_format, std::string("PNM subtype P") + char(buf[1]) + " not supported");
  std::size_t pos = 2;
  const long w = detail::read_pnm_int(buf, pos, "width");
  const long h = detail::read_pnm_int(buf, pos, "height");
  const long maxval = detail::read_pnm_int(buf, pos, "maxval");
  if (w <= 0 || h <= 0) fail(Errc::malformed_file, "PPM dimensions must be positive");
  if (maxval <= 0 || maxval > 255) fail(Errc::unsupported_format, "only 8-bit PPM (maxval <= 255) is supported");
  if (pos >= buf.size()) fail(Errc::malformed_file, "PPM header not terminated");
  ++pos;  // single whitespace byte before the raster

  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (buf.size() - pos < need)
    fail(Errc::malformed_file, "PPM payload truncated: expected " + std::to_string(need) + " bytes, found " +
                                   std::to_string(buf.size() - pos));

  std::vector<Rgb> px(static_cast<std::size_t>(w) * h);
  const double scale = static_cast<double>(maxval);
  for (std::size_t i = 0; i < px.size(); ++i) {
    const std::uint8_t* p = buf.data() + pos + 3 * i;
    if (p[0] > maxval || p[1] > maxval || p[2] > maxval) fail(Errc::malformed_file, "sample exceeds maxval");
    px[i] = {p[0] / scale, p[1] / scale, p[2] / scale};
  }
  return Image(static_cast<int>(w), static_cast<int>(h), std::move(px));
}

inline Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(Errc::io, "read failed for " + path.string());
  static constexpr std::array<std::uint8_t, 4> png_magic{0x89, 'P', 'N', 'G'};
  if (buf.size() >= 4 && std::equal(png_magic.begin(), png_magic.end(), buf.begin()))
    fail(Errc::unsupported_format, "PNG decoding is not built in: " + path.string());
  try {
    return decode_ppm(buf);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.pixels().size() * 3);
  for (const auto& p : img.pixels()) {
    out.push_back(detail::to_byte(p.r));
    out.push_back(detail::to_byte(p.g));
    out.push_back(detail::to_byte(p.b));
  }
  return out;
}

inline void save_ppm(const Image& img, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io, "write failed for " + path.string());
}

/// Bilinear resampling to a k x k square, pixel-center aligned, aspect ratio not kept.
inline Image resize(const Image& img, int k) {
  if (k < 8) fail(Errc::invalid_parameter, "resize side must be >= 8, got " + std::to_string(k));
  if (img.width() == k && img.height() == k) return img;

  const double sx = static_cast<double>(img.width()) / k;
  const double sy = static_cast<double>(img.height()) / k;
  std::vector<Rgb> out(static_cast<std::size_t>(k) * k);
  for (int y = 0; y < k; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < k; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double tx = fx - x0;
      auto lerp2 = [&](double Rgb::*ch) {
        const double top = img.at(x0, y0).*ch * (1 - tx) + img.at(x1, y0).*ch * tx;
        const double bot = img.at(x0, y1).*ch * (1 - tx) + img.at(x1, y1).*ch * tx;
        return std::clamp(top * (1 - ty) + bot * ty, 0.0, 1.0);
      };
      out[static_cast<std::size_t>(y) * k + x] = {lerp2(&Rgb::r), lerp2(&Rgb::g), lerp2(&Rgb::b)};
    }
  }
  return Image(k, k, std::move(out));
}

/// Studio-swing YCbCr for RGB in [0,1]; values stay real.
inline std::array<double, 3> rgb_to_ycbcr(const Rgb& p) {
  return {
      16.0 + 65.481 * p.r + 128.553 * p.g + 24.996 * p.b,
      128.0 - 37.797 * p.r - 74.203 * p.g + 112.0 * p.b,
      128.0 + 112.0 * p.r - 93.786 * p.g - 18.214 * p.b,
  };
}

inline YCbCrImage rgb_to_ycbcr(const Image& img) {
  YCbCrImage out{Field(img.width(), img.height()), Field(img.width(), img.height()),
                 Field(img.width(), img.height())};
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const auto ycc = rgb_to_ycbcr(img.at(x, y));
      out.y.at(x, y) = ycc[0];
      out.cb.at(x, y) = ycc[1];
      out.cr.at(x, y) = ycc[2];
    }
  }
  return out;
}

}  // namespace rbir
