#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rbir/error.hpp"
#include "rbir/image.hpp"
#include "rbir/interest.hpp"

namespace rbir {

/// Ordered color look-up table. Histogram bins and signature blocks follow this order.
class ColorPalette {
 public:
  ColorPalette() = default;
  explicit ColorPalette(std::vector<Rgb> colors) : colors_(std::move(colors)) {
    if (colors_.size() < 2) fail(Errc::invalid_input, "palette needs at least two colors");
    for (std::size_t i = 0; i < colors_.size(); ++i) {
      if (!in_gamut(colors_[i])) fail(Errc::invalid_input, "palette color " + std::to_string(i) + " out of gamut");
      for (std::size_t j = 0; j < i; ++j)
        if (colors_[i] == colors_[j]) fail(Errc::invalid_input, "duplicate palette color " + std::to_string(i));
    }
  }

  std::size_t size() const noexcept { return colors_.size(); }
  const Rgb& operator[](std::size_t i) const { return colors_[i]; }
  const std::vector<Rgb>& colors() const noexcept { return colors_; }

  friend bool operator==(const ColorPalette&, const ColorPalette&) = default;

 private:
  std::vector<Rgb> colors_;
};

namespace detail {

inline Rgb hsv_to_rgb(double hue_deg, double s, double v) {
  const double c = v * s;
  const double hp = hue_deg / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

}  // namespace detail

/// 32 colors: 8 hue sectors x 3 tones (vivid, dark, pastel) followed by 8 grays.
/// data/palette32.txt holds the same table.
inline ColorPalette default_palette() {
  static const double hues[] = {0, 30, 60, 120, 180, 240, 270, 300};
  struct Tone { double s, v; };
  static const Tone tones[] = {{1.0, 1.0}, {1.0, 0.5}, {0.5, 1.0}};
  std::vector<Rgb> c;
  for (const auto& t : tones)
    for (double h : hues) c.push_back(detail::hsv_to_rgb(h, t.s, t.v));
  for (int g = 0; g < 8; ++g) {
    const double v = g / 7.0;
    c.push_back({v, v, v});
  }
  return ColorPalette(std::move(c));
}

/// Text form: one "R G B" line per color, '#' starts a comment.
inline ColorPalette parse_palette(std::istream& in, const std::string& origin = "<palette>") {
  std::vector<Rgb> colors;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    Rgb c;
    if (!(ls >> c.r)) continue;
    std::string rest;
    if (!(ls >> c.g >> c.b) || (ls >> rest))
      fail(Errc::malformed_file, origin + ":" + std::to_string(lineno) + ": expected 'R G B'");
    colors.push_back(c);
  }
  return ColorPalette(std::move(colors));
}

inline ColorPalette load_palette(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open palette " + path.string());
  return parse_palette(in, path.string());
}

inline std::string format_palette(const ColorPalette& p) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& c : p.colors()) out << c.r << ' ' << c.g << ' ' << c.b << '\n';
  return out.str();
}

/// FNV-1a over the big-endian IEEE-754 bits of every channel.
inline std::uint64_t palette_digest(const ColorPalette& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int s = 56; s >= 0; s -= 8) {
      h ^= (bits >> s) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& c : p.colors()) {
    mix(c.r);
    mix(c.g);
    mix(c.b);
  }
  return h;
}

inline double squared_distance(const Rgb& a, const Rgb& b) {
  const double dr = a.r - b.r;
  const double dg = a.g - b.g;
  const double db = a.b - b.b;
  return dr * dr + dg * dg + db * db;
}

/// Zero-based index of the nearest palette color; ties go to the lowest index.
inline std::size_t nearest_palette_color(const Rgb& pixel, const ColorPalette& palette) {
  std::size_t best = 0;
  double best_d = squared_distance(pixel, palette[0]);
  for (std::size_t i = 1; i < palette.size(); ++i) {
    const double d = squared_distance(pixel, palette[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

struct RegionHistogram {
  std::vector<std::uint64_t> counts;
  std::vector<double> normalized;
};

inline RegionHistogram region_histogram(const Image& img, const InterestRegion& region, const ColorPalette& palette) {
  if (!(region.cx >= 0 && region.cy >= 0 && region.cx < img.width() && region.cy < img.height()))
    fail(Errc::invalid_input, "region center outside image");
  if (!(region.radius >= 0)) fail(Errc::invalid_input, "negative region radius");

  RegionHistogram h{std::vector<std::uint64_t>(palette.size(), 0), std::vector<double>(palette.size(), 0.0)};
  const int x0 = std::max(0, static_cast<int>(std::floor(region.cx - region.radius)));
  const int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(region.cx + region.radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(region.cy - region.radius)));
  const int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(region.cy + region.radius)));
  const double r2 = region.radius * region.radius;
  std::uint64_t total = 0;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - region.cx;
      const double dy = y - region.cy;
      if (dx * dx + dy * dy > r2) continue;
      ++h.counts[nearest_palette_color(img.at(x, y), palette)];
      ++total;
    }
  }
  if (total == 0) fail(Errc::empty_region, "region covers no pixels");
  for (std::size_t k = 0; k < h.counts.size(); ++k)
    h.normalized[k] = static_cast<double>(h.counts[k]) / static_cast<double>(total);
  return h;
}

/// n blocks of m bits, packed MSB-first. Block k (zero-based) level i (1..m) lives at
/// global bit k*m + (i-1). Trailing pad bits of the last byte are always zero.
class BinarySignature {
 public:
  static constexpr int max_bits = 64;

  BinarySignature() = default;
  BinarySignature(int blocks, int bits) : blocks_(blocks), bits_(bits) {
    if (blocks < 1 || blocks > 0xffff) fail(Errc::invalid_parameter, "signature block count out of range");
    if (bits < 2 || bits > max_bits) fail(Errc::invalid_parameter, "bits per block must lie in [2,64]");
    bytes_.assign(byte_size(blocks, bits), 0);
  }

  static std::size_t byte_size(int blocks, int bits) {
    return (static_cast<std::size_t>(blocks) * static_cast<std::size_t>(bits) + 7) / 8;
  }

  static BinarySignature from_bytes(int blocks, int bits, std::span<const std::uint8_t> bytes) {
    BinarySignature s(blocks, bits);
    if (bytes.size() != s.bytes_.size()) fail(Errc::shape_mismatch, "signature byte length mismatch");
    std::copy(bytes.begin(), bytes.end(), s.bytes_.begin());
    const std::size_t total = s.total_bits();
    if (total % 8 != 0) {
      const std::uint8_t pad = static_cast<std::uint8_t>(0xff >> (total % 8));
      if (s.bytes_.back() & pad) fail(Errc::invalid_input, "signature pad bits set");
    }
    return s;
  }

  int blocks() const noexcept { return blocks_; }
  int bits() const noexcept { return bits_; }
  std::size_t total_bits() const noexcept { return static_cast<std::size_t>(blocks_) * bits_; }
  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }

  bool same_shape(const BinarySignature& o) const noexcept { return blocks_ == o.blocks_ && bits_ == o.bits_; }

  bool test(int block, int level) const {
    const std::size_t g = global(block, level);
    return (bytes_[g / 8] >> (7 - g % 8)) & 1u;
  }
  void set(int block, int level) {
    const std::size_t g = global(block, level);
    bytes_[g / 8] |= static_cast<std::uint8_t>(0x80u >> (g % 8));
  }

  /// Bit (i-1) of the result is level i of the block.
  std::uint64_t block_mask(int block) const {
    std::uint64_t mask = 0;
    for (int i = 1; i <= bits_; ++i)
      if (test(block, i)) mask |= std::uint64_t{1} << (i - 1);
    return mask;
  }
  void or_block_mask(int block, std::uint64_t mask) {
    for (int i = 1; i <= bits_; ++i)
      if (mask >> (i - 1) & 1u) set(block, i);
  }

  std::size_t popcount() const noexcept {
    std::size_t c = 0;
    for (auto b : bytes_) c += static_cast<std::size_t>(std::popcount(b));
    return c;
  }

  BinarySignature& operator|=(const BinarySignature& o) {
    if (!same_shape(o)) fail(Errc::shape_mismatch, "OR of differently shaped signatures");
    for (std::size_t i = 0; i < bytes_.size(); ++i) bytes_[i] |= o.bytes_[i];
    return *this;
  }
  friend BinarySignature operator|(BinarySignature a, const BinarySignature& b) { return a |= b; }

  friend bool operator==(const BinarySignature&, const BinarySignature&) = default;

 private:
  std::size_t global(int block, int level) const {
    if (block < 0 || block >= blocks_ || level < 1 || level > bits_)
      fail(Errc::invalid_input, "signature bit index out of range");
    return static_cast<std::size_t>(block) * bits_ + static_cast<std::size_t>(level - 1);
  }

  int blocks_ = 0;
  int bits_ = 0;
  std::vector<std::uint8_t> bytes_;
};

/// Round-to-nearest level j = floor(h*m + 0.5) in [0,m]; 0 means the block stays empty.
inline int quantize_level(double h, int m) {
  if (m < 2 || m > BinarySignature::max_bits) fail(Errc::invalid_parameter, "bits per block must lie in [2,64]");
  if (!(h >= 0.0 && h <= 1.0)) fail(Errc::invalid_input, "histogram fraction outside [0,1]");
  const int j = static_cast<int>(std::floor(h * m + 0.5));
  return std::clamp(j, 0, m);
}

/// One-hot block mask (bit j-1 for level j), or zero.
inline std::uint64_t quantize_to_block(double h, int m) {
  const int j = quantize_level(h, m);
  return j == 0 ? 0 : std::uint64_t{1} << (j - 1);
}

inline BinarySignature region_signature(std::span<const double> h, int m) {
  double sum = 0.0;
  for (double v : h) sum += v;
  if (std::abs(sum - 1.0) > 1e-9) fail(Errc::invalid_input, "histogram is not normalized");
  BinarySignature sig(static_cast<int>(h.size()), m);
  for (std::size_t k = 0; k < h.size(); ++k) {
    const int j = quantize_level(h[k], m);
    if (j > 0) sig.set(static_cast<int>(k), j);
  }
  return sig;
}

inline BinarySignature image_signature(const Image& img, std::span<const InterestRegion> regions,
                                       const ColorPalette& palette, int m) {
  if (regions.empty()) fail(Errc::invalid_input, "image signature needs at least one region");
  BinarySignature out(static_cast<int>(palette.size()), m);
  for (const auto& r : regions) out |= region_signature(region_histogram(img, r, palette).normalized, m);
  return out;
}

/// True iff every set bit of query is also set in data.
inline bool cover_test(const BinarySignature& query, const BinarySignature& data) {
  if (!query.same_shape(data)) fail(Errc::invalid_input, "cover test on differently shaped signatures");
  const auto q = query.bytes();
  const auto d = data.bytes();
  for (std::size_t i = 0; i < q.size(); ++i)
    if ((q[i] & d[i]) != q[i]) return false;
  return true;
}

}  // namespace rbir
