#pragma once
// Hand-rolled generators for property tests.

#include <cstdint>
#include <filesystem>
#include <string>
#include <random>
#include <vector>

#include "rbir/emd.hpp"
#include "rbir/image.hpp"
#include "rbir/signature.hpp"

namespace testgen {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : e_(seed) {}
  double uniform() { return static_cast<double>(e_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(e_() % static_cast<std::uint64_t>(hi - lo + 1)); }
  bool coin(double p = 0.5) { return uniform() < p; }
  std::mt19937_64& engine() { return e_; }

 private:
  std::mt19937_64 e_;
};

inline rbir::Rgb color(Rng& r) { return {r.uniform(), r.uniform(), r.uniform()}; }

/// Ground distance between random points of the unit RGB cube: symmetric, zero diagonal, metric.
inline rbir::GroundDistance metric_distance(Rng& r, std::size_t n) {
  std::vector<rbir::Rgb> pts(n);
  for (auto& p : pts) p = color(r);
  rbir::Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d(i, j) = std::sqrt(rbir::squared_distance(pts[i], pts[j]));
  return rbir::GroundDistance(d);
}

/// Symmetric non-negative costs with zero diagonal; not necessarily metric.
inline rbir::Matrix cost_matrix(Rng& r, std::size_t n, bool integer = false) {
  rbir::Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d(i, j) = d(j, i) = integer ? r.integer(1, 20) : r.uniform(0.0, 2.0);
  return d;
}

inline std::vector<double> integer_weights(Rng& r, std::size_t n, int max, double p_zero = 0.2) {
  std::vector<double> w(n);
  for (auto& v : w) v = r.coin(p_zero) ? 0.0 : r.integer(1, max);
  return w;
}

inline std::vector<double> real_weights(Rng& r, std::size_t n, double p_zero = 0.2) {
  std::vector<double> w(n);
  for (auto& v : w) v = r.coin(p_zero) ? 0.0 : r.uniform(0.0, 100.0);
  return w;
}

/// Rescales w to total `mass`, keeping zeros. w must have a positive entry.
inline std::vector<double> with_total(std::vector<double> w, double mass) {
  double s = 0.0;
  for (double v : w) s += v;
  for (auto& v : w) v *= mass / s;
  return w;
}

inline rbir::BinarySignature signature(Rng& r, int blocks, int bits, double density = 0.1) {
  rbir::BinarySignature s(blocks, bits);
  for (int k = 0; k < blocks; ++k)
    for (int i = 1; i <= bits; ++i)
      if (r.coin(density)) s.set(k, i);
  return s;
}

/// Signature drawn around a cluster center: each center bit kept with probability `keep`,
/// plus sparse noise bits.
inline rbir::BinarySignature near(Rng& r, const rbir::BinarySignature& center, double keep = 0.8,
                                  double noise = 0.01) {
  rbir::BinarySignature s(center.blocks(), center.bits());
  for (int k = 0; k < center.blocks(); ++k)
    for (int i = 1; i <= center.bits(); ++i)
      if ((center.test(k, i) && r.coin(keep)) || r.coin(noise)) s.set(k, i);
  return s;
}

inline rbir::Image random_image(Rng& r, int w, int h) {
  std::vector<rbir::Rgb> px(static_cast<std::size_t>(w) * h);
  for (auto& p : px) p = color(r);
  return rbir::Image(w, h, std::move(px));
}

/// Checkerboard of `cell`-pixel squares alternating a and b, starting with a at (0,0).
inline rbir::Image checkerboard(int size, int cell, rbir::Rgb a = {0, 0, 0}, rbir::Rgb b = {1, 1, 1}) {
  rbir::Image img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) img.set(x, y, ((x / cell + y / cell) % 2 == 0) ? a : b);
  return img;
}

inline rbir::Image disk(int size, double cx, double cy, double radius, rbir::Rgb fg = {1, 1, 1},
                        rbir::Rgb bg = {0, 0, 0}) {
  rbir::Image img(size, size, bg);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius) img.set(x, y, fg);
  return img;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    do {
      path_ = base / ("rbir-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    } while (std::filesystem::exists(path_));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testgen
