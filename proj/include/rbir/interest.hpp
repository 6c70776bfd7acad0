#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "rbir/error.hpp"
#include "rbir/image.hpp"

namespace rbir {

struct DetectorParams {
  double theta = 0.01;  ///< fraction of the per-scale maximum response
  double alpha = 0.06;
  std::vector<double> sigma_i_levels{1.5, 2.1, 3.0, 4.2, 5.9, 8.3, 11.6};
  double sigma_ratio = 0.7;  ///< differentiation / integration scale
  int max_regions = 16;
  double r_min = 4.0;
  double merge_distance = 2.0;  ///< points closer than this across scales collapse to the strongest

  void validate() const {
    if (!(theta > 0.0 && theta <= 1.0)) fail(Errc::invalid_parameter, "theta must lie in (0,1]");
    if (!(alpha > 0.0 && alpha < 0.25)) fail(Errc::invalid_parameter, "alpha must lie in (0,0.25)");
    if (sigma_i_levels.empty()) fail(Errc::invalid_parameter, "at least one integration scale required");
    for (std::size_t i = 0; i < sigma_i_levels.size(); ++i) {
      if (!(sigma_i_levels[i] > 0.0)) fail(Errc::invalid_parameter, "scales must be positive");
      if (i > 0 && !(sigma_i_levels[i] > sigma_i_levels[i - 1]))
        fail(Errc::invalid_parameter, "scales must be strictly increasing");
    }
    if (!(sigma_ratio > 0.0 && sigma_ratio <= 1.0)) fail(Errc::invalid_parameter, "sigma ratio must lie in (0,1]");
    if (max_regions < 1) fail(Errc::invalid_parameter, "max_regions must be >= 1");
    if (!(r_min >= 0.0)) fail(Errc::invalid_parameter, "r_min must be non-negative");
  }

  friend bool operator==(const DetectorParams&, const DetectorParams&) = default;
};

struct InterestRegion {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  double response = 0.0;

  friend bool operator==(const InterestRegion&, const InterestRegion&) = default;
};

struct InterestPoint {
  int x = 0;
  int y = 0;
  double response = 0.0;

  friend bool operator==(const InterestPoint&, const InterestPoint&) = default;
};

/// Symmetric 2x2 second-moment matrix; the off-diagonal is stored once.
struct Moment {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  double det() const noexcept { return xx * yy - xy * xy; }
  double trace() const noexcept { return xx + yy; }
};

struct MomentField {
  int width = 0;
  int height = 0;
  std::vector<Moment> values;

  const Moment& at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

inline int gaussian_radius(double sigma) { return static_cast<int>(std::ceil(3.0 * sigma)); }

/// Normalized sampled 1-D Gaussian with 2*ceil(3*sigma)+1 taps.
inline std::vector<double> gaussian_kernel_1d(double sigma) {
  if (!(sigma > 0.0)) fail(Errc::invalid_parameter, "gaussian sigma must be positive");
  const int r = gaussian_radius(sigma);
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + r];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// 2-D Gaussian kernel, entries proportional to exp(-(x^2+y^2)/(2 sigma^2)), summing to one.
inline Field gaussian_kernel(double sigma) {
  const auto k1 = gaussian_kernel_1d(sigma);
  const int side = static_cast<int>(k1.size());
  Field k(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) k.at(x, y) = k1[x] * k1[y];
  return k;
}

/// Separable convolution with a symmetric kernel, replicate border.
inline Field convolve_separable(const Field& in, std::span<const double> kernel) {
  const int w = in.width();
  const int h = in.height();
  const int r = static_cast<int>(kernel.size() / 2);
  Field tmp(w, h);
  Field out(w, h);
  std::vector<double> line(static_cast<std::size_t>(std::max(w, h) + 2 * r));

  for (int y = 0; y < h; ++y) {
    for (int i = 0; i < w + 2 * r; ++i) line[i] = in.at(std::clamp(i - r, 0, w - 1), y);
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::size_t t = 0; t < kernel.size(); ++t) acc += kernel[t] * line[x + t];
      tmp.at(x, y) = acc;
    }
  }
  for (int x = 0; x < w; ++x) {
    for (int i = 0; i < h + 2 * r; ++i) line[i] = tmp.at(x, std::clamp(i - r, 0, h - 1));
    for (int y = 0; y < h; ++y) {
      double acc = 0.0;
      for (std::size_t t = 0; t < kernel.size(); ++t) acc += kernel[t] * line[y + t];
      out.at(x, y) = acc;
    }
  }
  return out;
}

inline Field gaussian_blur(const Field& in, double sigma) {
  const auto k = gaussian_kernel_1d(sigma);
  return convolve_separable(in, k);
}

/// Perceptual mix 0.6 Y + 0.2 Cb + 0.2 Cr, before smoothing.
inline Field luminance_mix(const YCbCrImage& ycc) {
  Field mix(ycc.width(), ycc.height());
  for (std::size_t i = 0; i < mix.size(); ++i)
    mix.values()[i] = (6.0 * ycc.y.values()[i] + 2.0 * ycc.cb.values()[i] + 2.0 * ycc.cr.values()[i]) / 10.0;
  return mix;
}

/// L = (6 G*Y + 2 G*Cb + 2 G*Cr) / 10. Convolution is linear so the planes are mixed first.
inline Field luminance_map(const YCbCrImage& ycc, double sigma_d) {
  return gaussian_blur(luminance_mix(ycc), sigma_d);
}

/// Second-moment matrices of an already differentiation-smoothed field L:
/// central-difference gradients, products integrated at sigma_i and scaled by sigma_d^2.
inline MomentField second_moment_field(const Field& L, double sigma_i, double sigma_d) {
  if (L.width() < 3 || L.height() < 3) fail(Errc::invalid_input, "second-moment field needs at least 3x3 input");
  if (!(sigma_i > 0.0) || !(sigma_d > 0.0)) fail(Errc::invalid_parameter, "scales must be positive");
  const int w = L.width();
  const int h = L.height();
  Field xx(w, h), xy(w, h), yy(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = 0.5 * (L.clamped(x + 1, y) - L.clamped(x - 1, y));
      const double gy = 0.5 * (L.clamped(x, y + 1) - L.clamped(x, y - 1));
      xx.at(x, y) = gx * gx;
      xy.at(x, y) = gx * gy;
      yy.at(x, y) = gy * gy;
    }
  }
  const auto k = gaussian_kernel_1d(sigma_i);
  xx = convolve_separable(xx, k);
  xy = convolve_separable(xy, k);
  yy = convolve_separable(yy, k);

  const double s2 = sigma_d * sigma_d;
  MomentField m{w, h, std::vector<Moment>(static_cast<std::size_t>(w) * h)};
  for (std::size_t i = 0; i < m.values.size(); ++i)
    m.values[i] = {s2 * xx.values()[i], s2 * xy.values()[i], s2 * yy.values()[i]};
  return m;
}

inline Field harris_response(const MomentField& m, double alpha) {
  Field out(m.width, m.height);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const auto& v = m.values[i];
    const double tr = v.trace();
    out.values()[i] = v.det() - alpha * tr * tr;
  }
  return out;
}

/// Pixels strictly greater than every in-bounds 8-neighbour.
/// A pixel is kept when no neighbour exceeds it, no raster-earlier neighbour
/// equals it, and at least one neighbour is strictly smaller. Plateaus thus
/// report their first pixel; flat fields report nothing.
inline std::vector<InterestPoint> strict_local_maxima(const Field& f) {
  std::vector<InterestPoint> pts;
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      const double v = f.at(x, y);
      bool is_max = true;
      bool has_lower = false;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= f.width() || ny >= f.height()) continue;
          const double w = f.at(nx, ny);
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (w > v || (w == v && earlier)) {
            is_max = false;
            break;
          }
          if (w < v) has_lower = true;
        }
      }
      if (is_max && has_lower) pts.push_back({x, y, v});
    }
  }
  return pts;
}

inline void sort_by_response(std::vector<InterestPoint>& pts) {
  std::sort(pts.begin(), pts.end(), [](const InterestPoint& a, const InterestPoint& b) {
    if (a.response != b.response) return a.response > b.response;
    return std::tie(a.y, a.x) < std::tie(b.y, b.x);
  });
}

/// Thresholded strict maxima, strongest first. A field with no positive response yields nothing.
inline std::vector<InterestPoint> detect_points(const Field& response, double theta) {
  if (response.size() == 0) return {};
  const double peak = *std::max_element(response.values().begin(), response.values().end());
  if (!(peak > 0.0)) return {};
  const double cut = theta * peak;
  auto pts = strict_local_maxima(response);
  std::erase_if(pts, [cut](const InterestPoint& p) { return p.response < cut; });
  sort_by_response(pts);
  return pts;
}

namespace detail {

/// Gaussian-smoothed value at a single pixel (direct 2-D sum, replicate border).
inline double smoothed_at(const Field& f, std::span<const double> k, int x, int y) {
  const int r = static_cast<int>(k.size() / 2);
  double acc = 0.0;
  for (int v = -r; v <= r; ++v) {
    double row = 0.0;
    for (int u = -r; u <= r; ++u) row += k[u + r] * f.clamped(x + u, y + v);
    acc += k[v + r] * row;
  }
  return acc;
}

inline double normalized_log(const Field& mix, double sigma, int x, int y) {
  const auto k = gaussian_kernel_1d(sigma);
  const double c = smoothed_at(mix, k, x, y);
  const double lap = smoothed_at(mix, k, x + 1, y) + smoothed_at(mix, k, x - 1, y) + smoothed_at(mix, k, x, y + 1) +
                     smoothed_at(mix, k, x, y - 1) - 4.0 * c;
  return sigma * sigma * std::abs(lap);
}

inline double radius_from_mix(const Field& mix, const InterestPoint& p, const DetectorParams& params) {
  const double r_max = std::min(mix.width(), mix.height()) / 2.0;
  const auto& levels = params.sigma_i_levels;
  std::vector<double> resp(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) resp[i] = normalized_log(mix, levels[i], p.x, p.y);

  double best = -1.0;
  double best_sigma = 0.0;
  for (std::size_t i = 1; i + 1 < levels.size(); ++i) {
    if (resp[i] > resp[i - 1] && resp[i] > resp[i + 1] && resp[i] > best) {
      best = resp[i];
      best_sigma = levels[i];
    }
  }
  const double r = best < 0.0 ? params.r_min : std::sqrt(2.0) * best_sigma;
  return std::min(std::max(r, params.r_min), r_max);
}

}  // namespace detail

/// LoG characteristic scale at a point: r = sqrt(2) * sigma*, clamped to [r_min, min(w,h)/2].
/// Falls back to r_min when the response has no interior maximum along the scale axis.
inline double characteristic_radius(const YCbCrImage& ycc, const InterestPoint& p, const DetectorParams& params) {
  if (p.x < 0 || p.y < 0 || p.x >= ycc.width() || p.y >= ycc.height())
    fail(Errc::invalid_input, "point outside image");
  return detail::radius_from_mix(luminance_mix(ycc), p, params);
}

/// Harris-Laplace regions: multi-scale Harris maxima merged across scales, strongest first,
/// each with its LoG radius. Never empty: a featureless image yields its inscribed circle.
inline std::vector<InterestRegion> extract_regions(const Image& img, const DetectorParams& params) {
  params.validate();
  const auto ycc = rgb_to_ycbcr(img);
  const Field mix = luminance_mix(ycc);

  std::vector<InterestPoint> candidates;
  if (img.width() >= 3 && img.height() >= 3) {
    for (double sigma_i : params.sigma_i_levels) {
      const double sigma_d = params.sigma_ratio * sigma_i;
      const Field L = gaussian_blur(mix, sigma_d);
      const auto pts = detect_points(harris_response(second_moment_field(L, sigma_i, sigma_d), params.alpha),
                                     params.theta);
      candidates.insert(candidates.end(), pts.begin(), pts.end());
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const InterestPoint& a, const InterestPoint& b) {
    if (a.response != b.response) return a.response > b.response;
    return std::tie(a.y, a.x) < std::tie(b.y, b.x);
  });

  std::vector<InterestPoint> kept;
  const double d2 = params.merge_distance * params.merge_distance;
  for (const auto& c : candidates) {
    if (static_cast<int>(kept.size()) >= params.max_regions) break;
    const bool near = std::any_of(kept.begin(), kept.end(), [&](const InterestPoint& k) {
      const double dx = k.x - c.x;
      const double dy = k.y - c.y;
      return dx * dx + dy * dy <= d2;
    });
    if (!near) kept.push_back(c);
  }

  std::vector<InterestRegion> regions;
  regions.reserve(kept.size());
  for (const auto& p : kept)
    regions.push_back({static_cast<double>(p.x), static_cast<double>(p.y), detail::radius_from_mix(mix, p, params),
                       p.response});
  if (regions.empty()) {
    regions.push_back({(img.width() - 1) / 2.0, (img.height() - 1) / 2.0,
                       std::min(img.width(), img.height()) / 2.0, 0.0});
  }
  return regions;
}

}  // namespace rbir
