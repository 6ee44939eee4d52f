#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "attrnet/errors.hpp"
#include "attrnet/rng.hpp"
#include "attrnet/tensor.hpp"

namespace attrnet {

/// Training-time augmentation. Each transform has an enable flag; the
/// magnitudes are fractions of the image size.
struct AugmentConfig {
  bool flip = true;
  double flip_prob = 0.5;
  bool shift = true;
  double max_shift = 0.1;
  bool zoom = true;
  double max_zoom = 0.1;

  static AugmentConfig none() { return {false, 0.5, false, 0.1, false, 0.1}; }

  bool any() const { return flip || shift || zoom; }

  void validate() const {
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ValidationError("augment: flip_prob must be in [0,1]");
    if (!(max_shift >= 0.0 && max_shift < 1.0)) throw ValidationError("augment: max_shift must be in [0,1)");
    if (!(max_zoom >= 0.0 && max_zoom < 1.0)) throw ValidationError("augment: max_zoom must be in [0,1)");
  }
  bool operator==(const AugmentConfig&) const = default;
};

/// Sampled transform: output pixel (x, y) reads the input at the inverse
/// of shift, then zoom about the center, then horizontal flip.
struct AugmentParams {
  bool flip = false;
  long dx = 0;
  long dy = 0;
  double zoom = 1.0;

  bool identity() const { return !flip && dx == 0 && dy == 0 && zoom == 1.0; }
};

/// Draws a fixed number of variates regardless of which transforms are
/// enabled, so toggling one transform does not reshuffle the others.
inline AugmentParams sample_augment(const AugmentConfig& cfg, std::size_t width, std::size_t height, Rng& rng) {
  const double u_flip = rng.uniform(), u_dx = rng.uniform(), u_dy = rng.uniform(), u_zoom = rng.uniform();
  AugmentParams p;
  if (cfg.flip) p.flip = u_flip < cfg.flip_prob;
  if (cfg.shift) {
    p.dx = std::lround((2.0 * u_dx - 1.0) * cfg.max_shift * static_cast<double>(width));
    p.dy = std::lround((2.0 * u_dy - 1.0) * cfg.max_shift * static_cast<double>(height));
  }
  if (cfg.zoom) p.zoom = 1.0 + (2.0 * u_zoom - 1.0) * cfg.max_zoom;
  return p;
}

/// Applies `p` to a [C,H,W] tensor. Samples falling outside the input read
/// as 0; fractional positions are bilinear.
template <class T>
Tensor<T> apply_augment(const Tensor<T>& img, const AugmentParams& p) {
  if (img.rank() != 3) throw DimensionError("augment expects [C,H,W], got " + shape_string(img.shape()));
  if (p.identity()) return img.clone();
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Tensor<T> out(img.shape());
  const T* in = img.ptr();
  T* o = out.mutable_ptr();
  const double cx = static_cast<double>(W) / 2.0, cy = static_cast<double>(H) / 2.0;
  auto fetch = [&](std::size_t c, long x, long y) -> double {
    if (x < 0 || y < 0 || x >= static_cast<long>(W) || y >= static_cast<long>(H)) return 0.0;
    return in[(c * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x)];
  };
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      double sx = static_cast<double>(static_cast<long>(x) - p.dx);
      double sy = static_cast<double>(static_cast<long>(y) - p.dy);
      if (p.zoom != 1.0) {
        sx = (sx + 0.5 - cx) / p.zoom + cx - 0.5;
        sy = (sy + 0.5 - cy) / p.zoom + cy - 0.5;
      }
      if (p.flip) sx = static_cast<double>(W) - 1.0 - sx;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double tx = sx - fx, ty = sy - fy;
      const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      for (std::size_t c = 0; c < C; ++c) {
        double v;
        if (tx == 0.0 && ty == 0.0) {
          v = fetch(c, x0, y0);
        } else {
          const double a = fetch(c, x0, y0), b = fetch(c, x0 + 1, y0);
          const double d = fetch(c, x0, y0 + 1), e = fetch(c, x0 + 1, y0 + 1);
          const double top = a + (b - a) * tx, bot = d + (e - d) * tx;
          // Clamp away rounding so the result stays inside the taps' range.
          v = std::clamp(top + (bot - top) * ty, std::min({a, b, d, e}), std::max({a, b, d, e}));
        }
        o[(c * H + y) * W + x] = static_cast<T>(v);
      }
    }
  }
  return out;
}

/// Per-sample augmentation seed: depends on run seed, epoch and sample index only.
inline std::uint64_t augment_seed(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  return mix_seed(mix_seed(seed, epoch), index);
}

template <class T>
Tensor<T> augment(const Tensor<T>& img, const AugmentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (img.rank() != 3) throw DimensionError("augment expects [C,H,W], got " + shape_string(img.shape()));
  if (!cfg.any()) return img.clone();
  Rng rng(seed);
  return apply_augment(img, sample_augment(cfg, img.dim(2), img.dim(1), rng));
}

}  // namespace attrnet
