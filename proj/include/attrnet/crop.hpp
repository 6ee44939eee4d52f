#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "attrnet/errors.hpp"
#include "attrnet/image.hpp"

namespace attrnet {

/// Pixel rectangle, inclusive-exclusive: [x0, x1) x [y0, y1).
struct BBox {
  long x0 = 0;
  long y0 = 0;
  long x1 = 0;
  long y1 = 0;

  long width() const { return x1 - x0; }
  long height() const { return y1 - y0; }
  bool contains(const BBox& o) const { return x0 <= o.x0 && y0 <= o.y0 && o.x1 <= x1 && o.y1 <= y1; }
  bool operator==(const BBox&) const = default;

  std::string str() const {
    return "(" + std::to_string(x0) + "," + std::to_string(y0) + "," + std::to_string(x1) + "," + std::to_string(y1) + ")";
  }
};

inline void validate_bbox(const BBox& b, std::size_t image_w, std::size_t image_h) {
  if (b.x0 < 0 || b.y0 < 0 || b.x0 >= b.x1 || b.y0 >= b.y1 || b.x1 > static_cast<long>(image_w) ||
      b.y1 > static_cast<long>(image_h)) {
    throw ValidationError("bbox " + b.str() + " invalid for " + std::to_string(image_w) + "x" + std::to_string(image_h) +
                          " image");
  }
}

/// Padding around a face box as fractions of the box's own width
/// (left/right) and height (top/bottom).
struct CropRule {
  double pad_left = 0.4;
  double pad_right = 0.4;
  double pad_top = 0.4;
  double pad_bottom = 0.3;

  void validate() const {
    for (double f : {pad_left, pad_right, pad_top, pad_bottom})
      if (!(f >= 0.0) || !std::isfinite(f)) throw ValidationError("crop pad fractions must be finite and >= 0");
  }
  bool operator==(const CropRule&) const = default;
};

/// Expands `bbox` by the rule's pads (rounded to nearest, halves away from
/// zero); a side whose pad would cross the image border stops at the border.
inline BBox padded_crop(std::size_t image_w, std::size_t image_h, const BBox& bbox, const CropRule& rule = {}) {
  validate_bbox(bbox, image_w, image_h);
  rule.validate();
  const double w = static_cast<double>(bbox.width()), h = static_cast<double>(bbox.height());
  const long left = std::lround(rule.pad_left * w), right = std::lround(rule.pad_right * w);
  const long top = std::lround(rule.pad_top * h), bottom = std::lround(rule.pad_bottom * h);
  return {std::max(0L, bbox.x0 - left), std::max(0L, bbox.y0 - top),
          std::min(static_cast<long>(image_w), bbox.x1 + right), std::min(static_cast<long>(image_h), bbox.y1 + bottom)};
}

inline Image crop_image(const Image& img, const BBox& r) {
  validate_bbox(r, img.width, img.height);
  Image out(static_cast<std::size_t>(r.width()), static_cast<std::size_t>(r.height()));
  for (long y = r.y0; y < r.y1; ++y) {
    const auto* src = img.rgb.data() + (static_cast<std::size_t>(y) * img.width + static_cast<std::size_t>(r.x0)) * 3;
    std::copy(src, src + out.width * 3, out.rgb.data() + static_cast<std::size_t>(y - r.y0) * out.width * 3);
  }
  return out;
}

}  // namespace attrnet
