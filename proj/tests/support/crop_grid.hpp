#pragma once

#include <array>

#include "attrnet/crop.hpp"

namespace attrnet::testing {

struct CropCase {
  BBox in;
  BBox expected;
};

// 400x300 image. Expected rectangles worked out by hand with exact
// fractions: pads 2/5 of box width (left, right), 2/5 of box height (top),
// 3/10 of box height (bottom), halves rounded up, then clipped per side.
const std::array<CropCase, 25> kCropGrid{{
    {{100, 100, 200, 200}, {60, 60, 240, 230}},
    {{0, 0, 100, 100}, {0, 0, 140, 130}},
    {{0, 0, 400, 300}, {0, 0, 400, 300}},
    {{150, 100, 250, 200}, {110, 60, 290, 230}},
    {{10, 50, 110, 150}, {0, 10, 150, 180}},
    {{350, 50, 400, 150}, {330, 10, 400, 180}},
    {{300, 50, 390, 150}, {264, 10, 400, 180}},
    {{150, 5, 250, 105}, {110, 0, 290, 135}},
    {{150, 200, 250, 295}, {110, 162, 290, 300}},
    {{150, 250, 250, 300}, {110, 230, 290, 300}},
    {{0, 0, 50, 40}, {0, 0, 70, 52}},
    {{360, 270, 400, 300}, {344, 258, 400, 300}},
    {{0, 260, 30, 300}, {0, 244, 42, 300}},
    {{370, 0, 400, 20}, {358, 0, 400, 26}},
    {{1, 1, 2, 2}, {1, 1, 2, 2}},
    {{0, 0, 1, 1}, {0, 0, 1, 1}},
    {{399, 299, 400, 300}, {399, 299, 400, 300}},
    {{100, 100, 105, 105}, {98, 98, 107, 107}},
    {{100, 100, 115, 115}, {94, 94, 121, 120}},
    {{20, 20, 380, 280}, {0, 0, 400, 300}},
    {{195, 145, 205, 155}, {191, 141, 209, 158}},
    {{50, 100, 60, 300}, {46, 20, 64, 300}},
    {{0, 120, 400, 180}, {0, 96, 400, 198}},
    {{30, 30, 33, 37}, {29, 27, 34, 39}},
    {{200, 150, 201, 151}, {200, 150, 201, 151}},
}};

}  // namespace attrnet::testing
