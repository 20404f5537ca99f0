#pragma once

#include <algorithm>
#include <array>

namespace vistrack {

using Box = std::array<double, 4>;  // x1, y1, x2, y2

inline double box_area(const Box& b) {
  return std::max(0.0, b[2] - b[0]) * std::max(0.0, b[3] - b[1]);
}

inline double box_iou(const Box& a, const Box& b) {
  double ix1 = std::max(a[0], b[0]);
  double iy1 = std::max(a[1], b[1]);
  double ix2 = std::min(a[2], b[2]);
  double iy2 = std::min(a[3], b[3]);
  double inter = std::max(0.0, ix2 - ix1) * std::max(0.0, iy2 - iy1);
  double uni = box_area(a) + box_area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline Box clip_box(const Box& b, double width, double height) {
  return {std::clamp(b[0], 0.0, width), std::clamp(b[1], 0.0, height),
          std::clamp(b[2], 0.0, width), std::clamp(b[3], 0.0, height)};
}

}  // namespace vistrack
