#pragma once

#include <cstdint>
#include <vector>

namespace vistrack {

// Row-major 2-D grid of pixel values.
template <typename T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int h, int w, T fill = T{}) : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

  T& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
  const T& at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }

  size_t size() const { return data.size(); }
  bool empty_area() const {
    for (const T& v : data)
      if (v != T{}) return false;
    return true;
  }

  bool operator==(const Grid& o) const {
    return height == o.height && width == o.width && data == o.data;
  }
};

using MaskGrid = Grid<uint8_t>;    // binary masks, values {0,1}
using IdGrid = Grid<uint16_t>;     // per-pixel instance ids, 0 = background

}  // namespace vistrack
