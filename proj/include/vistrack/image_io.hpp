#pragma once

#include <string>

#include "vistrack/grid.hpp"
#include "vistrack/tensor.hpp"

namespace vistrack {

// Frames are [3,H,W] tensors with values on the 8-bit grid k/255.
// Instance-id masks are stored as 16-bit single-channel PNGs.

void write_frame_png(const std::string& path, const Tensor& frame);
Tensor read_frame_png(const std::string& path);

void write_id_mask_png(const std::string& path, const IdGrid& mask);
IdGrid read_id_mask_png(const std::string& path);

// Quantizes an arbitrary [0,1] frame onto the 8-bit grid.
Tensor quantize_frame(const Tensor& frame);

}  // namespace vistrack
