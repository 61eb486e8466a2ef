#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

// 8-bit single-channel raster, row-major.
struct GrayImage {
    int h = 0, w = 0;
    std::vector<uint8_t> px;
};

// Decodes any PNG color type to 8-bit grayscale. RGB collapses through the
// standard luma weights (0.299, 0.587, 0.114); 16-bit depth is stripped,
// alpha dropped.
GrayImage read_png_gray(const std::string& path);

void write_png_gray(const std::string& path, const GrayImage& img);

// [H,W] tensor on the symmetric unit scale: px/255 * 2 - 1.
Tensor normalize_pm1(const GrayImage& img);

// Inverse of normalize_pm1 with clamping; round-trips within one 8-bit step.
GrayImage denormalize_pm1(const Tensor& t);

// align_corners=false sampling: src = (dst + 0.5) * scale - 0.5. Resampling
// to the source size is the identity.
Tensor resize_bilinear(const Tensor& img, int th, int tw);

// Nearest-neighbor for label images; preserves the value set.
Tensor resize_nearest(const Tensor& img, int th, int tw);

}  // namespace vseg
