#pragma once
// 8-bit PNG read/write for tiles and masks (libpng).

#include <string>

#include "offnadir/tensor.hpp"

namespace offnadir::datagen {

// image: (1,3,H,W) in [0,1]; values are rounded to 8 bits.
void write_png_rgb8(const std::string& path, const nn::TensorF& image);

// mask: (1,1,H,W) with values in {0,1}; written as 0/255.
void write_png_mask8(const std::string& path, const nn::TensorF& mask);

// Any 8-bit PNG (gray, gray+alpha, RGB, RGBA) -> (1,3,H,W) in [0,1].
nn::TensorF read_png_rgb(const std::string& path);

// Mask PNG -> (1,1,H,W) in {0,1}; thresholds at 128.
nn::TensorF read_png_mask(const std::string& path);

}  // namespace offnadir::datagen
