#pragma once

#include <string>

#include "stereoadapt/types.hpp"

namespace stereoadapt::harness {

/// 8- or 16-bit gray, gray+alpha, RGB or RGBA PNG -> (C, H, W) in [0, 1];
/// alpha is dropped.
Image read_png_image(const std::string& path);

/// Writes a 16-bit gray (C = 1) or RGB (C = 3) PNG.
void write_png_image(const std::string& path, const Image& image);

/// 16-bit single-channel disparity PNG: disparity = raw / 256, raw 0 marks an
/// invalid pixel. Anything else is rejected with kMalformedFile.
GroundTruth read_disparity_png16(const std::string& path);

/// Inverse of the reader. Valid disparities round to the nearest 1/256 and
/// are stored as at least raw 1 so they stay valid.
void write_disparity_png16(const std::string& path, const GroundTruth& gt);

/// Single-channel ("Pf") or RGB ("PF") float map; rows bottom-up, negative
/// scale for little-endian payloads.
tensor::Tensor<float> read_pfm(const std::string& path);
void write_pfm(const std::string& path, const tensor::Tensor<float>& map);

}  // namespace stereoadapt::harness
