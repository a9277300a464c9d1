#pragma once

#include <array>

#include "forge/image.hpp"

namespace forge {

using QuantTable = std::array<int, 64>;  // natural (row-major) order

/// Annex K luminance/chrominance table scaled by the libjpeg quality law,
/// entries clamped to [1, 255]. quality in [1, 100].
QuantTable quant_table(int quality, bool chroma);

/// Baseline-JPEG round trip without entropy coding: JFIF YCbCr, 4:2:0 chroma
/// (gray images: luma only), 8x8 float DCT, quantize / dequantize, inverse DCT,
/// triangle chroma upsampling, round-half-even and clamp.
ImageBuffer jpeg_simulate(const ImageBuffer& image, int quality);

}  // namespace forge
