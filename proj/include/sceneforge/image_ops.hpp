#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sceneforge/core_types.hpp"

namespace sceneforge {

/// Binary edge map, values in {0,1}.
struct EdgeMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values;

    std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const;
};

struct ClaheParams {
    int tiles_x = 8;
    int tiles_y = 8;
    /// Multiple of the uniform bin height (tile_area / 256).
    double clip_limit = 2.0;
};

using ToneLut = std::array<std::uint8_t, 256>;

/// Per-tile CLAHE mappings, row-major over the tile grid.
struct ClaheLuts {
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<ToneLut> luts;

    const ToneLut& at(int tx, int ty) const { return luts[static_cast<std::size_t>(ty) * tiles_x + tx]; }
};

// ITU-R BT.601 luma, rounded to nearest.
ImageBuffer to_gray(const ImageBuffer& img);
RealMap to_real(const ImageBuffer& gray);

/// Separable Gaussian with radius ceil(3 sigma), normalized kernel, edge-replicate padding.
RealMap gaussian_blur(const RealMap& map, double sigma);
std::vector<double> gaussian_kernel(double sigma);

/// Canny: 8-bit Gaussian pre-smooth (sigma 1.4), Sobel, L2 magnitude, NMS, 8-connected hysteresis.
/// Strong edges need magnitude > hi, weak edges magnitude > lo.
EdgeMap canny(const ImageBuffer& img, double lo, double hi);

double lanczos3(double x);

/// Lanczos-3 separable resampling with pixel-center alignment and edge clamping.
/// Downscaling widens the kernel support by the scale factor.
RealMap lanczos_resize(const RealMap& map, int out_w, int out_h);
ImageBuffer lanczos_resize(const ImageBuffer& img, int out_w, int out_h);

ImageBuffer nearest_resize(const ImageBuffer& img, int out_w, int out_h);
BinaryMask nearest_resize(const BinaryMask& mask, int out_w, int out_h);

ClaheLuts clahe_tile_luts(const ImageBuffer& gray, const ClaheParams& params);
ImageBuffer clahe(const ImageBuffer& gray, const ClaheParams& params);

/// CLAHE on the CIE L*a*b* (D65) lightness of an RGB image; a*, b* are carried through unchanged.
ImageBuffer tone_normalize(const ImageBuffer& rgb, const ClaheParams& params);

/// Lightness coordinate used by tone_normalize, quantized to 8 bits such that a neutral
/// gray pixel maps to its own value.
ImageBuffer lightness_channel(const ImageBuffer& rgb);

double psnr(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace sceneforge
