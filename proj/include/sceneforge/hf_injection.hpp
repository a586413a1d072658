#pragma once

#include <cstddef>

#include "sceneforge/backends.hpp"
#include "sceneforge/core_types.hpp"
#include "sceneforge/noise_schedule.hpp"

namespace sceneforge {

struct PerturbParams {
    /// Max replacement offset in source pixels, per axis.
    int d_r = 4;
    double sigma = 50.0;
    int alpha_interp = 2;
    double p_max = 0.1;
    double p_base = 0.005;
    double canny_lo = 100.0;
    double canny_hi = 200.0;
    /// Replace when eps < C instead of eps > C.
    bool flip_inequality = false;
};

void validate(const PerturbParams& params);

/// Edge-derived replacement threshold at the upsampled resolution, values in [p_base, p_max].
struct ProbabilityMap {
    RealMap values;

    int width() const { return values.width(); }
    int height() const { return values.height(); }
    double at(int x, int y) const { return values.at(x, y); }
};

/// Canny -> Gaussian blur -> Lanczos upsample by alpha -> min-max normalize -> affine map to [p_base, p_max].
ProbabilityMap build_probability_map(const ImageBuffer& img, const PerturbParams& params);

struct PerturbResult {
    ImageBuffer image;
    std::size_t replaced = 0;
};

/// Source-image index that output coordinate `out` projects back to (pixel-centre convention).
int back_project(int out, int alpha);

/// Lanczos-upsamples `img` by alpha, then walks the output in raster order drawing eps ~ U(0,1);
/// when eps > C (or < C when flipped) the pixel is replaced by the source pixel at the back-projected
/// coordinate offset by two randint(-d_r, d_r) draws (rows first), clamped to the source image.
PerturbResult adaptive_pixel_perturb(const ImageBuffer& img, const ProbabilityMap& map, const PerturbParams& params,
                                     Rng& rng);

/// Encode with the codec and forward-diffuse to t_b.
LatentTensor hf_forward_diffuse(const ImageBuffer& img, LatentCodec& codec, const NoiseSchedule& schedule, int t_b,
                                Rng& rng);

}  // namespace sceneforge
