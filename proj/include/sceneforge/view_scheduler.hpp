#pragma once

#include <compare>
#include <span>
#include <vector>

#include "sceneforge/core_types.hpp"

namespace sceneforge {

/// One joint-diffusion window on the latent grid, half-open [h1,h2) x [w1,w2).
struct ViewRect {
    int h1 = 0;
    int h2 = 0;
    int w1 = 0;
    int w2 = 0;

    int height() const { return h2 - h1; }
    int width() const { return w2 - w1; }

    auto operator<=>(const ViewRect&) const = default;
};

struct StrideParams {
    int view_h = 128;
    int view_w = 128;
    int s_back = 64;
    int s_inst = 32;
    double beta_over = 0.2;

    bool operator==(const StrideParams&) const = default;
};

struct AdaptiveSchedule {
    std::vector<ViewRect> views;
    std::size_t default_count = 0;
    std::size_t refined_default_views = 0;

    std::size_t count() const { return views.size(); }
};

/// Throws ConfigError naming the violated constraint.
void validate_stride(int latent_h, int latent_w, const StrideParams& params);

/// Smallest extent >= n that a view of size `view` tiles exactly with stride `stride`.
int next_valid_extent(int n, int view, int stride);

std::vector<ViewRect> default_views(int latent_h, int latent_w, const StrideParams& params);

/// Fixed-stride grid ignoring instance stride, used for cost comparisons.
std::vector<ViewRect> fixed_stride_views(int latent_h, int latent_w, int view_h, int view_w, int stride);

/// Default views plus the (r^2 - 1) finer-stride views around every default view whose
/// instance-overlap ratio exceeds beta_over; r = s_back / s_inst.
AdaptiveSchedule adaptive_views(int latent_h, int latent_w, const StrideParams& params,
                                std::span<const LatentMask> masks);

LatentMask union_mask(int latent_h, int latent_w, std::span<const LatentMask> masks);

/// Fraction of the view's cells set in `mask`.
double overlap_ratio(const ViewRect& view, const LatentMask& mask);

/// Per-cell number of covering views (H_z x W_z, row-major).
struct CoverageMap {
    int height = 0;
    int width = 0;
    std::vector<int> counts;

    int at(int h, int w) const { return counts[static_cast<std::size_t>(h) * width + w]; }
    int min() const;
    int max() const;
};

CoverageMap coverage_counts(std::span<const ViewRect> views, int latent_h, int latent_w);

}  // namespace sceneforge
