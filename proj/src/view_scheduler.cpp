#include "sceneforge/view_scheduler.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace sceneforge {

namespace {

// Summed-area table over a binary mask, (H+1) x (W+1).
class MaskIntegral {
public:
    explicit MaskIntegral(const LatentMask& mask) : width_(mask.width() + 1) {
        sums_.assign(static_cast<std::size_t>(mask.height() + 1) * width_, 0);
        for (int h = 0; h < mask.height(); ++h) {
            long long row = 0;
            for (int w = 0; w < mask.width(); ++w) {
                row += mask.at(h, w) ? 1 : 0;
                sums_[idx(h + 1, w + 1)] = sums_[idx(h, w + 1)] + row;
            }
        }
    }

    long long sum(const ViewRect& v) const {
        return sums_[idx(v.h2, v.w2)] - sums_[idx(v.h1, v.w2)] - sums_[idx(v.h2, v.w1)] + sums_[idx(v.h1, v.w1)];
    }

private:
    std::size_t idx(int h, int w) const { return static_cast<std::size_t>(h) * width_ + w; }

    int width_;
    std::vector<long long> sums_;
};

}  // namespace

void validate_stride(int latent_h, int latent_w, const StrideParams& p) {
    if (p.view_h < 1 || p.view_w < 1) {
        throw ConfigError("view size must be positive");
    }
    if (p.view_h > latent_h || p.view_w > latent_w) {
        throw ConfigError("view size " + std::to_string(p.view_h) + "x" + std::to_string(p.view_w) +
                          " exceeds latent " + std::to_string(latent_h) + "x" + std::to_string(latent_w));
    }
    if (p.s_inst < 1 || p.s_back < 1) {
        throw ConfigError("strides must be positive");
    }
    if (p.s_inst > p.s_back || p.s_back % p.s_inst != 0) {
        throw ConfigError("s_back (" + std::to_string(p.s_back) + ") must be a multiple of s_inst (" +
                          std::to_string(p.s_inst) + ")");
    }
    if (p.s_back > p.view_h || p.s_back > p.view_w) {
        throw ConfigError("s_back (" + std::to_string(p.s_back) + ") exceeds the view size; cells between views would be uncovered");
    }
    if ((latent_h - p.view_h) % p.s_back != 0 || (latent_w - p.view_w) % p.s_back != 0) {
        throw ConfigError("stride divisibility: (latent - view) must be divisible by s_back=" +
                          std::to_string(p.s_back) + " (latent " + std::to_string(latent_h) + "x" +
                          std::to_string(latent_w) + ", view " + std::to_string(p.view_h) + "x" +
                          std::to_string(p.view_w) + ")");
    }
    if (!(p.beta_over >= 0.0 && p.beta_over <= 1.0)) {
        throw ConfigError("beta_over must lie in [0,1]");
    }
}

int next_valid_extent(int n, int view, int stride) {
    if (n <= view) {
        return view;
    }
    const int over = n - view;
    return view + (over + stride - 1) / stride * stride;
}

std::vector<ViewRect> fixed_stride_views(int latent_h, int latent_w, int view_h, int view_w, int stride) {
    StrideParams p{view_h, view_w, stride, stride, 0.0};
    validate_stride(latent_h, latent_w, p);
    const int nh = (latent_h - view_h) / stride + 1;
    const int nw = (latent_w - view_w) / stride + 1;
    std::vector<ViewRect> views;
    views.reserve(static_cast<std::size_t>(nh) * nw);
    for (int i = 0; i < nh * nw; ++i) {
        const int h1 = (i / nw) * stride;
        const int w1 = (i % nw) * stride;
        views.push_back({h1, h1 + view_h, w1, w1 + view_w});
    }
    return views;
}

std::vector<ViewRect> default_views(int latent_h, int latent_w, const StrideParams& params) {
    validate_stride(latent_h, latent_w, params);
    return fixed_stride_views(latent_h, latent_w, params.view_h, params.view_w, params.s_back);
}

LatentMask union_mask(int latent_h, int latent_w, std::span<const LatentMask> masks) {
    LatentMask total(latent_h, latent_w);
    for (const auto& m : masks) {
        if (m.height() != latent_h || m.width() != latent_w) {
            throw ConfigError("instance mask is not aligned to the latent grid");
        }
        for (int h = 0; h < latent_h; ++h) {
            for (int w = 0; w < latent_w; ++w) {
                if (m.at(h, w)) {
                    total.set(h, w);
                }
            }
        }
    }
    return total;
}

double overlap_ratio(const ViewRect& view, const LatentMask& mask) {
    long long inside = 0;
    for (int h = view.h1; h < view.h2; ++h) {
        for (int w = view.w1; w < view.w2; ++w) {
            inside += mask.at(h, w) ? 1 : 0;
        }
    }
    return static_cast<double>(inside) / (static_cast<double>(view.height()) * view.width());
}

AdaptiveSchedule adaptive_views(int latent_h, int latent_w, const StrideParams& params,
                                std::span<const LatentMask> masks) {
    validate_stride(latent_h, latent_w, params);
    const LatentMask total = union_mask(latent_h, latent_w, masks);
    const MaskIntegral integral(total);
    const int ratio = params.s_back / params.s_inst;
    const double view_area = static_cast<double>(params.view_h) * params.view_w;
    const int max_h1 = latent_h - params.view_h;
    const int max_w1 = latent_w - params.view_w;

    AdaptiveSchedule out;
    const auto defaults = default_views(latent_h, latent_w, params);
    out.default_count = defaults.size();
    std::set<ViewRect> seen;
    auto push = [&](const ViewRect& v) {
        if (seen.insert(v).second) {
            out.views.push_back(v);
        }
    };

    for (const ViewRect& base : defaults) {
        push(base);
        const double r_over = static_cast<double>(integral.sum(base)) / view_area;
        if (!(r_over > params.beta_over)) {
            continue;
        }
        ++out.refined_default_views;
        for (int a = 0; a < ratio; ++a) {
            for (int b = 0; b < ratio; ++b) {
                if (a == 0 && b == 0) {
                    continue;
                }
                const int h1 = std::min(base.h1 + a * params.s_inst, max_h1);
                const int w1 = std::min(base.w1 + b * params.s_inst, max_w1);
                push({h1, h1 + params.view_h, w1, w1 + params.view_w});
            }
        }
    }
    return out;
}

int CoverageMap::min() const { return counts.empty() ? 0 : *std::min_element(counts.begin(), counts.end()); }
int CoverageMap::max() const { return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end()); }

CoverageMap coverage_counts(std::span<const ViewRect> views, int latent_h, int latent_w) {
    CoverageMap map{latent_h, latent_w, std::vector<int>(static_cast<std::size_t>(latent_h) * latent_w, 0)};
    for (const ViewRect& v : views) {
        if (v.h1 < 0 || v.w1 < 0 || v.h2 > latent_h || v.w2 > latent_w || v.h1 >= v.h2 || v.w1 >= v.w2) {
            throw ConfigError("coverage_counts: view out of bounds");
        }
        for (int h = v.h1; h < v.h2; ++h) {
            int* row = map.counts.data() + static_cast<std::size_t>(h) * latent_w;
            for (int w = v.w1; w < v.w2; ++w) {
                ++row[w];
            }
        }
    }
    return map;
}

}  // namespace sceneforge
