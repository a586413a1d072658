#include "sceneforge/hf_injection.hpp"

#include <algorithm>
#include <string>

#include "sceneforge/image_ops.hpp"

namespace sceneforge {

void validate(const PerturbParams& p) {
    if (p.d_r < 0) {
        throw ConfigError("perturb: d_r must be >= 0");
    }
    if (p.alpha_interp < 1) {
        throw ConfigError("perturb: alpha_interp must be >= 1");
    }
    if (!(p.sigma > 0.0)) {
        throw ConfigError("perturb: sigma must be > 0");
    }
    if (!(0.0 <= p.p_base && p.p_base <= p.p_max && p.p_max <= 1.0)) {
        throw ConfigError("perturb: need 0 <= p_base <= p_max <= 1");
    }
    if (!(p.canny_lo < p.canny_hi)) {
        throw ConfigError("perturb: canny_lo must be < canny_hi");
    }
}

ProbabilityMap build_probability_map(const ImageBuffer& img, const PerturbParams& params) {
    validate(params);
    const EdgeMap edges = canny(img, params.canny_lo, params.canny_hi);
    RealMap edge_map(edges.width, edges.height);
    for (int y = 0; y < edges.height; ++y) {
        for (int x = 0; x < edges.width; ++x) {
            edge_map.at(x, y) = edges.at(x, y);
        }
    }
    const RealMap blurred = gaussian_blur(edge_map, params.sigma);
    RealMap up = lanczos_resize(blurred, img.width() * params.alpha_interp, img.height() * params.alpha_interp);

    const auto [lo_it, hi_it] = std::minmax_element(up.values().begin(), up.values().end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    const double range = hi - lo;
    const double span = params.p_max - params.p_base;
    for (double& v : up.values()) {
        double n = 0.0;
        if (range > 0.0) {
            n = (v - lo) / range;
        } else if (hi > 0.0) {
            n = 1.0;  // every pixel an edge
        }
        v = std::clamp(span * n + params.p_base, params.p_base, params.p_max);
    }
    return ProbabilityMap{std::move(up)};
}

int back_project(int out, int alpha) { return (2 * out + 1) / (2 * alpha); }

PerturbResult adaptive_pixel_perturb(const ImageBuffer& img, const ProbabilityMap& map, const PerturbParams& params,
                                     Rng& rng) {
    validate(params);
    const int alpha = params.alpha_interp;
    const int out_w = img.width() * alpha;
    const int out_h = img.height() * alpha;
    if (map.width() != out_w || map.height() != out_h) {
        throw ConfigError("perturb: probability map is " + std::to_string(map.width()) + "x" +
                          std::to_string(map.height()) + ", expected " + std::to_string(out_w) + "x" +
                          std::to_string(out_h));
    }
    PerturbResult result{lanczos_resize(img, out_w, out_h), 0};
    ImageBuffer& out = result.image;
    const int channels = img.channels();
    for (int h = 0; h < out_h; ++h) {
        const int src_h = back_project(h, alpha);
        for (int w = 0; w < out_w; ++w) {
            const double eps = rng.uniform();
            const double c = map.at(w, h);
            const bool replace = params.flip_inequality ? eps < c : eps > c;
            if (!replace) {
                continue;
            }
            const int rh = std::clamp(src_h + rng.randint(-params.d_r, params.d_r), 0, img.height() - 1);
            const int rw = std::clamp(back_project(w, alpha) + rng.randint(-params.d_r, params.d_r), 0, img.width() - 1);
            for (int ch = 0; ch < channels; ++ch) {
                out.at(w, h, ch) = img.at(rw, rh, ch);
            }
            ++result.replaced;
        }
    }
    return result;
}

LatentTensor hf_forward_diffuse(const ImageBuffer& img, LatentCodec& codec, const NoiseSchedule& schedule, int t_b,
                                Rng& rng) {
    if (t_b < 0 || t_b > schedule.train_steps()) {
        throw ConfigError("t_b " + std::to_string(t_b) + " outside [0, " + std::to_string(schedule.train_steps()) + "]");
    }
    const LatentTensor z0 = codec.encode(img);
    return forward_diffuse(z0, t_b, schedule, rng);
}

}  // namespace sceneforge
