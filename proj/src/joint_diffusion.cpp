#include "sceneforge/joint_diffusion.hpp"

#include <algorithm>
#include <exception>
#include <numeric>
#include <thread>

namespace sceneforge {

namespace {

std::string view_label(std::size_t index, const ViewRect& v, int t) {
    return "view " + std::to_string(index) + " [" + std::to_string(v.h1) + ":" + std::to_string(v.h2) + ", " +
           std::to_string(v.w1) + ":" + std::to_string(v.w2) + "] at t=" + std::to_string(t);
}

LatentTensor run_view(std::size_t index, const ViewRect& view, const LatentTensor& z_t, int t, int t_next,
                      const ConditioningContext& cond, DenoiserBackend& backend, const JointDenoiseOptions& options) {
    ViewInputs in;
    if (cond.pose_map.empty()) {
        in.latent = crop_latent(z_t, view);
        in.pose = ImageBuffer(view.width() * cond.factor, view.height() * cond.factor, 3);
        in.text = compose_view_text(view, cond.instances, cond.global_text, cond.options, &in.truncated);
    } else {
        in = view_inputs(view, z_t, cond.pose_map, cond.instances, cond.global_text, cond.factor, cond.options);
    }
    if (options.on_view_inputs) {
        options.on_view_inputs(index, in);
    }
    LatentTensor out;
    try {
        out = backend.step(DenoiseRequest{in.latent, in.pose, in.text, t, t_next, view});
    } catch (const std::exception& e) {
        throw BackendError("backend step failed for " + view_label(index, view, t) + ": " + e.what());
    }
    if (!out.same_shape(in.latent)) {
        throw BackendError("backend returned a wrongly shaped latent for " + view_label(index, view, t));
    }
    return out;
}

// acc holds sum(x - ref) where ref is the cell's first contribution, so identical inputs merge exactly.
void accumulate(std::vector<double>& ref, std::vector<double>& acc, CoverageMap& counts, const LatentTensor& x,
                const ViewRect& v, int width, int channels) {
    for (int h = 0; h < v.height(); ++h) {
        const std::size_t row = static_cast<std::size_t>(v.h1 + h) * width + v.w1;
        const double* src = x.samples().data() + static_cast<std::size_t>(h) * v.width() * channels;
        for (int w = 0; w < v.width(); ++w) {
            int& cnt = counts.counts[row + w];
            double* r = ref.data() + (row + w) * channels;
            double* a = acc.data() + (row + w) * channels;
            const double* s = src + static_cast<std::size_t>(w) * channels;
            for (int c = 0; c < channels; ++c) {
                if (cnt == 0) {
                    r[c] = s[c];
                } else {
                    a[c] += s[c] - r[c];
                }
            }
            ++cnt;
        }
    }
}

}  // namespace

JointStepResult joint_denoise_step(const LatentTensor& z_t, int t, int t_next, std::span<const ViewRect> views,
                                   const ConditioningContext& cond, DenoiserBackend& backend,
                                   const JointDenoiseOptions& options) {
    const int H = z_t.height();
    const int W = z_t.width();
    const int C = z_t.channels();
    for (const ViewRect& v : views) {
        if (v.h1 < 0 || v.w1 < 0 || v.h2 > H || v.w2 > W || v.h1 >= v.h2 || v.w1 >= v.w2) {
            throw ConfigError("joint_denoise: view out of latent bounds");
        }
    }

    std::vector<std::size_t> order(views.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return views[a] < views[b]; });

    std::vector<double> ref(z_t.size(), 0.0);
    std::vector<double> acc(z_t.size(), 0.0);
    CoverageMap counts{H, W, std::vector<int>(static_cast<std::size_t>(H) * W, 0)};

    const bool parallel = options.workers > 1 && backend.info().concurrent && views.size() > 1;
    if (!parallel) {
        for (std::size_t i : order) {
            const LatentTensor x = run_view(i, views[i], z_t, t, t_next, cond, backend, options);
            accumulate(ref, acc, counts, x, views[i], W, C);
        }
    } else {
        std::vector<LatentTensor> results(views.size());
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(options.workers));
        {
            std::vector<std::jthread> pool;
            for (int k = 0; k < options.workers; ++k) {
                pool.emplace_back([&, k] {
                    try {
                        for (std::size_t i = static_cast<std::size_t>(k); i < views.size();
                             i += static_cast<std::size_t>(options.workers)) {
                            results[i] = run_view(i, views[i], z_t, t, t_next, cond, backend, options);
                        }
                    } catch (...) {
                        errors[static_cast<std::size_t>(k)] = std::current_exception();
                    }
                });
            }
        }
        for (const auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
        for (std::size_t i : order) {
            accumulate(ref, acc, counts, results[i], views[i], W, C);
        }
    }

    LatentTensor next(H, W, C);
    auto out = next.samples();
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            const int c = counts.at(h, w);
            if (c == 0) {
                throw ConfigError("joint_denoise: latent cell (" + std::to_string(h) + ", " + std::to_string(w) +
                                  ") is not covered by any view");
            }
            const std::size_t base = (static_cast<std::size_t>(h) * W + w) * C;
            for (int ch = 0; ch < C; ++ch) {
                out[base + ch] = ref[base + ch] + acc[base + ch] / c;
            }
        }
    }
    if (!next.all_finite()) {
        throw BackendError("joint_denoise: non-finite latent after step t=" + std::to_string(t));
    }
    return {std::move(next), std::move(counts)};
}

LatentTensor joint_denoise(const LatentTensor& z_start, const StepPlan& plan, std::span<const ViewRect> views,
                           const ConditioningContext& cond, DenoiserBackend& backend,
                           const JointDenoiseOptions& options) {
    if (views.empty()) {
        throw ConfigError("joint_denoise: empty view list");
    }
    for (std::size_t i = 1; i < plan.timesteps.size(); ++i) {
        if (plan.timesteps[i] >= plan.timesteps[i - 1]) {
            throw ConfigError("joint_denoise: step plan must be strictly decreasing");
        }
    }
    if (!plan.timesteps.empty() && plan.timesteps.back() < 1) {
        throw ConfigError("joint_denoise: step plan timesteps must be >= 1");
    }
    LatentTensor z = z_start;
    JointDenoiseOptions later = options;
    later.on_view_inputs = nullptr;
    for (std::size_t i = 0; i < plan.timesteps.size(); ++i) {
        z = joint_denoise_step(z, plan.timesteps[i], plan.next_after(i), views, cond, backend, i == 0 ? options : later)
                .latent;
    }
    return z;
}

}  // namespace sceneforge
