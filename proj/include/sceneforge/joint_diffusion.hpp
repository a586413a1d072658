#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sceneforge/backends.hpp"
#include "sceneforge/conditioner.hpp"
#include "sceneforge/noise_schedule.hpp"
#include "sceneforge/view_scheduler.hpp"

namespace sceneforge {

/// Everything a view needs besides its latent crop.
struct ConditioningContext {
    /// Pose raster at latent dims x factor; an empty buffer means "no pose" (black crops).
    ImageBuffer pose_map;
    std::vector<InstanceConditioning> instances;
    std::string global_text;
    int factor = 8;
    ConditionOptions options;
};

struct JointDenoiseOptions {
    /// Worker threads for per-view backend calls; honoured only for concurrent backends.
    int workers = 1;
    /// Called once per view with the composed prompt on the first step (for logging).
    std::function<void(std::size_t view_index, const ViewInputs&)> on_view_inputs;
};

struct JointStepResult {
    LatentTensor latent;
    CoverageMap counts;
};

/// One averaging step t -> t_next over every view. Views are merged in canonical
/// (h1, w1) order so the result does not depend on list order.
JointStepResult joint_denoise_step(const LatentTensor& z_t, int t, int t_next, std::span<const ViewRect> views,
                                   const ConditioningContext& cond, DenoiserBackend& backend,
                                   const JointDenoiseOptions& options = {});

/// Runs the whole plan from z at plan.timesteps.front() down to t = 0.
LatentTensor joint_denoise(const LatentTensor& z_start, const StepPlan& plan, std::span<const ViewRect> views,
                           const ConditioningContext& cond, DenoiserBackend& backend,
                           const JointDenoiseOptions& options = {});

}  // namespace sceneforge
