#pragma once

#include <vector>

#include "sceneforge/core_types.hpp"

namespace sceneforge {

enum class ScheduleKind { scaled_linear };

/// Beta / cumulative-alpha tables, 1-indexed by timestep. alpha_bar(0) == 1 by convention.
class NoiseSchedule {
public:
    NoiseSchedule() = default;
    NoiseSchedule(std::vector<double> betas);

    int train_steps() const { return static_cast<int>(betas_.size()); }
    double beta(int t) const;
    double alpha_bar(int t) const;

    std::span<const double> betas() const { return betas_; }

private:
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;  // [0] == 1
};

inline constexpr double kBetaStart = 0.00085;
inline constexpr double kBetaEnd = 0.012;
inline constexpr int kTrainSteps = 1000;

NoiseSchedule make_schedule(ScheduleKind kind = ScheduleKind::scaled_linear, int train_steps = kTrainSteps);

enum class SamplerKind { deterministic, ancestral };

/// Strictly decreasing timesteps; step i moves timesteps[i] -> timesteps[i+1], the last one moves to 0.
struct StepPlan {
    std::vector<int> timesteps;
    SamplerKind sampler = SamplerKind::deterministic;

    int next_after(std::size_t i) const { return i + 1 < timesteps.size() ? timesteps[i + 1] : 0; }
};

/// `steps` evenly spaced timesteps starting at t_start (clamped to t_start steps at most).
StepPlan make_uniform_plan(int t_start, int steps);
/// Every timestep t_start, t_start-1, ..., 1.
StepPlan make_dense_plan(int t_start);

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps, eps drawn in sample order from rng.
LatentTensor forward_diffuse(const LatentTensor& z0, int t, const NoiseSchedule& schedule, Rng& rng);

/// Closed-form deterministic (eta = 0) update given a clean-latent estimate.
/// Writes x_{t_next} = sqrt(abar_next) z0_hat + sqrt(1 - abar_next) eps_hat.
void ddim_update(std::span<const double> x_t, std::span<const double> z0_hat, int t, int t_next,
                 const NoiseSchedule& schedule, std::span<double> out);

}  // namespace sceneforge
