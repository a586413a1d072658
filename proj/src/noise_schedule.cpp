#include "sceneforge/noise_schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sceneforge {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    alpha_bars_.reserve(betas_.size() + 1);
    alpha_bars_.push_back(1.0);
    double prod = 1.0;
    for (double b : betas_) {
        if (!(b > 0.0 && b < 1.0)) {
            throw ConfigError("noise schedule betas must lie in (0,1)");
        }
        prod *= 1.0 - b;
        alpha_bars_.push_back(prod);
    }
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > train_steps()) {
        throw ConfigError("beta: timestep " + std::to_string(t) + " out of range");
    }
    return betas_[static_cast<std::size_t>(t) - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > train_steps()) {
        throw ConfigError("alpha_bar: timestep " + std::to_string(t) + " out of range");
    }
    return alpha_bars_[static_cast<std::size_t>(t)];
}

NoiseSchedule make_schedule(ScheduleKind kind, int train_steps) {
    if (train_steps < 1) {
        throw ConfigError("make_schedule: train_steps must be >= 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(train_steps));
    switch (kind) {
    case ScheduleKind::scaled_linear: {
        const double lo = std::sqrt(kBetaStart);
        const double hi = std::sqrt(kBetaEnd);
        for (int t = 1; t <= train_steps; ++t) {
            const double frac = train_steps == 1 ? 0.0 : static_cast<double>(t - 1) / (train_steps - 1);
            const double root = lo + frac * (hi - lo);
            betas[static_cast<std::size_t>(t) - 1] = root * root;
        }
        break;
    }
    }
    return NoiseSchedule(std::move(betas));
}

StepPlan make_uniform_plan(int t_start, int steps) {
    if (t_start < 1) {
        throw ConfigError("step plan needs a start timestep >= 1");
    }
    if (steps < 1) {
        throw ConfigError("step plan needs at least one step");
    }
    steps = std::min(steps, t_start);
    StepPlan plan;
    plan.timesteps.reserve(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        plan.timesteps.push_back(t_start - static_cast<int>(static_cast<long long>(i) * t_start / steps));
    }
    return plan;
}

StepPlan make_dense_plan(int t_start) { return make_uniform_plan(t_start, t_start); }

LatentTensor forward_diffuse(const LatentTensor& z0, int t, const NoiseSchedule& schedule, Rng& rng) {
    if (t < 0 || t > schedule.train_steps()) {
        throw ConfigError("forward_diffuse: timestep " + std::to_string(t) + " outside [0, " +
                          std::to_string(schedule.train_steps()) + "]");
    }
    if (t == 0) {
        return z0;
    }
    const double abar = schedule.alpha_bar(t);
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    LatentTensor out = z0;
    for (double& v : out.samples()) {
        v = signal * v + noise * rng.standard_normal();
    }
    return out;
}

void ddim_update(std::span<const double> x_t, std::span<const double> z0_hat, int t, int t_next,
                 const NoiseSchedule& schedule, std::span<double> out) {
    const double abar = schedule.alpha_bar(t);
    const double abar_next = schedule.alpha_bar(t_next);
    const double sa = std::sqrt(abar);
    const double sn = std::sqrt(1.0 - abar);
    const double sa_next = std::sqrt(abar_next);
    const double sn_next = std::sqrt(1.0 - abar_next);
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        const double eps_hat = (x_t[i] - sa * z0_hat[i]) / sn;
        out[i] = sa_next * z0_hat[i] + sn_next * eps_hat;
    }
}

}  // namespace sceneforge
