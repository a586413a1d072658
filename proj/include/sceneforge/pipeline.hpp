#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sceneforge/backends.hpp"
#include "sceneforge/bundle.hpp"
#include "sceneforge/conditioner.hpp"
#include "sceneforge/hf_injection.hpp"
#include "sceneforge/image_ops.hpp"
#include "sceneforge/joint_diffusion.hpp"
#include "sceneforge/noise_schedule.hpp"
#include "sceneforge/view_scheduler.hpp"

namespace sceneforge {

struct StageConfig {
    int alpha_interp = 2;
    int t_b = 700;
    int steps = 50;
    StrideParams stride;
    /// perturb.alpha_interp is overwritten with alpha_interp when the stage runs.
    PerturbParams perturb;
};

struct SceneSpec {
    int canvas_w = 1024;
    int canvas_h = 1024;
    std::string global_text;
    std::string background_text;
    std::vector<InstanceSpec> instances;
    int base_res = 1024;
};

void validate(const SceneSpec& scene);
void validate(const StageConfig& cfg);

/// Everything a denoiser factory may need to build the backend for one stage.
struct StageContext {
    int stage_index = 0;  // 1-based
    int latent_h = 0;
    int latent_w = 0;
    int factor = 8;
    /// Encodes the padded Lanczos upsample of the stage input on demand.
    std::function<LatentTensor()> reference_latent;
    const NoiseSchedule* schedule = nullptr;
};

using DenoiserFactory = std::function<std::shared_ptr<DenoiserBackend>(const StageContext&)>;

struct BackendSet {
    std::shared_ptr<LatentCodec> codec;
    std::shared_ptr<ImageGenerator> generator;
    std::shared_ptr<Segmenter> segmenter;
    std::shared_ptr<Inpainter> inpainter;
    DenoiserFactory denoiser;
    NoiseSchedule schedule = make_schedule();
};

/// Toy codec, generator, segmenter, inpainter and denoiser.
BackendSet make_toy_backends(int view = 128, int factor = 8);
/// As toy, but every stage denoises with the oracle targeting the stage's reference latent.
BackendSet make_oracle_backends(int view = 128, int factor = 8);

/// Generates images by sampling a denoiser from pure noise and decoding. Instances use a
/// single view at the denoiser's native size; backgrounds tile the canvas with joint diffusion.
class SamplingGenerator final : public ImageGenerator {
public:
    SamplingGenerator(std::shared_ptr<LatentCodec> codec, std::shared_ptr<DenoiserBackend> denoiser,
                      NoiseSchedule schedule, int steps = 50);
    ImageBuffer instance(const ImageBuffer& pose, const std::string& text, std::uint64_t seed) override;
    ImageBuffer background(const std::string& text, int width, int height, std::uint64_t seed) override;

private:
    ImageBuffer sample(int latent_h, int latent_w, const ImageBuffer& pose, const std::string& text,
                       std::uint64_t seed);

    std::shared_ptr<LatentCodec> codec_;
    std::shared_ptr<DenoiserBackend> denoiser_;
    NoiseSchedule schedule_;
    int steps_;
};

struct PipelineOptions {
    std::uint64_t seed = 0;
    int workers = 1;
    ConditionOptions conditioning;
    ClaheParams clahe;
    /// Re-apply tone normalization after every enlargement stage.
    bool tone_each_stage = false;
    /// Pixels of dilation applied to instance masks before background inpainting.
    int hole_dilation = 4;
    std::function<void(const std::string&)> log;
};

/// Pixel-grid instance footprint carried between stages.
struct InstanceLayer {
    int id = 0;
    std::string text;
    BinaryMask mask;
    struct Part {
        std::string text;
        BinaryMask mask;
    };
    std::vector<Part> parts;
};

struct BaseResult {
    ImageBuffer image;
    ImageBuffer collage;  // before tone normalization
    ImageBuffer background;
    ImageBuffer pose_map;
    std::vector<InstanceLayer> layers;
    std::vector<ImageBuffer> instance_images;  // raw generator outputs, ascending id
};

BaseResult generate_base(const SceneSpec& scene, const BackendSet& backends, const PipelineOptions& options);

/// Pixel and latent sizes of one enlargement stage.
struct StageGeometry {
    int out_w = 0;
    int out_h = 0;
    int padded_w = 0;
    int padded_h = 0;
    int latent_w = 0;
    int latent_h = 0;
};

StageGeometry stage_geometry(int in_w, int in_h, const StageConfig& cfg, int factor);

struct StageResult {
    ImageBuffer image;
    ImageBuffer pose_map;
    std::vector<InstanceLayer> layers;
    ProbabilityMap probability;
    ImageBuffer perturbed;
    std::size_t replaced = 0;
    AdaptiveSchedule schedule;
    StageGeometry geometry;
};

StageResult enlarge_stage(const ImageBuffer& img, const std::vector<InstanceLayer>& layers,
                          const ImageBuffer& pose_map, const std::string& global_text, const StageConfig& cfg,
                          int stage_index, const BackendSet& backends, const PipelineOptions& options);

struct RunResult {
    ImageBuffer final_image;
    BaseResult base;
    std::vector<StageResult> stages;
    std::vector<Artifact> artifacts;
};

RunResult run(const SceneSpec& scene, const std::vector<StageConfig>& stages, const BackendSet& backends,
              const PipelineOptions& options);

/// Renders one line per view plus a header describing the grid.
std::string format_schedule(const AdaptiveSchedule& schedule, int latent_h, int latent_w, const StrideParams& params);
/// Coverage counts on a fixed colour ramp; zero coverage is black, every covered cell is non-black.
ImageBuffer coverage_heatmap(const CoverageMap& counts);
/// Probability map scaled so p_max maps to 255.
ImageBuffer probability_image(const ProbabilityMap& map, double p_max);
BinaryMask mask_from_image(const ImageBuffer& img);
ImageBuffer mask_to_image(const BinaryMask& mask);

// ---------------------------------------------------------------------------
// Cost accounting.

struct FlopsModel {
    double view_step_cost = 1.0;
    double encode_cost_per_pixel = 0.0;
    double decode_cost_per_pixel = 0.0;
};

enum class StridePolicy { fixed_inst, fixed_back, adaptive };

std::string to_string(StridePolicy policy);

struct StageWorkload {
    int latent_h = 0;
    int latent_w = 0;
    int factor = 8;
    StrideParams stride;
    int plan_steps = 0;
    /// Union of instance masks on the latent grid.
    LatentMask mask;
};

struct PolicyCost {
    StridePolicy policy = StridePolicy::fixed_inst;
    std::vector<std::size_t> views_per_stage;
    double total = 0.0;
    double ratio_to_fixed_inst = 0.0;
};

struct FlopsReport {
    std::vector<PolicyCost> policies;  // fixed_inst, fixed_back, adaptive
    const PolicyCost& at(StridePolicy p) const;
    std::string to_text() const;
};

FlopsReport estimate_flops(std::span<const StageWorkload> stages, const FlopsModel& model);

/// Workloads of every stage of a scene, with masks rasterized from instance placements.
std::vector<StageWorkload> plan_workloads(const SceneSpec& scene, const std::vector<StageConfig>& stages,
                                          int factor = 8);

}  // namespace sceneforge
