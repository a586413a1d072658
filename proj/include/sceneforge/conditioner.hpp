#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sceneforge/core_types.hpp"
#include "sceneforge/view_scheduler.hpp"

namespace sceneforge {

/// Normalized keypoint; confidence 0 marks it absent.
struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    double confidence = 0.0;
};

inline constexpr int kPoseKeypoints = 18;
using PoseKeypoints = std::array<Keypoint, kPoseKeypoints>;

/// OpenPose-18 limb pairs (0-based keypoint indices) and per-limb colours.
struct Limb {
    int from;
    int to;
};
extern const std::array<Limb, 17> kPoseLimbs;
extern const std::array<std::array<std::uint8_t, 3>, 18> kPoseColors;

struct PixelRect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool operator==(const PixelRect&) const = default;
};

/// Optional part-level description (head, body) attached to an instance.
struct PartSpec {
    std::string name;
    std::string text;
    std::optional<std::string> mask_path;
};

/// One human instance as described in the scene document.
struct InstanceSpec {
    int id = 0;
    std::string text;
    PixelRect bbox;
    PoseKeypoints keypoints{};
    std::optional<std::string> mask_path;
    std::vector<PartSpec> parts;
};

/// Per-view conditioning data for one instance on the current latent grid.
struct InstanceConditioning {
    int id = 0;
    std::string text;
    LatentMask mask;
    struct Part {
        std::string text;
        LatentMask mask;
    };
    std::vector<Part> parts;
};

struct ConditionOptions {
    bool use_parts = false;
    /// Whitespace-delimited words allowed in a view prompt; 0 disables the guard.
    std::size_t token_budget = 77;
};

struct ViewInputs {
    LatentTensor latent;
    ImageBuffer pose;
    std::string text;
    bool truncated = false;
};

/// Rasterizes every instance skeleton onto a black RGB canvas in ascending id order.
ImageBuffer render_pose_map(std::span<const InstanceSpec> instances, int canvas_w, int canvas_h,
                            int stick_width = 4);

/// Max-pool downscale: a latent cell is set iff any pixel in its factor x factor block is nonzero.
LatentMask downscale_mask(const ImageBuffer& image_mask, int factor);
LatentMask downscale_mask(const BinaryMask& pixel_mask, int factor);

LatentTensor crop_latent(const LatentTensor& z, const ViewRect& view);
void paste_latent(LatentTensor& z, const LatentTensor& crop, const ViewRect& view);
ImageBuffer crop_image(const ImageBuffer& img, const PixelRect& rect);

/// Prompt for a view: ", "-joined texts of instances touching the view (ascending id), or the global text.
std::string compose_view_text(const ViewRect& view, std::span<const InstanceConditioning> instances,
                              const std::string& global_text, const ConditionOptions& options = {},
                              bool* truncated = nullptr);

ViewInputs view_inputs(const ViewRect& view, const LatentTensor& z_t, const ImageBuffer& pose_map,
                       std::span<const InstanceConditioning> instances, const std::string& global_text,
                       int factor, const ConditionOptions& options = {});

}  // namespace sceneforge
