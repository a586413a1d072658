#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sceneforge/conditioner.hpp"
#include "sceneforge/core_types.hpp"
#include "sceneforge/noise_schedule.hpp"
#include "sceneforge/view_scheduler.hpp"

namespace sceneforge {

struct DenoiserInfo {
    std::string name;
    int view_h = 0;
    int view_w = 0;
    int channels = 0;
    /// May step() be called from several threads at once?
    bool concurrent = false;
    /// Identical requests yield identical outputs.
    bool deterministic = true;
};

/// One sampling step for one view: x_t at timestep t -> x at t_next.
struct DenoiseRequest {
    const LatentTensor& latent;
    const ImageBuffer& pose;
    const std::string& text;
    int t = 0;
    int t_next = 0;
    /// Placement of this view on the full latent (for backends that need it).
    ViewRect view;
};

class DenoiserBackend {
public:
    virtual ~DenoiserBackend() = default;
    virtual DenoiserInfo info() const = 0;
    virtual LatentTensor step(const DenoiseRequest& request) = 0;
};

class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual int factor() const = 0;
    virtual int channels() const = 0;
    virtual LatentTensor encode(const ImageBuffer& rgb) = 0;
    virtual ImageBuffer decode(const LatentTensor& z) = 0;
};

/// Returns a single-channel mask, 255 = foreground.
class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual ImageBuffer segment(const ImageBuffer& img, const PixelRect& rect) = 0;
};

/// hole_mask: single channel, nonzero = pixel to synthesize.
class Inpainter {
public:
    virtual ~Inpainter() = default;
    virtual ImageBuffer inpaint(const ImageBuffer& img, const ImageBuffer& hole_mask) = 0;
};

/// Produces instance images at training resolution and scene backgrounds.
class ImageGenerator {
public:
    virtual ~ImageGenerator() = default;
    virtual ImageBuffer instance(const ImageBuffer& pose, const std::string& text, std::uint64_t seed) = 0;
    virtual ImageBuffer background(const std::string& text, int width, int height, std::uint64_t seed) = 0;
};

// ---------------------------------------------------------------------------
// Deterministic toy and oracle implementations.

/// 8x area-average encoder to [-1,1]; Lanczos decoder back to [0,255].
class ToyCodec final : public LatentCodec {
public:
    explicit ToyCodec(int factor = 8) : factor_(factor) {}
    int factor() const override { return factor_; }
    int channels() const override { return 3; }
    LatentTensor encode(const ImageBuffer& rgb) override;
    ImageBuffer decode(const LatentTensor& z) override;

private:
    int factor_;
};

/// Linear MMSE estimate of the clean latent over nested box-filter bands, then a deterministic update.
/// Ignores pose and text.
class ToyDenoiser final : public DenoiserBackend {
public:
    ToyDenoiser(NoiseSchedule schedule, int view_h = 128, int view_w = 128, int channels = 3);
    DenoiserInfo info() const override;
    LatentTensor step(const DenoiseRequest& request) override;

private:
    NoiseSchedule schedule_;
    int view_h_;
    int view_w_;
    int channels_;
};

/// Closed-form inversion toward a known target latent. Ignores pose and text.
class OracleDenoiser final : public DenoiserBackend {
public:
    OracleDenoiser(LatentTensor target, NoiseSchedule schedule, int view_h, int view_w);
    DenoiserInfo info() const override;
    LatentTensor step(const DenoiseRequest& request) override;

    const LatentTensor& target() const { return target_; }

private:
    LatentTensor target_;
    NoiseSchedule schedule_;
    int view_h_;
    int view_w_;
};

/// Returns its input unchanged.
class IdentityDenoiser final : public DenoiserBackend {
public:
    IdentityDenoiser(int view_h, int view_w, int channels) : view_h_(view_h), view_w_(view_w), channels_(channels) {}
    DenoiserInfo info() const override { return {"identity", view_h_, view_w_, channels_, true, true}; }
    LatentTensor step(const DenoiseRequest& request) override { return request.latent; }

private:
    int view_h_;
    int view_w_;
    int channels_;
};

inline constexpr std::array<std::uint8_t, 3> kChromaGreen = {0, 255, 0};

/// Chroma-key segmentation inside a placement rectangle.
class ToySegmenter final : public Segmenter {
public:
    explicit ToySegmenter(std::array<std::uint8_t, 3> key = kChromaGreen, int tolerance = 40,
                          bool fallback_only = false)
        : key_(key), tolerance_(tolerance), fallback_only_(fallback_only) {}
    ImageBuffer segment(const ImageBuffer& img, const PixelRect& rect) override;

private:
    std::array<std::uint8_t, 3> key_;
    int tolerance_;
    bool fallback_only_;
};

/// Harmonic (Laplace) fill solved coarse-to-fine with Gauss-Seidel sweeps.
class ToyInpainter final : public Inpainter {
public:
    explicit ToyInpainter(double tolerance = 0.01, int max_sweeps = 20000)
        : tolerance_(tolerance), max_sweeps_(max_sweeps) {}
    ImageBuffer inpaint(const ImageBuffer& img, const ImageBuffer& hole_mask) override;

private:
    double tolerance_;
    int max_sweeps_;
};

/// Renders instances as text-coloured pose silhouettes on a chroma-green field; backgrounds
/// as text-coloured gradients with seeded texture.
class ToyGenerator final : public ImageGenerator {
public:
    explicit ToyGenerator(int resolution = 1024) : resolution_(resolution) {}
    ImageBuffer instance(const ImageBuffer& pose, const std::string& text, std::uint64_t seed) override;
    ImageBuffer background(const std::string& text, int width, int height, std::uint64_t seed) override;

private:
    int resolution_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);

/// Contract checks that hold for any denoiser: shape preservation, finiteness, and
/// determinism when declared. Returns one message per violation.
std::vector<std::string> check_denoiser_conformance(DenoiserBackend& backend, std::uint64_t seed = 7);

}  // namespace sceneforge
