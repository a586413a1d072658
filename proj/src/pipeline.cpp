#include "sceneforge/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>

#include "sceneforge/png_io.hpp"

namespace sceneforge {

namespace {

void log_line(const PipelineOptions& options, const std::string& msg) {
    if (options.log) {
        options.log(msg);
    }
}

std::string dims(int w, int h) { return std::to_string(w) + "x" + std::to_string(h); }

// Re-throws `e` with a prefix, keeping its category (and so its exit code).
[[noreturn]] void rethrow_with(const std::string& prefix) {
    try {
        throw;
    } catch (const ConfigError& e) {
        throw ConfigError(prefix + e.what());
    } catch (const BackendError& e) {
        throw BackendError(prefix + e.what());
    } catch (const IoError& e) {
        throw IoError(prefix + e.what());
    } catch (const Error& e) {
        throw Error(prefix + e.what());
    }
}

ImageBuffer pad_replicate(const ImageBuffer& img, int w, int h) {
    if (img.width() == w && img.height() == h) {
        return img;
    }
    ImageBuffer out(w, h, img.channels());
    for (int y = 0; y < h; ++y) {
        const int sy = std::min(y, img.height() - 1);
        for (int x = 0; x < w; ++x) {
            const int sx = std::min(x, img.width() - 1);
            for (int c = 0; c < img.channels(); ++c) {
                out.at(x, y, c) = img.at(sx, sy, c);
            }
        }
    }
    return out;
}

ImageBuffer pad_zero(const ImageBuffer& img, int w, int h) {
    if (img.empty() || (img.width() == w && img.height() == h)) {
        return img;
    }
    ImageBuffer out(w, h, img.channels());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                out.at(x, y, c) = img.at(x, y, c);
            }
        }
    }
    return out;
}

BinaryMask pad_mask(const BinaryMask& m, int w, int h) {
    BinaryMask out(h, w);
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (m.at(y, x)) {
                out.set(y, x);
            }
        }
    }
    return out;
}

ImageBuffer crop_top_left(const ImageBuffer& img, int w, int h) {
    if (img.width() == w && img.height() == h) {
        return img;
    }
    return crop_image(img, PixelRect{0, 0, w, h});
}

// Chebyshev dilation by `r` via two separable running-window passes.
BinaryMask dilate(const BinaryMask& m, int r) {
    if (r <= 0) {
        return m;
    }
    const int h = m.height();
    const int w = m.width();
    BinaryMask rows(h, w);
    for (int y = 0; y < h; ++y) {
        int last = -1 - r;  // last set column seen so far
        std::vector<int> next(static_cast<std::size_t>(w) + 1, w + r + 1);
        for (int x = w - 1; x >= 0; --x) {
            next[static_cast<std::size_t>(x)] = m.at(y, x) ? x : next[static_cast<std::size_t>(x) + 1];
        }
        for (int x = 0; x < w; ++x) {
            if (m.at(y, x)) {
                last = x;
            }
            if (x - last <= r || next[static_cast<std::size_t>(x)] - x <= r) {
                rows.set(y, x);
            }
        }
    }
    BinaryMask out(h, w);
    for (int x = 0; x < w; ++x) {
        int last = -1 - r;
        std::vector<int> next(static_cast<std::size_t>(h) + 1, h + r + 1);
        for (int y = h - 1; y >= 0; --y) {
            next[static_cast<std::size_t>(y)] = rows.at(y, x) ? y : next[static_cast<std::size_t>(y) + 1];
        }
        for (int y = 0; y < h; ++y) {
            if (rows.at(y, x)) {
                last = y;
            }
            if (y - last <= r || next[static_cast<std::size_t>(y)] - y <= r) {
                out.set(y, x);
            }
        }
    }
    return out;
}

std::optional<PixelRect> nonzero_bounds(const ImageBuffer& mask) {
    int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.at(x, y) != 0) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
        }
    }
    if (x1 < 0) {
        return std::nullopt;
    }
    return PixelRect{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

BinaryMask load_mask(const std::string& path, int w, int h) {
    const ImageBuffer img = read_png(path);
    if (img.width() != w || img.height() != h) {
        throw ConfigError("mask " + path + " is " + dims(img.width(), img.height()) + ", canvas is " + dims(w, h));
    }
    ImageBuffer gray = img.channels() == 1 ? img : to_gray(img);
    return mask_from_image(gray);
}

BinaryMask intersect_rows(const BinaryMask& m, int y_begin, int y_end) {
    BinaryMask out(m.height(), m.width());
    for (int y = std::max(0, y_begin); y < std::min(m.height(), y_end); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            if (m.at(y, x)) {
                out.set(y, x);
            }
        }
    }
    return out;
}

// Part masks from the scene file, or split at the neck row when none is given.
std::vector<InstanceLayer::Part> build_parts(const InstanceSpec& inst, const BinaryMask& mask) {
    std::vector<InstanceLayer::Part> parts;
    const Keypoint& neck = inst.keypoints[1];
    const int neck_y = neck.confidence > 0.0 ? static_cast<int>(std::lround(inst.bbox.y + neck.y * inst.bbox.h))
                                             : inst.bbox.y + inst.bbox.h / 4;
    for (const PartSpec& part : inst.parts) {
        BinaryMask m;
        if (part.mask_path) {
            m = load_mask(*part.mask_path, mask.width(), mask.height());
        } else if (part.name == "head") {
            m = intersect_rows(mask, 0, neck_y);
        } else if (part.name == "body") {
            m = intersect_rows(mask, neck_y, mask.height());
        } else {
            m = mask;
        }
        parts.push_back({part.text, std::move(m)});
    }
    return parts;
}

std::vector<InstanceConditioning> latent_conditioning(const std::vector<InstanceLayer>& layers, int padded_w,
                                                      int padded_h, int factor) {
    std::vector<InstanceConditioning> out;
    for (const InstanceLayer& layer : layers) {
        InstanceConditioning c;
        c.id = layer.id;
        c.text = layer.text;
        c.mask = downscale_mask(pad_mask(layer.mask, padded_w, padded_h), factor);
        for (const auto& part : layer.parts) {
            c.parts.push_back({part.text, downscale_mask(pad_mask(part.mask, padded_w, padded_h), factor)});
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void validate(const SceneSpec& scene) {
    if (scene.canvas_w < 1 || scene.canvas_h < 1) {
        throw ConfigError("canvas dimensions must be positive");
    }
    if (scene.base_res < 1) {
        throw ConfigError("base_res must be positive");
    }
    std::vector<int> ids;
    for (const auto& inst : scene.instances) {
        const PixelRect& b = inst.bbox;
        if (b.w < 1 || b.h < 1 || b.x < 0 || b.y < 0 || b.x + b.w > scene.canvas_w || b.y + b.h > scene.canvas_h) {
            throw ConfigError("instance " + std::to_string(inst.id) + ": placement overflow, bbox [" +
                              std::to_string(b.x) + "," + std::to_string(b.y) + "," + std::to_string(b.w) + "," +
                              std::to_string(b.h) + "] outside canvas " + dims(scene.canvas_w, scene.canvas_h));
        }
        if (inst.text.empty()) {
            throw ConfigError("instance " + std::to_string(inst.id) + ": text must not be empty");
        }
        ids.push_back(inst.id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw ConfigError("instance ids must be unique");
    }
}

void validate(const StageConfig& cfg) {
    if (cfg.alpha_interp < 1) {
        throw ConfigError("alpha_interp must be >= 1");
    }
    if (cfg.alpha_interp == 1 && cfg.t_b == 0) {
        throw ConfigError("alpha_interp=1 with t_b=0 is a no-op stage");
    }
    if (cfg.t_b < 0) {
        throw ConfigError("t_b must be >= 0");
    }
    if (cfg.steps < 1) {
        throw ConfigError("steps must be >= 1");
    }
    PerturbParams p = cfg.perturb;
    p.alpha_interp = cfg.alpha_interp;
    validate(p);
}

// ---------------------------------------------------------------------------

BackendSet make_toy_backends(int view, int factor) {
    BackendSet set;
    set.codec = std::make_shared<ToyCodec>(factor);
    set.generator = std::make_shared<ToyGenerator>(view * factor);
    set.segmenter = std::make_shared<ToySegmenter>();
    set.inpainter = std::make_shared<ToyInpainter>();
    const NoiseSchedule schedule = set.schedule;
    auto denoiser = std::make_shared<ToyDenoiser>(schedule, view, view, set.codec->channels());
    set.denoiser = [denoiser](const StageContext&) { return denoiser; };
    return set;
}

BackendSet make_oracle_backends(int view, int factor) {
    BackendSet set = make_toy_backends(view, factor);
    set.denoiser = [view](const StageContext& ctx) {
        return std::make_shared<OracleDenoiser>(ctx.reference_latent(), *ctx.schedule, view, view);
    };
    return set;
}

SamplingGenerator::SamplingGenerator(std::shared_ptr<LatentCodec> codec, std::shared_ptr<DenoiserBackend> denoiser,
                                     NoiseSchedule schedule, int steps)
    : codec_(std::move(codec)), denoiser_(std::move(denoiser)), schedule_(std::move(schedule)), steps_(steps) {}

ImageBuffer SamplingGenerator::sample(int latent_h, int latent_w, const ImageBuffer& pose, const std::string& text,
                                      std::uint64_t seed) {
    const DenoiserInfo info = denoiser_->info();
    const int f = codec_->factor();
    StrideParams stride{info.view_h, info.view_w, std::max(1, std::min(info.view_h, info.view_w) / 2),
                        std::max(1, std::min(info.view_h, info.view_w) / 2), 1.0};
    const int hz = next_valid_extent(latent_h, info.view_h, stride.s_back);
    const int wz = next_valid_extent(latent_w, info.view_w, stride.s_back);
    const auto views = default_views(hz, wz, stride);

    Rng rng(seed);
    LatentTensor z(hz, wz, codec_->channels());
    for (double& v : z.samples()) {
        v = rng.standard_normal();
    }
    ConditioningContext cond;
    cond.pose_map = pad_zero(pose, wz * f, hz * f);
    cond.global_text = text;
    cond.factor = f;
    const StepPlan plan = make_uniform_plan(schedule_.train_steps(), steps_);
    const LatentTensor z0 = joint_denoise(z, plan, views, cond, *denoiser_);
    return crop_top_left(codec_->decode(z0), latent_w * f, latent_h * f);
}

ImageBuffer SamplingGenerator::instance(const ImageBuffer& pose, const std::string& text, std::uint64_t seed) {
    const int f = codec_->factor();
    if (pose.width() % f != 0 || pose.height() % f != 0) {
        throw ConfigError("sampling generator: pose raster not divisible by codec factor");
    }
    return sample(pose.height() / f, pose.width() / f, pose, text, seed);
}

ImageBuffer SamplingGenerator::background(const std::string& text, int width, int height, std::uint64_t seed) {
    const int f = codec_->factor();
    const int lw = (width + f - 1) / f;
    const int lh = (height + f - 1) / f;
    return crop_top_left(sample(lh, lw, ImageBuffer(), text, seed), width, height);
}

// ---------------------------------------------------------------------------

BinaryMask mask_from_image(const ImageBuffer& img) {
    BinaryMask m(img.height(), img.width());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (img.at(x, y, 0) != 0) {
                m.set(y, x);
            }
        }
    }
    return m;
}

ImageBuffer mask_to_image(const BinaryMask& mask) {
    ImageBuffer img(mask.width(), mask.height(), 1);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            img.at(x, y) = mask.at(y, x) ? 255 : 0;
        }
    }
    return img;
}

BaseResult generate_base(const SceneSpec& scene, const BackendSet& backends, const PipelineOptions& options) {
    validate(scene);
    if (!backends.generator || !backends.segmenter || !backends.inpainter) {
        throw ConfigError("generate_base needs generator, segmenter and inpainter backends");
    }
    const int cw = scene.canvas_w;
    const int ch = scene.canvas_h;
    const int res = scene.base_res;

    std::vector<const InstanceSpec*> order;
    for (const auto& inst : scene.instances) {
        order.push_back(&inst);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

    BaseResult out;
    struct Placed {
        ImageBuffer pixels;  // bbox-sized
        BinaryMask mask;     // canvas-sized
        PixelRect box;
    };
    std::vector<Placed> placed;

    for (const InstanceSpec* inst : order) {
        const std::string who = "instance " + std::to_string(inst->id) + ": ";
        try {
            // Aspect-preserving frame centred in the training-resolution canvas.
            const double scale = 0.9 * res / std::max(inst->bbox.w, inst->bbox.h);
            const int fw = std::max(1, static_cast<int>(std::lround(inst->bbox.w * scale)));
            const int fh = std::max(1, static_cast<int>(std::lround(inst->bbox.h * scale)));
            InstanceSpec framed = *inst;
            framed.bbox = PixelRect{(res - fw) / 2, (res - fh) / 2, fw, fh};
            const ImageBuffer pose = render_pose_map(std::span(&framed, 1), res, res, std::max(2, res / 128));
            const ImageBuffer generated =
                backends.generator->instance(pose, inst->text, Rng::derive(options.seed, 1000 + inst->id));
            if (generated.width() != res || generated.height() != res || generated.channels() != 3) {
                throw BackendError("generator returned " + dims(generated.width(), generated.height()) +
                                   ", expected RGB " + dims(res, res));
            }
            const ImageBuffer seg = backends.segmenter->segment(generated, PixelRect{0, 0, res, res});
            const auto bounds = nonzero_bounds(seg);
            if (!bounds) {
                throw BackendError("segmentation is empty");
            }
            const ImageBuffer crop = crop_image(generated, *bounds);
            const ImageBuffer crop_mask = crop_image(seg, *bounds);
            const PixelRect& box = inst->bbox;
            Placed p{lanczos_resize(crop, box.w, box.h), BinaryMask(ch, cw), box};
            const ImageBuffer small_mask = nearest_resize(crop_mask, box.w, box.h);
            BinaryMask given;
            if (inst->mask_path) {
                given = load_mask(*inst->mask_path, cw, ch);
            }
            for (int y = 0; y < box.h; ++y) {
                for (int x = 0; x < box.w; ++x) {
                    const bool on = inst->mask_path ? given.at(box.y + y, box.x + x) : small_mask.at(x, y) != 0;
                    if (on) {
                        p.mask.set(box.y + y, box.x + x);
                    }
                }
            }
            out.instance_images.push_back(generated);
            out.layers.push_back({inst->id, inst->text, p.mask, build_parts(*inst, p.mask)});
            placed.push_back(std::move(p));
        } catch (const Error&) {
            rethrow_with(who);
        }
    }

    try {
        out.background = backends.generator->background(scene.background_text, cw, ch,
                                                        Rng::derive(options.seed, 999));
    } catch (const Error&) {
        rethrow_with("background: ");
    }
    if (out.background.width() != cw || out.background.height() != ch || out.background.channels() != 3) {
        throw BackendError("background: generator returned wrong dimensions");
    }

    ImageBuffer collage = out.background;
    if (!placed.empty()) {
        BinaryMask all(ch, cw);
        for (const auto& p : placed) {
            for (int y = 0; y < ch; ++y) {
                for (int x = 0; x < cw; ++x) {
                    if (p.mask.at(y, x)) {
                        all.set(y, x);
                    }
                }
            }
        }
        const ImageBuffer holes = mask_to_image(dilate(all, options.hole_dilation));
        try {
            collage = backends.inpainter->inpaint(collage, holes);
        } catch (const Error&) {
            rethrow_with("background inpainting: ");
        }
    }
    for (const auto& p : placed) {
        for (int y = 0; y < p.box.h; ++y) {
            for (int x = 0; x < p.box.w; ++x) {
                if (!p.mask.at(p.box.y + y, p.box.x + x)) {
                    continue;
                }
                for (int c = 0; c < 3; ++c) {
                    collage.at(p.box.x + x, p.box.y + y, c) = p.pixels.at(x, y, c);
                }
            }
        }
    }
    out.collage = collage;
    out.image = tone_normalize(collage, options.clahe);
    out.pose_map = render_pose_map(scene.instances, cw, ch);
    log_line(options, "base: " + dims(cw, ch) + ", " + std::to_string(placed.size()) + " instances");
    return out;
}

// ---------------------------------------------------------------------------

StageGeometry stage_geometry(int in_w, int in_h, const StageConfig& cfg, int factor) {
    StageGeometry g;
    g.out_w = in_w * cfg.alpha_interp;
    g.out_h = in_h * cfg.alpha_interp;
    g.latent_w = next_valid_extent((g.out_w + factor - 1) / factor, cfg.stride.view_w, cfg.stride.s_back);
    g.latent_h = next_valid_extent((g.out_h + factor - 1) / factor, cfg.stride.view_h, cfg.stride.s_back);
    g.padded_w = g.latent_w * factor;
    g.padded_h = g.latent_h * factor;
    return g;
}

StageResult enlarge_stage(const ImageBuffer& img, const std::vector<InstanceLayer>& layers,
                          const ImageBuffer& pose_map, const std::string& global_text, const StageConfig& cfg,
                          int stage_index, const BackendSet& backends, const PipelineOptions& options) {
    const std::string where = "stage " + std::to_string(stage_index) + ": ";
    try {
        validate(cfg);
        if (!backends.codec || !backends.denoiser) {
            throw ConfigError("enlargement needs codec and denoiser backends");
        }
        if (img.channels() != 3) {
            throw ConfigError("enlargement expects an RGB image");
        }
        LatentCodec& codec = *backends.codec;
        const int f = codec.factor();
        StageResult out;
        const StageGeometry g = stage_geometry(img.width(), img.height(), cfg, f);
        out.geometry = g;
        validate_stride(g.latent_h, g.latent_w, cfg.stride);

        PerturbParams pp = cfg.perturb;
        pp.alpha_interp = cfg.alpha_interp;
        Rng rng(options.seed ^ static_cast<std::uint64_t>(stage_index));

        out.probability = build_probability_map(img, pp);
        PerturbResult pert = adaptive_pixel_perturb(img, out.probability, pp, rng);
        out.replaced = pert.replaced;
        out.perturbed = std::move(pert.image);

        const LatentTensor z0 = codec.encode(pad_replicate(out.perturbed, g.padded_w, g.padded_h));
        if (z0.height() != g.latent_h || z0.width() != g.latent_w) {
            throw BackendError("codec produced a " + dims(z0.width(), z0.height()) + " latent, expected " +
                               dims(g.latent_w, g.latent_h));
        }
        const LatentTensor z_tb = forward_diffuse(z0, cfg.t_b, backends.schedule, rng);

        for (const InstanceLayer& layer : layers) {
            InstanceLayer up{layer.id, layer.text, nearest_resize(layer.mask, g.out_w, g.out_h), {}};
            for (const auto& part : layer.parts) {
                up.parts.push_back({part.text, nearest_resize(part.mask, g.out_w, g.out_h)});
            }
            out.layers.push_back(std::move(up));
        }
        out.pose_map = pose_map.empty() ? ImageBuffer() : lanczos_resize(pose_map, g.out_w, g.out_h);

        ConditioningContext cond;
        cond.pose_map = pad_zero(out.pose_map, g.padded_w, g.padded_h);
        cond.instances = latent_conditioning(out.layers, g.padded_w, g.padded_h, f);
        cond.global_text = global_text;
        cond.factor = f;
        cond.options = options.conditioning;

        std::vector<LatentMask> latent_masks;
        for (const auto& c : cond.instances) {
            latent_masks.push_back(c.mask);
        }
        out.schedule = adaptive_views(g.latent_h, g.latent_w, cfg.stride, latent_masks);
        log_line(options, where + dims(img.width(), img.height()) + " -> " + dims(g.out_w, g.out_h) + ", latent " +
                              dims(g.latent_w, g.latent_h) + ", " + std::to_string(out.schedule.count()) +
                              " views, " + std::to_string(out.replaced) + " pixels perturbed");

        LatentTensor z = z_tb;
        if (cfg.t_b > 0) {
            StageContext ctx;
            ctx.stage_index = stage_index;
            ctx.latent_h = g.latent_h;
            ctx.latent_w = g.latent_w;
            ctx.factor = f;
            ctx.schedule = &backends.schedule;
            ctx.reference_latent = [&] {
                return codec.encode(pad_replicate(lanczos_resize(img, g.out_w, g.out_h), g.padded_w, g.padded_h));
            };
            const auto denoiser = backends.denoiser(ctx);
            if (!denoiser) {
                throw ConfigError("denoiser factory returned no backend");
            }
            const DenoiserInfo info = denoiser->info();
            if (info.view_h != cfg.stride.view_h || info.view_w != cfg.stride.view_w) {
                throw ConfigError("stride view size " + dims(cfg.stride.view_w, cfg.stride.view_h) +
                                  " differs from denoiser view " + dims(info.view_w, info.view_h));
            }
            if (info.channels != z.channels()) {
                throw ConfigError("denoiser expects " + std::to_string(info.channels) + " latent channels, codec has " +
                                  std::to_string(z.channels()));
            }
            JointDenoiseOptions jopts;
            jopts.workers = options.workers;
            z = joint_denoise(z_tb, make_uniform_plan(cfg.t_b, cfg.steps), out.schedule.views, cond, *denoiser, jopts);
        }
        const ImageBuffer decoded = codec.decode(z);
        if (decoded.width() != g.padded_w || decoded.height() != g.padded_h) {
            throw BackendError("codec decoded to " + dims(decoded.width(), decoded.height()) + ", expected " +
                               dims(g.padded_w, g.padded_h));
        }
        out.image = crop_top_left(decoded, g.out_w, g.out_h);
        if (options.tone_each_stage) {
            out.image = tone_normalize(out.image, options.clahe);
        }
        return out;
    } catch (const Error&) {
        rethrow_with(where);
    }
}

// ---------------------------------------------------------------------------

std::string format_schedule(const AdaptiveSchedule& schedule, int latent_h, int latent_w, const StrideParams& p) {
    std::ostringstream s;
    s << "# latent " << latent_h << "x" << latent_w << " view " << p.view_h << "x" << p.view_w << " s_back "
      << p.s_back << " s_inst " << p.s_inst << " beta_over " << p.beta_over << "\n";
    s << "# views " << schedule.count() << " default " << schedule.default_count << " refined "
      << schedule.refined_default_views << "\n";
    s << "# h1 h2 w1 w2\n";
    for (const ViewRect& v : schedule.views) {
        s << v.h1 << " " << v.h2 << " " << v.w1 << " " << v.w2 << "\n";
    }
    return s.str();
}

ImageBuffer coverage_heatmap(const CoverageMap& counts) {
    static constexpr std::array<std::array<double, 3>, 5> ramp = {{
        {40, 30, 120}, {20, 110, 190}, {40, 180, 110}, {230, 210, 40}, {230, 60, 30},
    }};
    ImageBuffer img(counts.width, counts.height, 3);
    const int top = std::max(1, counts.max());
    for (int h = 0; h < counts.height; ++h) {
        for (int w = 0; w < counts.width; ++w) {
            const int c = counts.at(h, w);
            if (c <= 0) {
                continue;
            }
            const double t = top > 1 ? static_cast<double>(c - 1) / (top - 1) : 0.0;
            const double pos = t * (ramp.size() - 1);
            const auto i = std::min(static_cast<std::size_t>(pos), ramp.size() - 2);
            const double frac = pos - static_cast<double>(i);
            for (int k = 0; k < 3; ++k) {
                const auto ku = static_cast<std::size_t>(k);
                img.at(w, h, k) =
                    static_cast<std::uint8_t>(std::lround((1 - frac) * ramp[i][ku] + frac * ramp[i + 1][ku]));
            }
        }
    }
    return img;
}

ImageBuffer probability_image(const ProbabilityMap& map, double p_max) {
    ImageBuffer img(map.width(), map.height(), 1);
    const double scale = p_max > 0.0 ? 255.0 / p_max : 0.0;
    for (int y = 0; y < map.height(); ++y) {
        for (int x = 0; x < map.width(); ++x) {
            img.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(map.at(x, y) * scale), 0L, 255L));
        }
    }
    return img;
}

RunResult run(const SceneSpec& scene, const std::vector<StageConfig>& stages, const BackendSet& backends,
              const PipelineOptions& options) {
    RunResult result;
    result.base = generate_base(scene, backends, options);
    auto& arts = result.artifacts;
    arts.push_back({"base/background.png", result.base.background});
    arts.push_back({"base/collage.png", result.base.collage});
    arts.push_back({"base/base.png", result.base.image});
    arts.push_back({"base/pose_map.png", result.base.pose_map});
    for (std::size_t i = 0; i < result.base.layers.size(); ++i) {
        const std::string id = std::to_string(result.base.layers[i].id);
        arts.push_back({"base/instance_" + id + ".png", result.base.instance_images[i]});
        arts.push_back({"base/mask_" + id + ".png", mask_to_image(result.base.layers[i].mask)});
    }

    std::ostringstream summary;
    summary << "{\n  \"seed\": " << options.seed << ",\n  \"base\": [" << result.base.image.width() << ", "
            << result.base.image.height() << "],\n  \"stages\": [";

    ImageBuffer current = result.base.image;
    std::vector<InstanceLayer> layers = result.base.layers;
    ImageBuffer pose = result.base.pose_map;
    for (std::size_t k = 0; k < stages.size(); ++k) {
        const int index = static_cast<int>(k) + 1;
        StageResult st =
            enlarge_stage(current, layers, pose, scene.global_text, stages[k], index, backends, options);
        const std::string dir = "stage_" + std::to_string(index) + "/";
        const StageGeometry& g = st.geometry;
        arts.push_back({dir + "probability_map.png", probability_image(st.probability, stages[k].perturb.p_max)});
        arts.push_back({dir + "perturbed.png", st.perturbed});
        arts.push_back({dir + "schedule.txt", format_schedule(st.schedule, g.latent_h, g.latent_w, stages[k].stride)});
        arts.push_back({dir + "coverage.png", coverage_heatmap(coverage_counts(st.schedule.views, g.latent_h,
                                                                                g.latent_w))});
        arts.push_back({dir + "output.png", st.image});
        summary << (k ? ", " : "") << "\n    {\"out\": [" << g.out_w << ", " << g.out_h << "], \"latent\": ["
                << g.latent_h << ", " << g.latent_w << "], \"views\": " << st.schedule.count()
                << ", \"replaced\": " << st.replaced << "}";

        current = st.image;
        layers = st.layers;
        pose = st.pose_map;
        result.stages.push_back(std::move(st));
    }
    summary << (stages.empty() ? "" : "\n  ") << "]\n}\n";
    arts.push_back({"summary.json", summary.str()});
    arts.push_back({"final.png", current});
    result.final_image = std::move(current);
    return result;
}

// ---------------------------------------------------------------------------

std::string to_string(StridePolicy policy) {
    switch (policy) {
        case StridePolicy::fixed_inst:
            return "fixed s_inst";
        case StridePolicy::fixed_back:
            return "fixed s_back";
        case StridePolicy::adaptive:
            return "adaptive";
    }
    return "?";
}

const PolicyCost& FlopsReport::at(StridePolicy p) const {
    for (const auto& c : policies) {
        if (c.policy == p) {
            return c;
        }
    }
    throw Error("flops report has no entry for " + to_string(p));
}

std::string FlopsReport::to_text() const {
    std::ostringstream s;
    s << std::left << std::setw(14) << "policy" << std::setw(24) << "views per stage" << std::right << std::setw(16)
      << "total" << std::setw(10) << "ratio" << "\n";
    for (const auto& c : policies) {
        std::string views;
        for (std::size_t i = 0; i < c.views_per_stage.size(); ++i) {
            views += (i ? "," : "") + std::to_string(c.views_per_stage[i]);
        }
        s << std::left << std::setw(14) << to_string(c.policy) << std::setw(24) << views << std::right
          << std::setw(16) << std::fixed << std::setprecision(1) << c.total << std::setw(10)
          << std::setprecision(3) << c.ratio_to_fixed_inst << "\n";
    }
    return s.str();
}

FlopsReport estimate_flops(std::span<const StageWorkload> stages, const FlopsModel& model) {
    if (model.view_step_cost < 0 || model.encode_cost_per_pixel < 0 || model.decode_cost_per_pixel < 0) {
        throw ConfigError("flops model costs must be nonnegative");
    }
    FlopsReport report;
    for (StridePolicy policy : {StridePolicy::fixed_inst, StridePolicy::fixed_back, StridePolicy::adaptive}) {
        PolicyCost cost;
        cost.policy = policy;
        for (const StageWorkload& st : stages) {
            const StrideParams& p = st.stride;
            std::size_t views = 0;
            switch (policy) {
                case StridePolicy::fixed_inst:
                    validate_stride(st.latent_h, st.latent_w, p);
                    views = fixed_stride_views(st.latent_h, st.latent_w, p.view_h, p.view_w, p.s_inst).size();
                    break;
                case StridePolicy::fixed_back:
                    views = default_views(st.latent_h, st.latent_w, p).size();
                    break;
                case StridePolicy::adaptive:
                    views = adaptive_views(st.latent_h, st.latent_w, p, std::span(&st.mask, 1)).count();
                    break;
            }
            cost.views_per_stage.push_back(views);
            const double pixels = static_cast<double>(st.latent_h) * st.latent_w * st.factor * st.factor;
            cost.total += static_cast<double>(views) * st.plan_steps * model.view_step_cost +
                          pixels * (model.encode_cost_per_pixel + model.decode_cost_per_pixel);
        }
        report.policies.push_back(std::move(cost));
    }
    const double base = report.policies.front().total;
    for (auto& c : report.policies) {
        c.ratio_to_fixed_inst = base > 0.0 ? c.total / base : 0.0;
    }
    return report;
}

std::vector<StageWorkload> plan_workloads(const SceneSpec& scene, const std::vector<StageConfig>& stages, int factor) {
    validate(scene);
    std::vector<StageWorkload> out;
    int w = scene.canvas_w;
    int h = scene.canvas_h;
    int scale = 1;
    for (const StageConfig& cfg : stages) {
        validate(cfg);
        const StageGeometry g = stage_geometry(w, h, cfg, factor);
        scale *= cfg.alpha_interp;
        BinaryMask pixels(g.padded_h, g.padded_w);
        for (const auto& inst : scene.instances) {
            BinaryMask m;
            if (inst.mask_path) {
                m = nearest_resize(load_mask(*inst.mask_path, scene.canvas_w, scene.canvas_h), g.out_w, g.out_h);
            } else {
                m = BinaryMask(g.out_h, g.out_w);
                for (int y = inst.bbox.y * scale; y < (inst.bbox.y + inst.bbox.h) * scale; ++y) {
                    for (int x = inst.bbox.x * scale; x < (inst.bbox.x + inst.bbox.w) * scale; ++x) {
                        m.set(y, x);
                    }
                }
            }
            for (int y = 0; y < g.out_h; ++y) {
                for (int x = 0; x < g.out_w; ++x) {
                    if (m.at(y, x)) {
                        pixels.set(y, x);
                    }
                }
            }
        }
        StageWorkload wl;
        wl.latent_h = g.latent_h;
        wl.latent_w = g.latent_w;
        wl.factor = factor;
        wl.stride = cfg.stride;
        wl.plan_steps = cfg.t_b > 0 ? static_cast<int>(make_uniform_plan(cfg.t_b, cfg.steps).timesteps.size()) : 0;
        wl.mask = downscale_mask(pixels, factor);
        out.push_back(std::move(wl));
        w = g.out_w;
        h = g.out_h;
    }
    return out;
}

}  // namespace sceneforge
