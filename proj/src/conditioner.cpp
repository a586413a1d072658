#include "sceneforge/conditioner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sceneforge {

const std::array<Limb, 17> kPoseLimbs = {{
    {1, 2}, {1, 5}, {2, 3}, {3, 4}, {5, 6}, {6, 7}, {1, 8}, {8, 9}, {9, 10},
    {1, 11}, {11, 12}, {12, 13}, {1, 0}, {0, 14}, {14, 16}, {0, 15}, {15, 17},
}};

const std::array<std::array<std::uint8_t, 3>, 18> kPoseColors = {{
    {255, 0, 0}, {255, 85, 0}, {255, 170, 0}, {255, 255, 0}, {170, 255, 0}, {85, 255, 0},
    {0, 255, 0}, {0, 255, 85}, {0, 255, 170}, {0, 255, 255}, {0, 170, 255}, {0, 85, 255},
    {0, 0, 255}, {85, 0, 255}, {170, 0, 255}, {255, 0, 255}, {255, 0, 170}, {255, 0, 85},
}};

namespace {

void draw_capsule(ImageBuffer& img, double x0, double y0, double x1, double y1, double radius,
                  const std::array<std::uint8_t, 3>& color) {
    const int xmin = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - radius)));
    const int xmax = std::min(img.width() - 1, static_cast<int>(std::ceil(std::max(x0, x1) + radius)));
    const int ymin = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - radius)));
    const int ymax = std::min(img.height() - 1, static_cast<int>(std::ceil(std::max(y0, y1) + radius)));
    const double dx = x1 - x0;
    const double dy = y1 - y0;
    const double len2 = dx * dx + dy * dy;
    for (int y = ymin; y <= ymax; ++y) {
        for (int x = xmin; x <= xmax; ++x) {
            const double px = x + 0.5;
            const double py = y + 0.5;
            double t = len2 > 0.0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double cx = x0 + t * dx - px;
            const double cy = y0 + t * dy - py;
            if (cx * cx + cy * cy <= radius * radius) {
                for (int c = 0; c < 3; ++c) {
                    img.at(x, y, c) = color[static_cast<std::size_t>(c)];
                }
            }
        }
    }
}

std::size_t count_words(const std::string& s) {
    std::istringstream in(s);
    std::size_t n = 0;
    std::string word;
    while (in >> word) {
        ++n;
    }
    return n;
}

std::string first_words(const std::string& s, std::size_t n) {
    std::istringstream in(s);
    std::string out;
    std::string word;
    for (std::size_t i = 0; i < n && in >> word; ++i) {
        if (!out.empty()) {
            out += ' ';
        }
        out += word;
    }
    return out;
}

bool touches(const LatentMask& mask, const ViewRect& view) {
    for (int h = view.h1; h < view.h2; ++h) {
        for (int w = view.w1; w < view.w2; ++w) {
            if (mask.at(h, w)) {
                return true;
            }
        }
    }
    return false;
}

}  // namespace

ImageBuffer render_pose_map(std::span<const InstanceSpec> instances, int canvas_w, int canvas_h, int stick_width) {
    if (canvas_w < 1 || canvas_h < 1) {
        throw ConfigError("pose canvas dimensions must be positive");
    }
    ImageBuffer canvas(canvas_w, canvas_h, 3);
    std::vector<const InstanceSpec*> order;
    for (const auto& inst : instances) {
        order.push_back(&inst);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

    const double radius = stick_width / 2.0;
    for (const InstanceSpec* inst : order) {
        const PixelRect& box = inst->bbox;
        for (std::size_t li = 0; li < kPoseLimbs.size(); ++li) {
            const Keypoint& a = inst->keypoints[static_cast<std::size_t>(kPoseLimbs[li].from)];
            const Keypoint& b = inst->keypoints[static_cast<std::size_t>(kPoseLimbs[li].to)];
            if (a.confidence <= 0.0 || b.confidence <= 0.0) {
                continue;
            }
            draw_capsule(canvas, box.x + a.x * box.w, box.y + a.y * box.h, box.x + b.x * box.w, box.y + b.y * box.h,
                         radius, kPoseColors[li]);
        }
    }
    return canvas;
}

LatentMask downscale_mask(const BinaryMask& pixel_mask, int factor) {
    if (factor < 1 || pixel_mask.width() % factor != 0 || pixel_mask.height() % factor != 0) {
        throw ConfigError("downscale_mask: mask dims " + std::to_string(pixel_mask.width()) + "x" +
                          std::to_string(pixel_mask.height()) + " not divisible by factor " + std::to_string(factor));
    }
    LatentMask out(pixel_mask.height() / factor, pixel_mask.width() / factor);
    for (int y = 0; y < pixel_mask.height(); ++y) {
        for (int x = 0; x < pixel_mask.width(); ++x) {
            if (pixel_mask.at(y, x)) {
                out.set(y / factor, x / factor);
            }
        }
    }
    return out;
}

LatentMask downscale_mask(const ImageBuffer& image_mask, int factor) {
    if (image_mask.channels() != 1) {
        throw ConfigError("downscale_mask expects a single-channel mask");
    }
    BinaryMask bits(image_mask.height(), image_mask.width());
    for (int y = 0; y < image_mask.height(); ++y) {
        for (int x = 0; x < image_mask.width(); ++x) {
            bits.set(y, x, image_mask.at(x, y) != 0);
        }
    }
    return downscale_mask(bits, factor);
}

LatentTensor crop_latent(const LatentTensor& z, const ViewRect& view) {
    if (view.h1 < 0 || view.w1 < 0 || view.h2 > z.height() || view.w2 > z.width() || view.h1 >= view.h2 ||
        view.w1 >= view.w2) {
        throw ConfigError("view out of latent bounds");
    }
    LatentTensor out(view.height(), view.width(), z.channels());
    const std::size_t row = static_cast<std::size_t>(view.width()) * z.channels();
    for (int h = 0; h < view.height(); ++h) {
        const double* src = &z.samples()[(static_cast<std::size_t>(view.h1 + h) * z.width() + view.w1) * z.channels()];
        std::copy(src, src + row, out.samples().begin() + static_cast<std::ptrdiff_t>(h * row));
    }
    return out;
}

void paste_latent(LatentTensor& z, const LatentTensor& crop, const ViewRect& view) {
    if (crop.height() != view.height() || crop.width() != view.width() || crop.channels() != z.channels()) {
        throw ConfigError("paste_latent: crop shape does not match view");
    }
    const std::size_t row = static_cast<std::size_t>(view.width()) * z.channels();
    for (int h = 0; h < view.height(); ++h) {
        auto src = crop.samples().subspan(h * row, row);
        std::copy(src.begin(), src.end(),
                  z.samples().begin() +
                      static_cast<std::ptrdiff_t>((static_cast<std::size_t>(view.h1 + h) * z.width() + view.w1) * z.channels()));
    }
}

ImageBuffer crop_image(const ImageBuffer& img, const PixelRect& r) {
    if (r.x < 0 || r.y < 0 || r.w < 1 || r.h < 1 || r.x + r.w > img.width() || r.y + r.h > img.height()) {
        throw ConfigError("crop rectangle out of image bounds");
    }
    ImageBuffer out(r.w, r.h, img.channels());
    const std::size_t row = static_cast<std::size_t>(r.w) * img.channels();
    for (int y = 0; y < r.h; ++y) {
        auto src = img.samples().subspan((static_cast<std::size_t>(r.y + y) * img.width() + r.x) * img.channels(), row);
        std::copy(src.begin(), src.end(), out.samples().begin() + static_cast<std::ptrdiff_t>(y * row));
    }
    return out;
}

std::string compose_view_text(const ViewRect& view, std::span<const InstanceConditioning> instances,
                              const std::string& global_text, const ConditionOptions& options, bool* truncated) {
    std::vector<const InstanceConditioning*> order;
    for (const auto& inst : instances) {
        order.push_back(&inst);
    }
    std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->id < b->id; });

    std::string text;
    for (const InstanceConditioning* inst : order) {
        if (!touches(inst->mask, view)) {
            continue;
        }
        if (!text.empty()) {
            text += ", ";
        }
        text += inst->text;
        if (options.use_parts) {
            for (const auto& part : inst->parts) {
                if (touches(part.mask, view)) {
                    text += ", " + part.text;
                }
            }
        }
    }
    if (text.empty()) {
        text = global_text;
    }
    if (truncated != nullptr) {
        *truncated = false;
    }
    if (options.token_budget > 0 && count_words(text) > options.token_budget) {
        text = first_words(text, options.token_budget);
        if (truncated != nullptr) {
            *truncated = true;
        }
    }
    return text;
}

ViewInputs view_inputs(const ViewRect& view, const LatentTensor& z_t, const ImageBuffer& pose_map,
                       std::span<const InstanceConditioning> instances, const std::string& global_text, int factor,
                       const ConditionOptions& options) {
    if (pose_map.width() != z_t.width() * factor || pose_map.height() != z_t.height() * factor) {
        throw ConfigError("pose map dims must equal latent dims x codec factor");
    }
    ViewInputs out;
    out.latent = crop_latent(z_t, view);
    out.pose = crop_image(pose_map, {view.w1 * factor, view.h1 * factor, view.width() * factor, view.height() * factor});
    out.text = compose_view_text(view, instances, global_text, options, &out.truncated);
    return out;
}

}  // namespace sceneforge
