#include "sceneforge/backends.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "sceneforge/image_ops.hpp"

namespace sceneforge {

namespace {

// Box blur with edge replication on a row-major plane, running sums in both passes.
void box_blur_plane(const std::vector<double>& in, int h, int w, int radius, std::vector<double>& out) {
    std::vector<double> tmp(in.size());
    const double norm = 1.0 / (2 * radius + 1);
    for (int i = 0; i < h; ++i) {
        const double* row = in.data() + static_cast<std::size_t>(i) * w;
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
            acc += row[std::clamp(k, 0, w - 1)];
        }
        for (int j = 0; j < w; ++j) {
            tmp[static_cast<std::size_t>(i) * w + j] = acc * norm;
            acc += row[std::min(j + radius + 1, w - 1)] - row[std::max(j - radius, 0)];
        }
    }
    out.assign(in.size(), 0.0);
    for (int j = 0; j < w; ++j) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) {
            acc += tmp[static_cast<std::size_t>(std::clamp(k, 0, h - 1)) * w + j];
        }
        for (int i = 0; i < h; ++i) {
            out[static_cast<std::size_t>(i) * w + j] = acc * norm;
            acc += tmp[static_cast<std::size_t>(std::min(i + radius + 1, h - 1)) * w + j] -
                   tmp[static_cast<std::size_t>(std::max(i - radius, 0)) * w + j];
        }
    }
}

std::array<std::uint8_t, 3> text_color(std::string_view text, std::uint64_t salt) {
    const std::uint64_t h = fnv1a(text) ^ (salt * 0x9e3779b97f4a7c15ULL);
    return {static_cast<std::uint8_t>(h & 0xff), static_cast<std::uint8_t>((h >> 8) & 0xff),
            static_cast<std::uint8_t>((h >> 16) & 0xff)};
}

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------

LatentTensor ToyCodec::encode(const ImageBuffer& rgb) {
    if (rgb.channels() != 3) {
        throw BackendError("toy codec encodes RGB images only");
    }
    if (rgb.width() % factor_ != 0 || rgb.height() % factor_ != 0) {
        throw BackendError("toy codec: image dims " + std::to_string(rgb.width()) + "x" + std::to_string(rgb.height()) +
                           " not divisible by " + std::to_string(factor_));
    }
    const int lh = rgb.height() / factor_;
    const int lw = rgb.width() / factor_;
    LatentTensor z(lh, lw, 3);
    const double norm = 1.0 / (factor_ * factor_);
    for (int i = 0; i < lh; ++i) {
        for (int j = 0; j < lw; ++j) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int y = 0; y < factor_; ++y) {
                    for (int x = 0; x < factor_; ++x) {
                        acc += rgb.at(j * factor_ + x, i * factor_ + y, c);
                    }
                }
                z.at(i, j, c) = acc * norm / 127.5 - 1.0;
            }
        }
    }
    return z;
}

ImageBuffer ToyCodec::decode(const LatentTensor& z) {
    if (z.channels() != 3) {
        throw BackendError("toy codec decodes 3-channel latents only");
    }
    const int w = z.width() * factor_;
    const int h = z.height() * factor_;
    ImageBuffer out(w, h, 3);
    for (int c = 0; c < 3; ++c) {
        RealMap plane(z.width(), z.height());
        for (int i = 0; i < z.height(); ++i) {
            for (int j = 0; j < z.width(); ++j) {
                plane.at(j, i) = (z.at(i, j, c) + 1.0) * 127.5;
            }
        }
        const RealMap up = lanczos_resize(plane, w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                out.at(x, y, c) = clamp_u8(up.at(x, y));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

ToyDenoiser::ToyDenoiser(NoiseSchedule schedule, int view_h, int view_w, int channels)
    : schedule_(std::move(schedule)), view_h_(view_h), view_w_(view_w), channels_(channels) {}

DenoiserInfo ToyDenoiser::info() const { return {"toy", view_h_, view_w_, channels_, true, true}; }

LatentTensor ToyDenoiser::step(const DenoiseRequest& req) {
    if (req.t_next >= req.t) {
        throw BackendError("toy denoiser: t_next must be < t");
    }
    const LatentTensor& x = req.latent;
    const int h = x.height();
    const int w = x.width();
    const double abar = schedule_.alpha_bar(req.t);
    // Observation x / sqrt(abar) = z0 + n, n white with variance s2 per cell.
    const double s2 = (1.0 - abar) / abar;
    const double inv_sa = 1.0 / std::sqrt(abar);

    // Nested box-filter bands; the prior puts equal variance in every octave band.
    constexpr std::array<int, 5> radii = {1, 2, 4, 8, 16};
    constexpr double band_var = 0.02;
    constexpr double coarse_var = 0.15;

    LatentTensor z0_hat(h, w, x.channels());
    std::vector<double> obs(static_cast<std::size_t>(h) * w);
    std::vector<double> finer;
    std::vector<double> coarser;
    std::vector<double> est;
    for (int c = 0; c < x.channels(); ++c) {
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                obs[static_cast<std::size_t>(i) * w + j] = x.at(i, j, c) * inv_sa;
            }
        }
        est.assign(obs.size(), 0.0);
        finer = obs;
        double finer_window = 1.0;
        for (int r : radii) {
            box_blur_plane(obs, h, w, r, coarser);
            const double window = static_cast<double>((2 * r + 1) * (2 * r + 1));
            const double noise = s2 * (1.0 / finer_window - 1.0 / window);
            const double gain = band_var / (band_var + noise);
            for (std::size_t k = 0; k < est.size(); ++k) {
                est[k] += gain * (finer[k] - coarser[k]);
            }
            std::swap(finer, coarser);
            finer_window = window;
        }
        const double gain = coarse_var / (coarse_var + s2 / finer_window);
        for (int i = 0; i < h; ++i) {
            for (int j = 0; j < w; ++j) {
                const std::size_t k = static_cast<std::size_t>(i) * w + j;
                z0_hat.at(i, j, c) = std::clamp(est[k] + gain * finer[k], -1.0, 1.0);
            }
        }
    }
    LatentTensor out(x.height(), x.width(), x.channels());
    ddim_update(x.samples(), z0_hat.samples(), req.t, req.t_next, schedule_, out.samples());
    return out;
}

// ---------------------------------------------------------------------------

OracleDenoiser::OracleDenoiser(LatentTensor target, NoiseSchedule schedule, int view_h, int view_w)
    : target_(std::move(target)), schedule_(std::move(schedule)), view_h_(view_h), view_w_(view_w) {}

DenoiserInfo OracleDenoiser::info() const { return {"oracle", view_h_, view_w_, target_.channels(), true, true}; }

LatentTensor OracleDenoiser::step(const DenoiseRequest& req) {
    if (req.t_next >= req.t) {
        throw BackendError("oracle denoiser: t_next must be < t");
    }
    const ViewRect& v = req.view;
    if (v.h2 > target_.height() || v.w2 > target_.width() || v.height() != req.latent.height() ||
        v.width() != req.latent.width() || req.latent.channels() != target_.channels()) {
        throw BackendError("oracle denoiser: view is not covered by the target latent");
    }
    const LatentTensor z_star = crop_latent(target_, v);
    LatentTensor out(req.latent.height(), req.latent.width(), req.latent.channels());
    // eps_hat inverts the forward process exactly; z0_hat is recomputed from it.
    const double sa = std::sqrt(schedule_.alpha_bar(req.t));
    const double sn = std::sqrt(1.0 - schedule_.alpha_bar(req.t));
    std::vector<double> z0_hat(req.latent.size());
    const auto x = req.latent.samples();
    const auto target = z_star.samples();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double eps_hat = (x[i] - sa * target[i]) / sn;
        z0_hat[i] = (x[i] - sn * eps_hat) / sa;
    }
    ddim_update(x, z0_hat, req.t, req.t_next, schedule_, out.samples());
    return out;
}

// ---------------------------------------------------------------------------

ImageBuffer ToySegmenter::segment(const ImageBuffer& img, const PixelRect& r) {
    if (r.x < 0 || r.y < 0 || r.w < 1 || r.h < 1 || r.x + r.w > img.width() || r.y + r.h > img.height()) {
        throw BackendError("toy segmenter: rectangle outside image");
    }
    ImageBuffer mask(img.width(), img.height(), 1);
    bool any = false;
    if (!fallback_only_ && img.channels() == 3) {
        for (int y = r.y; y < r.y + r.h; ++y) {
            for (int x = r.x; x < r.x + r.w; ++x) {
                int diff = 0;
                for (int c = 0; c < 3; ++c) {
                    diff = std::max(diff, std::abs(static_cast<int>(img.at(x, y, c)) - key_[static_cast<std::size_t>(c)]));
                }
                if (diff > tolerance_) {
                    mask.at(x, y) = 255;
                    any = true;
                }
            }
        }
    }
    if (!any) {
        for (int y = r.y; y < r.y + r.h; ++y) {
            for (int x = r.x; x < r.x + r.w; ++x) {
                mask.at(x, y) = 255;
            }
        }
    }
    return mask;
}

// ---------------------------------------------------------------------------

namespace {

struct FillGrid {
    int w = 0;
    int h = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> known;
};

double gauss_seidel(FillGrid& g, double tolerance, int max_sweeps) {
    double delta = 0.0;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        delta = 0.0;
        for (int y = 0; y < g.h; ++y) {
            for (int x = 0; x < g.w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * g.w + x;
                if (g.known[i]) {
                    continue;
                }
                double acc = 0.0;
                int n = 0;
                if (x > 0) { acc += g.values[i - 1]; ++n; }
                if (x + 1 < g.w) { acc += g.values[i + 1]; ++n; }
                if (y > 0) { acc += g.values[i - static_cast<std::size_t>(g.w)]; ++n; }
                if (y + 1 < g.h) { acc += g.values[i + static_cast<std::size_t>(g.w)]; ++n; }
                const double v = acc / n;
                delta = std::max(delta, std::abs(v - g.values[i]));
                g.values[i] = v;
            }
        }
        if (delta < tolerance) {
            break;
        }
    }
    return delta;
}

void solve_fill(FillGrid& g, double tolerance, int max_sweeps) {
    if (g.w >= 8 && g.h >= 8) {
        FillGrid coarse;
        coarse.w = (g.w + 1) / 2;
        coarse.h = (g.h + 1) / 2;
        coarse.values.assign(static_cast<std::size_t>(coarse.w) * coarse.h, 0.0);
        coarse.known.assign(coarse.values.size(), 0);
        for (int cy = 0; cy < coarse.h; ++cy) {
            for (int cx = 0; cx < coarse.w; ++cx) {
                double acc = 0.0;
                int n = 0;
                for (int y = 2 * cy; y < std::min(2 * cy + 2, g.h); ++y) {
                    for (int x = 2 * cx; x < std::min(2 * cx + 2, g.w); ++x) {
                        const std::size_t i = static_cast<std::size_t>(y) * g.w + x;
                        if (g.known[i]) {
                            acc += g.values[i];
                            ++n;
                        }
                    }
                }
                if (n > 0) {
                    const std::size_t ci = static_cast<std::size_t>(cy) * coarse.w + cx;
                    coarse.values[ci] = acc / n;
                    coarse.known[ci] = 1;
                }
            }
        }
        solve_fill(coarse, tolerance, max_sweeps);
        for (int y = 0; y < g.h; ++y) {
            for (int x = 0; x < g.w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * g.w + x;
                if (!g.known[i]) {
                    g.values[i] = coarse.values[static_cast<std::size_t>(y / 2) * coarse.w + x / 2];
                }
            }
        }
    } else {
        double acc = 0.0;
        int n = 0;
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            if (g.known[i]) {
                acc += g.values[i];
                ++n;
            }
        }
        const double mean = n > 0 ? acc / n : 0.0;
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            if (!g.known[i]) {
                g.values[i] = mean;
            }
        }
    }
    gauss_seidel(g, tolerance, max_sweeps);
}

}  // namespace

ImageBuffer ToyInpainter::inpaint(const ImageBuffer& img, const ImageBuffer& hole_mask) {
    if (hole_mask.channels() != 1 || hole_mask.width() != img.width() || hole_mask.height() != img.height()) {
        throw BackendError("toy inpainter: hole mask must be single-channel and match the image");
    }
    const auto holes = std::count_if(hole_mask.samples().begin(), hole_mask.samples().end(),
                                     [](std::uint8_t v) { return v != 0; });
    if (holes == 0) {
        return img;
    }
    if (static_cast<std::size_t>(holes) == hole_mask.pixel_count()) {
        throw BackendError("toy inpainter: hole covers the whole image, nothing to anchor the fill");
    }
    ImageBuffer out = img;
    for (int c = 0; c < img.channels(); ++c) {
        FillGrid g;
        g.w = img.width();
        g.h = img.height();
        g.values.resize(img.pixel_count());
        g.known.resize(img.pixel_count());
        for (int y = 0; y < g.h; ++y) {
            for (int x = 0; x < g.w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * g.w + x;
                g.known[i] = hole_mask.at(x, y) == 0 ? 1 : 0;
                g.values[i] = g.known[i] ? img.at(x, y, c) : 0.0;
            }
        }
        solve_fill(g, tolerance_, max_sweeps_);
        for (int y = 0; y < g.h; ++y) {
            for (int x = 0; x < g.w; ++x) {
                if (hole_mask.at(x, y) != 0) {
                    out.at(x, y, c) = clamp_u8(g.values[static_cast<std::size_t>(y) * g.w + x]);
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

ImageBuffer ToyGenerator::instance(const ImageBuffer& pose, const std::string& text, std::uint64_t seed) {
    if (pose.channels() != 3) {
        throw BackendError("toy generator expects an RGB pose raster");
    }
    const int w = pose.width();
    const int h = pose.height();
    ImageBuffer out(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = kChromaGreen[static_cast<std::size_t>(c)];
            }
        }
    }

    // Silhouette = skeleton dilated by a square of half-width `grow`, found with a summed-area table.
    const int grow = std::max(1, std::min(w, h) / 40);
    std::vector<long long> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0);
    auto sidx = [w](int x, int y) { return static_cast<std::size_t>(y) * (w + 1) + x; };
    for (int y = 0; y < h; ++y) {
        long long row = 0;
        for (int x = 0; x < w; ++x) {
            row += (pose.at(x, y, 0) | pose.at(x, y, 1) | pose.at(x, y, 2)) != 0 ? 1 : 0;
            sat[sidx(x + 1, y + 1)] = sat[sidx(x + 1, y)] + row;
        }
    }

    auto base = text_color(text, 1);
    base[1] = static_cast<std::uint8_t>(base[1] / 2);  // keep away from the chroma key
    Rng rng(Rng::derive(seed, fnv1a(text)));
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - grow);
        const int y1 = std::min(h, y + grow + 1);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - grow);
            const int x1 = std::min(w, x + grow + 1);
            const long long hits = sat[sidx(x1, y1)] - sat[sidx(x0, y1)] - sat[sidx(x1, y0)] + sat[sidx(x0, y0)];
            if (hits == 0) {
                continue;
            }
            const double shade = 0.75 + 0.25 * static_cast<double>(y) / h;
            const double grain = (rng.uniform() - 0.5) * 12.0;
            const bool limb = (pose.at(x, y, 0) | pose.at(x, y, 1) | pose.at(x, y, 2)) != 0;
            for (int c = 0; c < 3; ++c) {
                double v = base[static_cast<std::size_t>(c)] * shade + grain;
                if (limb) {
                    v = 0.5 * v + 0.25 * pose.at(x, y, c);
                }
                out.at(x, y, c) = clamp_u8(c == 1 ? std::min(v, 127.0) : v);
            }
        }
    }
    return out;
}

ImageBuffer ToyGenerator::background(const std::string& text, int width, int height, std::uint64_t seed) {
    if (width < 1 || height < 1) {
        throw BackendError("toy generator: background dims must be positive");
    }
    const auto top = text_color(text, 2);
    const auto bottom = text_color(text, 3);
    Rng rng(Rng::derive(seed, fnv1a(text) + 1));
    const double freq = 2.0 * 3.14159265358979323846 * (1 + static_cast<int>(fnv1a(text) % 4)) / std::max(width, height);
    ImageBuffer out(width, height, 3);
    for (int y = 0; y < height; ++y) {
        const double t = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
        for (int x = 0; x < width; ++x) {
            const double ripple = 10.0 * std::sin(freq * x) * std::cos(freq * y);
            const double grain = (rng.uniform() - 0.5) * 8.0;
            for (int c = 0; c < 3; ++c) {
                const double v = (1.0 - t) * top[static_cast<std::size_t>(c)] + t * bottom[static_cast<std::size_t>(c)];
                out.at(x, y, c) = clamp_u8(v + ripple + grain);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> check_denoiser_conformance(DenoiserBackend& backend, std::uint64_t seed) {
    std::vector<std::string> failures;
    const DenoiserInfo info = backend.info();
    if (info.view_h < 1 || info.view_w < 1 || info.channels < 1) {
        failures.push_back("info: non-positive view size or channel count");
        return failures;
    }
    Rng rng(seed);
    LatentTensor x(info.view_h, info.view_w, info.channels);
    for (double& v : x.samples()) {
        v = rng.standard_normal();
    }
    const ImageBuffer pose(info.view_w * 8, info.view_h * 8, 3);
    const std::string text = "conformance probe";
    const ViewRect view{0, info.view_h, 0, info.view_w};
    const DenoiseRequest req{x, pose, text, 500, 480, view};

    LatentTensor first;
    try {
        first = backend.step(req);
    } catch (const std::exception& e) {
        failures.push_back(std::string("step threw: ") + e.what());
        return failures;
    }
    if (!first.same_shape(x)) {
        failures.push_back("step changed the latent shape");
    }
    if (!first.all_finite()) {
        failures.push_back("step produced non-finite values");
    }
    if (info.deterministic) {
        const LatentTensor second = backend.step(req);
        const auto a = std::as_bytes(first.samples());
        const auto b = std::as_bytes(second.samples());
        if (!second.same_shape(first) || !std::equal(a.begin(), a.end(), b.begin(), b.end())) {
            failures.push_back("declared deterministic but repeated step differs");
        }
    }
    return failures;
}

}  // namespace sceneforge
