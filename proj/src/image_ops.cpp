#include "sceneforge/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>

namespace sceneforge {

namespace {

std::uint8_t saturate_u8(double v) {
    if (!(v > 0.0)) {
        return 0;
    }
    if (v >= 255.0) {
        return 255;
    }
    return static_cast<std::uint8_t>(std::lround(v));
}

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

struct Taps {
    int first = 0;
    std::vector<double> weights;
};

// One row of resampling weights per output coordinate.
std::vector<Taps> lanczos_taps(int in_size, int out_size) {
    const double scale = static_cast<double>(out_size) / in_size;
    const double squeeze = std::min(1.0, scale);
    const double support = 3.0 / squeeze;
    std::vector<Taps> taps(static_cast<std::size_t>(out_size));
    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) / scale - 0.5;
        const int first = static_cast<int>(std::floor(center - support)) + 1;
        const int last = static_cast<int>(std::floor(center + support));
        Taps& t = taps[static_cast<std::size_t>(o)];
        t.first = first;
        double sum = 0.0;
        for (int j = first; j <= last; ++j) {
            const double w = lanczos3((j - center) * squeeze);
            t.weights.push_back(w);
            sum += w;
        }
        for (double& w : t.weights) {
            w /= sum;
        }
    }
    return taps;
}

// Interleaved real planes: resample width then height.
std::vector<double> resample_planes(const std::vector<double>& src, int in_w, int in_h, int channels,
                                    int out_w, int out_h) {
    std::vector<double> horiz(static_cast<std::size_t>(out_w) * in_h * channels);
    const auto htaps = lanczos_taps(in_w, out_w);
    for (int y = 0; y < in_h; ++y) {
        const double* row = src.data() + static_cast<std::size_t>(y) * in_w * channels;
        double* out = horiz.data() + static_cast<std::size_t>(y) * out_w * channels;
        for (int x = 0; x < out_w; ++x) {
            const Taps& t = htaps[static_cast<std::size_t>(x)];
            for (int c = 0; c < channels; ++c) {
                double acc = 0.0;
                for (std::size_t k = 0; k < t.weights.size(); ++k) {
                    const int sx = clamp_index(t.first + static_cast<int>(k), in_w);
                    acc += t.weights[k] * row[static_cast<std::size_t>(sx) * channels + c];
                }
                out[static_cast<std::size_t>(x) * channels + c] = acc;
            }
        }
    }

    std::vector<double> result(static_cast<std::size_t>(out_w) * out_h * channels);
    const auto vtaps = lanczos_taps(in_h, out_h);
    const std::size_t row_len = static_cast<std::size_t>(out_w) * channels;
    for (int y = 0; y < out_h; ++y) {
        const Taps& t = vtaps[static_cast<std::size_t>(y)];
        double* out = result.data() + static_cast<std::size_t>(y) * row_len;
        for (std::size_t k = 0; k < t.weights.size(); ++k) {
            const int sy = clamp_index(t.first + static_cast<int>(k), in_h);
            const double* row = horiz.data() + static_cast<std::size_t>(sy) * row_len;
            const double w = t.weights[k];
            for (std::size_t i = 0; i < row_len; ++i) {
                out[i] += w * row[i];
            }
        }
    }
    return result;
}

// Tile boundaries along one axis: tile i spans [edges[i], edges[i+1]).
std::vector<int> tile_edges(int size, int tiles) {
    std::vector<int> edges(static_cast<std::size_t>(tiles) + 1);
    for (int i = 0; i <= tiles; ++i) {
        edges[static_cast<std::size_t>(i)] = static_cast<int>(static_cast<long long>(i) * size / tiles);
    }
    return edges;
}

struct AxisBlend {
    int lo = 0;
    int hi = 0;
    double w_hi = 0.0;
};

// Bilinear neighbours between tile centres, clamped at the outer half-tiles.
std::vector<AxisBlend> axis_blend(const std::vector<int>& edges, int size) {
    const int tiles = static_cast<int>(edges.size()) - 1;
    std::vector<double> centers(static_cast<std::size_t>(tiles));
    for (int i = 0; i < tiles; ++i) {
        centers[static_cast<std::size_t>(i)] = 0.5 * (edges[static_cast<std::size_t>(i)] + edges[static_cast<std::size_t>(i) + 1]);
    }
    std::vector<AxisBlend> out(static_cast<std::size_t>(size));
    int seg = 0;
    for (int p = 0; p < size; ++p) {
        const double pos = p + 0.5;
        AxisBlend& b = out[static_cast<std::size_t>(p)];
        if (pos <= centers.front()) {
            b = {0, 0, 0.0};
            continue;
        }
        if (pos >= centers.back()) {
            b = {tiles - 1, tiles - 1, 0.0};
            continue;
        }
        while (centers[static_cast<std::size_t>(seg) + 1] < pos) {
            ++seg;
        }
        const double c0 = centers[static_cast<std::size_t>(seg)];
        const double c1 = centers[static_cast<std::size_t>(seg) + 1];
        b = {seg, seg + 1, (pos - c0) / (c1 - c0)};
    }
    return out;
}

ToneLut tile_lut(const ImageBuffer& gray, int x0, int x1, int y0, int y1, double clip_limit) {
    std::array<long long, 256> hist{};
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            ++hist[gray.at(x, y)];
        }
    }
    const long long area = static_cast<long long>(x1 - x0) * (y1 - y0);

    if (std::isfinite(clip_limit)) {
        const long long limit =
            std::max<long long>(1, static_cast<long long>(clip_limit * static_cast<double>(area) / 256.0));
        long long excess = 0;
        for (auto& h : hist) {
            if (h > limit) {
                excess += h - limit;
                h = limit;
            }
        }
        const long long batch = excess / 256;
        const long long residual = excess - batch * 256;
        for (auto& h : hist) {
            h += batch;
        }
        if (residual > 0) {
            const long long step = std::max<long long>(256 / residual, 1);
            long long left = residual;
            for (long long i = 0; i < 256 && left > 0; i += step, --left) {
                ++hist[static_cast<std::size_t>(i)];
            }
        }
    }

    ToneLut lut{};
    long long cdf = 0;
    // round(cdf * 255 / area), halves up, in exact integer arithmetic
    for (int i = 0; i < 256; ++i) {
        cdf += hist[static_cast<std::size_t>(i)];
        const long long v = (2 * cdf * 255 + area) / (2 * area);
        lut[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::min<long long>(v, 255));
    }
    return lut;
}

void validate_clahe(const ImageBuffer& gray, const ClaheParams& params) {
    if (gray.channels() != 1) {
        throw ConfigError("clahe expects a single-channel image");
    }
    if (params.tiles_x < 1 || params.tiles_y < 1) {
        throw ConfigError("clahe tile counts must be >= 1");
    }
    if (!(params.clip_limit > 0.0)) {
        throw ConfigError("clahe clip_limit must be > 0");
    }
    if (gray.width() < params.tiles_x || gray.height() < params.tiles_y) {
        throw ConfigError("clahe: degenerate tile (image smaller than tile grid)");
    }
}

// sRGB <-> CIE XYZ (D65).
constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

struct Mat3 {
    double m[3][3];
};

Mat3 invert(const double (&a)[3][3]) {
    Mat3 r{};
    const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                       a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                       a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    r.m[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
    r.m[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
    r.m[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
    r.m[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
    r.m[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
    r.m[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
    r.m[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
    r.m[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
    r.m[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
    return r;
}

double srgb_decode(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double srgb_encode(double v) {
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

constexpr double kLabEps = 216.0 / 24389.0;
constexpr double kLabKappa = 24389.0 / 27.0;

double lab_f(double t) { return t > kLabEps ? std::cbrt(t) : (kLabKappa * t + 16.0) / 116.0; }

double lab_f_inv(double f) {
    const double f3 = f * f * f;
    return f3 > kLabEps ? f3 : (116.0 * f - 16.0) / kLabKappa;
}

struct Lab {
    double l, a, b;
    double luminance;  // relative Y/Yn
};

struct LabConverter {
    Mat3 to_rgb = invert(kRgbToXyz);
    double white[3] = {
        kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
        kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
        kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2],
    };

    Lab from_rgb(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) const {
        const double rgb[3] = {srgb_decode(r8 / 255.0), srgb_decode(g8 / 255.0), srgb_decode(b8 / 255.0)};
        double xyz[3];
        for (int i = 0; i < 3; ++i) {
            xyz[i] = (kRgbToXyz[i][0] * rgb[0] + kRgbToXyz[i][1] * rgb[1] + kRgbToXyz[i][2] * rgb[2]) / white[i];
        }
        const double fx = lab_f(xyz[0]);
        const double fy = lab_f(xyz[1]);
        const double fz = lab_f(xyz[2]);
        return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz), xyz[1]};
    }

    // Rebuild RGB from a new relative luminance and the original a*, b*.
    void to_rgb8(double luminance, double a, double b, std::uint8_t out[3]) const {
        const double fy = lab_f(luminance);
        const double xyz[3] = {
            white[0] * lab_f_inv(fy + a / 500.0),
            white[1] * luminance,
            white[2] * lab_f_inv(fy - b / 200.0),
        };
        for (int i = 0; i < 3; ++i) {
            double lin = to_rgb.m[i][0] * xyz[0] + to_rgb.m[i][1] * xyz[1] + to_rgb.m[i][2] * xyz[2];
            lin = std::clamp(lin, 0.0, 1.0);
            out[i] = saturate_u8(255.0 * srgb_encode(lin));
        }
    }
};

const LabConverter& lab_converter() {
    static const LabConverter conv;
    return conv;
}

}  // namespace

std::size_t EdgeMap::count() const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), std::uint8_t{1}));
}

ImageBuffer to_gray(const ImageBuffer& img) {
    if (img.channels() == 1) {
        return img;
    }
    ImageBuffer out(img.width(), img.height(), 1);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const double luma = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
            out.at(x, y) = saturate_u8(luma);
        }
    }
    return out;
}

RealMap to_real(const ImageBuffer& gray) {
    if (gray.channels() != 1) {
        throw ConfigError("to_real expects a single-channel image");
    }
    RealMap out(gray.width(), gray.height());
    auto src = gray.samples();
    auto dst = out.values();
    std::transform(src.begin(), src.end(), dst.begin(), [](std::uint8_t v) { return static_cast<double>(v); });
    return out;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) {
        throw ConfigError("gaussian sigma must be positive");
    }
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) {
        v /= sum;
    }
    return k;
}

RealMap gaussian_blur(const RealMap& map, double sigma) {
    const auto kernel = gaussian_kernel(sigma);
    const int radius = static_cast<int>(kernel.size() / 2);
    const int w = map.width();
    const int h = map.height();
    RealMap tmp(w, h);
    RealMap out(w, h);
    if (w == 0 || h == 0) {
        return out;
    }

    std::vector<double> line;
    line.resize(static_cast<std::size_t>(w + 2 * radius));
    for (int y = 0; y < h; ++y) {
        for (int i = 0; i < w + 2 * radius; ++i) {
            line[static_cast<std::size_t>(i)] = map.at(clamp_index(i - radius, w), y);
        }
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kernel.size(); ++k) {
                acc += kernel[k] * line[static_cast<std::size_t>(x) + k];
            }
            tmp.at(x, y) = acc;
        }
    }

    line.resize(static_cast<std::size_t>(h + 2 * radius));
    for (int x = 0; x < w; ++x) {
        for (int i = 0; i < h + 2 * radius; ++i) {
            line[static_cast<std::size_t>(i)] = tmp.at(x, clamp_index(i - radius, h));
        }
        for (int y = 0; y < h; ++y) {
            double acc = 0.0;
            for (std::size_t k = 0; k < kernel.size(); ++k) {
                acc += kernel[k] * line[static_cast<std::size_t>(y) + k];
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

EdgeMap canny(const ImageBuffer& img, double lo, double hi) {
    if (!(lo < hi)) {
        throw ConfigError("canny requires lo < hi");
    }
    const ImageBuffer gray = to_gray(img);
    const int w = gray.width();
    const int h = gray.height();
    EdgeMap edges{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
    if (w < 3 || h < 3) {
        return edges;
    }

    // Smoothed image is re-quantized to 8 bits so Sobel responses are exact integers.
    const RealMap smooth_real = gaussian_blur(to_real(gray), 1.4);
    std::vector<int> smooth(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            smooth[static_cast<std::size_t>(y) * w + x] = saturate_u8(smooth_real.at(x, y));
        }
    }
    auto px = [&](int x, int y) { return smooth[static_cast<std::size_t>(clamp_index(y, h)) * w + clamp_index(x, w)]; };

    std::vector<int> gx(static_cast<std::size_t>(w) * h);
    std::vector<int> gy(static_cast<std::size_t>(w) * h);
    std::vector<double> mag(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int dx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                           (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
            const int dy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                           (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            gx[i] = dx;
            gy[i] = dy;
            mag[i] = std::sqrt(static_cast<double>(dx) * dx + static_cast<double>(dy) * dy);
        }
    }

    // 0 = suppressed, 1 = weak, 2 = strong.
    std::vector<std::uint8_t> cls(static_cast<std::size_t>(w) * h, 0);
    const double tan22 = std::tan(std::numbers::pi / 8.0);
    const double tan67 = std::tan(3.0 * std::numbers::pi / 8.0);
    auto m = [&](int x, int y) { return mag[static_cast<std::size_t>(y) * w + x]; };
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double v = mag[i];
            if (v <= lo) {
                continue;
            }
            const double ax = std::abs(static_cast<double>(gx[i]));
            const double ay = std::abs(static_cast<double>(gy[i]));
            // prev = neighbour with the smaller coordinate along the gradient; ties go to the later pixel.
            double prev = 0.0;
            double next = 0.0;
            if (ay <= ax * tan22) {
                prev = m(x - 1, y);
                next = m(x + 1, y);
            } else if (ay > ax * tan67) {
                prev = m(x, y - 1);
                next = m(x, y + 1);
            } else if ((gx[i] > 0) == (gy[i] > 0)) {
                prev = m(x - 1, y - 1);
                next = m(x + 1, y + 1);
            } else {
                prev = m(x + 1, y - 1);
                next = m(x - 1, y + 1);
            }
            if (v >= prev && v > next) {
                cls[i] = v > hi ? 2 : 1;
            }
        }
    }

    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (cls[i] == 2) {
                edges.values[i] = 1;
                queue.emplace_back(x, y);
            }
        }
    }
    while (!queue.empty()) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx;
                const int ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) {
                    continue;
                }
                const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
                if (cls[j] == 1 && edges.values[j] == 0) {
                    edges.values[j] = 1;
                    queue.emplace_back(nx, ny);
                }
            }
        }
    }
    return edges;
}

double lanczos3(double x) {
    constexpr double a = 3.0;
    if (x == 0.0) {
        return 1.0;
    }
    if (std::abs(x) >= a) {
        return 0.0;
    }
    const double px = std::numbers::pi * x;
    return a * std::sin(px) * std::sin(px / a) / (px * px);
}

RealMap lanczos_resize(const RealMap& map, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) {
        throw ConfigError("lanczos_resize: target dimensions must be >= 1");
    }
    if (map.width() < 1 || map.height() < 1) {
        throw ConfigError("lanczos_resize: empty source");
    }
    if (out_w == map.width() && out_h == map.height()) {
        return map;
    }
    std::vector<double> src(map.values().begin(), map.values().end());
    auto res = resample_planes(src, map.width(), map.height(), 1, out_w, out_h);
    RealMap out(out_w, out_h);
    std::copy(res.begin(), res.end(), out.values().begin());
    return out;
}

ImageBuffer lanczos_resize(const ImageBuffer& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) {
        throw ConfigError("lanczos_resize: target dimensions must be >= 1");
    }
    if (img.width() < 1 || img.height() < 1) {
        throw ConfigError("lanczos_resize: empty source");
    }
    if (out_w == img.width() && out_h == img.height()) {
        return img;
    }
    std::vector<double> src(img.samples().begin(), img.samples().end());
    auto res = resample_planes(src, img.width(), img.height(), img.channels(), out_w, out_h);
    ImageBuffer out(out_w, out_h, img.channels());
    auto dst = out.samples();
    for (std::size_t i = 0; i < res.size(); ++i) {
        dst[i] = saturate_u8(res[i]);
    }
    return out;
}

ImageBuffer nearest_resize(const ImageBuffer& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) {
        throw ConfigError("nearest_resize: target dimensions must be >= 1");
    }
    ImageBuffer out(out_w, out_h, img.channels());
    for (int y = 0; y < out_h; ++y) {
        const int sy = static_cast<int>((static_cast<long long>(2 * y + 1) * img.height()) / (2LL * out_h));
        for (int x = 0; x < out_w; ++x) {
            const int sx = static_cast<int>((static_cast<long long>(2 * x + 1) * img.width()) / (2LL * out_w));
            for (int c = 0; c < img.channels(); ++c) {
                out.at(x, y, c) = img.at(sx, sy, c);
            }
        }
    }
    return out;
}

BinaryMask nearest_resize(const BinaryMask& mask, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) {
        throw ConfigError("nearest_resize: target dimensions must be >= 1");
    }
    BinaryMask out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        const int sy = static_cast<int>((static_cast<long long>(2 * y + 1) * mask.height()) / (2LL * out_h));
        for (int x = 0; x < out_w; ++x) {
            const int sx = static_cast<int>((static_cast<long long>(2 * x + 1) * mask.width()) / (2LL * out_w));
            out.set(y, x, mask.at(sy, sx));
        }
    }
    return out;
}

ClaheLuts clahe_tile_luts(const ImageBuffer& gray, const ClaheParams& params) {
    validate_clahe(gray, params);
    const auto xe = tile_edges(gray.width(), params.tiles_x);
    const auto ye = tile_edges(gray.height(), params.tiles_y);
    ClaheLuts out{params.tiles_x, params.tiles_y, {}};
    out.luts.reserve(static_cast<std::size_t>(params.tiles_x) * params.tiles_y);
    for (int ty = 0; ty < params.tiles_y; ++ty) {
        for (int tx = 0; tx < params.tiles_x; ++tx) {
            out.luts.push_back(tile_lut(gray, xe[static_cast<std::size_t>(tx)], xe[static_cast<std::size_t>(tx) + 1],
                                        ye[static_cast<std::size_t>(ty)], ye[static_cast<std::size_t>(ty) + 1],
                                        params.clip_limit));
        }
    }
    return out;
}

ImageBuffer clahe(const ImageBuffer& gray, const ClaheParams& params) {
    const ClaheLuts luts = clahe_tile_luts(gray, params);
    const auto xb = axis_blend(tile_edges(gray.width(), params.tiles_x), gray.width());
    const auto yb = axis_blend(tile_edges(gray.height(), params.tiles_y), gray.height());
    ImageBuffer out(gray.width(), gray.height(), 1);
    for (int y = 0; y < gray.height(); ++y) {
        const AxisBlend& by = yb[static_cast<std::size_t>(y)];
        for (int x = 0; x < gray.width(); ++x) {
            const AxisBlend& bx = xb[static_cast<std::size_t>(x)];
            const std::uint8_t v = gray.at(x, y);
            const double top = (1.0 - bx.w_hi) * luts.at(bx.lo, by.lo)[v] + bx.w_hi * luts.at(bx.hi, by.lo)[v];
            const double bottom = (1.0 - bx.w_hi) * luts.at(bx.lo, by.hi)[v] + bx.w_hi * luts.at(bx.hi, by.hi)[v];
            out.at(x, y) = saturate_u8((1.0 - by.w_hi) * top + by.w_hi * bottom);
        }
    }
    return out;
}

ImageBuffer lightness_channel(const ImageBuffer& rgb) {
    if (rgb.channels() != 3) {
        throw ConfigError("lightness_channel expects an RGB image");
    }
    const LabConverter& conv = lab_converter();
    ImageBuffer out(rgb.width(), rgb.height(), 1);
    for (int y = 0; y < rgb.height(); ++y) {
        for (int x = 0; x < rgb.width(); ++x) {
            const Lab lab = conv.from_rgb(rgb.at(x, y, 0), rgb.at(x, y, 1), rgb.at(x, y, 2));
            out.at(x, y) = saturate_u8(255.0 * srgb_encode(std::clamp(lab.luminance, 0.0, 1.0)));
        }
    }
    return out;
}

ImageBuffer tone_normalize(const ImageBuffer& rgb, const ClaheParams& params) {
    if (rgb.channels() != 3) {
        throw ConfigError("tone_normalize expects a 3-channel image");
    }
    const LabConverter& conv = lab_converter();
    const ImageBuffer light = lightness_channel(rgb);
    const ImageBuffer equalized = clahe(light, params);
    ImageBuffer out(rgb.width(), rgb.height(), 3);
    for (int y = 0; y < rgb.height(); ++y) {
        for (int x = 0; x < rgb.width(); ++x) {
            const Lab lab = conv.from_rgb(rgb.at(x, y, 0), rgb.at(x, y, 1), rgb.at(x, y, 2));
            const double luminance = srgb_decode(equalized.at(x, y) / 255.0);
            std::uint8_t px[3];
            conv.to_rgb8(luminance, lab.a, lab.b, px);
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = px[c];
            }
        }
    }
    return out;
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels()) {
        throw ConfigError("psnr: shape mismatch");
    }
    double se = 0.0;
    auto sa = a.samples();
    auto sb = b.samples();
    for (std::size_t i = 0; i < sa.size(); ++i) {
        const double d = static_cast<double>(sa[i]) - sb[i];
        se += d * d;
    }
    if (se == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    const double mse = se / static_cast<double>(sa.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace sceneforge
