#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sceneforge/image_ops.hpp"

using namespace sceneforge;

namespace {

double mean_of(const ImageBuffer& img) {
    double s = 0.0;
    for (auto v : img.samples()) {
        s += v;
    }
    return s / static_cast<double>(img.samples().size());
}

ImageBuffer vertical_step(int w, int h, int k) {
    ImageBuffer img(w, h, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = k; x < w; ++x) {
            img.at(x, y) = 255;
        }
    }
    return img;
}

}  // namespace

TEST_CASE("luma uses BT.601 weights with rounding") {
    ImageBuffer rgb(3, 1, 3);
    rgb.at(0, 0, 0) = 255;
    rgb.at(1, 0, 1) = 255;
    rgb.at(2, 0, 2) = 255;
    const ImageBuffer g = to_gray(rgb);
    CHECK(g.at(0, 0) == 76);   // 76.245
    CHECK(g.at(1, 0) == 150);  // 149.685
    CHECK(g.at(2, 0) == 29);   // 29.07
}

TEST_CASE("gaussian kernel has radius ceil(3 sigma) and unit sum") {
    for (double sigma : {0.4, 1.0, 1.4, 2.5, 50.0}) {
        const auto k = gaussian_kernel(sigma);
        CHECK(k.size() == static_cast<std::size_t>(2 * static_cast<int>(std::ceil(3 * sigma)) + 1));
        double s = 0.0;
        for (double v : k) {
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK_THROWS_AS(gaussian_kernel(0.0), ConfigError);
    CHECK_THROWS_AS(gaussian_blur(RealMap(4, 4), -1.0), ConfigError);
}

TEST_CASE("gaussian blur: constant, impulse and linearity") {
    RealMap c(17, 11, 3.25);
    const RealMap blurred = gaussian_blur(c, 2.0);
    for (double v : blurred.values()) {
        CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
    }

    // Impulse far from the border: the response is the outer product of the 1-D kernel.
    RealMap impulse(21, 21, 0.0);
    impulse.at(10, 10) = 1.0;
    const RealMap r = gaussian_blur(impulse, 1.0);
    const double norm = 1.0 + 2 * std::exp(-0.5) + 2 * std::exp(-2.0) + 2 * std::exp(-4.5);
    auto g = [&](int d) { return std::exp(-0.5 * d * d) / norm; };
    double sum = 0.0;
    for (int y = 0; y < 21; ++y) {
        for (int x = 0; x < 21; ++x) {
            const int dx = std::abs(x - 10);
            const int dy = std::abs(y - 10);
            const double expect = dx <= 3 && dy <= 3 ? g(dx) * g(dy) : 0.0;
            CHECK(r.at(x, y) == doctest::Approx(expect).epsilon(1e-12));
            sum += r.at(x, y);
        }
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);

    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> d(-5.0, 5.0);
    RealMap a(23, 19);
    RealMap b(23, 19);
    RealMap mix(23, 19);
    for (int i = 0; i < 23 * 19; ++i) {
        a.values()[i] = d(gen);
        b.values()[i] = d(gen);
        mix.values()[i] = 2.5 * a.values()[i] - 0.75 * b.values()[i];
    }
    const RealMap ba = gaussian_blur(a, 1.7);
    const RealMap bb = gaussian_blur(b, 1.7);
    const RealMap bm = gaussian_blur(mix, 1.7);
    for (int i = 0; i < 23 * 19; ++i) {
        CHECK(std::abs(bm.values()[i] - (2.5 * ba.values()[i] - 0.75 * bb.values()[i])) < 1e-6);
    }
}

TEST_CASE("gaussian blur with sigma 50 respects the maximum principle") {
    std::mt19937_64 gen(2);
    RealMap edges(512, 512, 0.0);
    std::bernoulli_distribution on(0.02);
    for (double& v : edges.values()) {
        v = on(gen) ? 1.0 : 0.0;
    }
    const RealMap smooth = gaussian_blur(edges, 50.0);
    double lo = 1e9;
    double hi = -1e9;
    for (double v : smooth.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(hi <= 1.0 + 1e-12);
    CHECK(lo >= -1e-12);
    CHECK(hi - lo < 0.05);  // heavy smoothing of sparse noise
}

TEST_CASE("canny on uniform and step images") {
    ImageBuffer flat(32, 32, 1, 128);
    CHECK(canny(flat, 100, 200).count() == 0);
    CHECK_THROWS_AS(canny(flat, 200, 100), ConfigError);

    const int k = 13;
    const EdgeMap e = canny(vertical_step(32, 24, k), 100, 200);
    int column = -1;
    for (int y = 0; y < 24; ++y) {
        for (int x = 0; x < 32; ++x) {
            if (e.at(x, y) == 1) {
                if (column < 0) {
                    column = x;
                }
                CHECK(x == column);
            }
        }
    }
    CHECK((column == k || column == k - 1));
    // Every interior row carries the edge.
    CHECK(e.count() == 22);

    // Edges follow RGB input through luma.
    ImageBuffer rgb(32, 24, 3);
    for (int y = 0; y < 24; ++y) {
        for (int x = k; x < 32; ++x) {
            rgb.at(x, y, 0) = rgb.at(x, y, 1) = rgb.at(x, y, 2) = 255;
        }
    }
    CHECK(canny(rgb, 100, 200).values == e.values);
}

TEST_CASE("canny marks every checkerboard cell boundary") {
    const int cell = 8;
    const int n = 64;
    ImageBuffer board(n, n, 1);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            board.at(x, y) = ((x / cell + y / cell) % 2) ? 255 : 0;
        }
    }
    const EdgeMap e = canny(board, 100, 200);
    auto dist_to_boundary = [&](int p) {
        const int r = p % cell;
        return std::min(r, cell - 1 - r);  // 0 for the two pixels touching a boundary
    };
    // Along each internal vertical boundary, rows away from corners carry an edge on one side.
    for (int b = cell; b < n; b += cell) {
        for (int y = 1; y < n - 1; ++y) {
            if (dist_to_boundary(y) < 2) {
                continue;
            }
            CHECK_MESSAGE((e.at(b - 1, y) == 1 || e.at(b, y) == 1), "boundary x=", b, " row ", y);
        }
    }
    for (int b = cell; b < n; b += cell) {
        for (int x = 1; x < n - 1; ++x) {
            if (dist_to_boundary(x) < 2) {
                continue;
            }
            CHECK_MESSAGE((e.at(x, b - 1) == 1 || e.at(x, b) == 1), "boundary y=", b, " col ", x);
        }
    }
    // Cell interiors well away from any boundary stay empty.
    for (int y = 1; y < n - 1; ++y) {
        for (int x = 1; x < n - 1; ++x) {
            if (dist_to_boundary(x) >= 2 && dist_to_boundary(y) >= 2) {
                CHECK(e.at(x, y) == 0);
            }
        }
    }
}

TEST_CASE("lanczos identity, constants and zero targets") {
    std::mt19937_64 gen(3);
    const ImageBuffer img = oracle::random_rgb(gen, 9, 7);
    CHECK(lanczos_resize(img, 9, 7) == img);
    const ImageBuffer c(5, 6, 3, 77);
    const ImageBuffer up = lanczos_resize(c, 10, 12);
    for (auto v : up.samples()) {
        CHECK(v == 77);
    }
    const ImageBuffer down = lanczos_resize(c, 3, 2);
    for (auto v : down.samples()) {
        CHECK(v == 77);
    }
    CHECK_THROWS_AS(lanczos_resize(c, 0, 4), ConfigError);
    CHECK(lanczos3(0.0) == 1.0);
    CHECK(lanczos3(3.0) == 0.0);
    CHECK(std::abs(lanczos3(1.0)) < 1e-15);
}

TEST_CASE("lanczos matches a direct 2-D kernel sum") {
    RealMap ramp(4, 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            ramp.at(x, y) = 10.0 * x + 3.0 * y;
        }
    }
    const RealMap up = lanczos_resize(ramp, 8, 8);
    const RealMap ref = oracle::lanczos_direct(ramp, 8, 8);
    for (int i = 0; i < 64; ++i) {
        CHECK(up.values()[i] == doctest::Approx(ref.values()[i]).epsilon(1e-12));
    }

    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> d(0.0, 255.0);
    for (auto [iw, ih, ow, oh] : {std::array{13, 9, 26, 18}, std::array{40, 30, 17, 11}, std::array{7, 12, 21, 5}}) {
        RealMap src(iw, ih);
        for (double& v : src.values()) {
            v = d(gen);
        }
        const RealMap got = lanczos_resize(src, ow, oh);
        const RealMap want = oracle::lanczos_direct(src, ow, oh);
        for (std::size_t i = 0; i < got.values().size(); ++i) {
            CHECK(std::abs(got.values()[i] - want.values()[i]) < 1e-9);
        }
    }

    // 8-bit path: oracle rounded and clamped.
    const ImageBuffer g = oracle::random_gray(gen, 11, 8);
    const ImageBuffer got = lanczos_resize(g, 22, 16);
    const RealMap want = oracle::lanczos_direct(to_real(g), 22, 16);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 22; ++x) {
            const double v = std::clamp(want.at(x, y), 0.0, 255.0);
            CHECK(std::abs(got.at(x, y) - v) <= 0.5 + 1e-9);
        }
    }
}

TEST_CASE("nearest resize picks pixel centres") {
    ImageBuffer img(2, 1, 1);
    img.at(0, 0) = 10;
    img.at(1, 0) = 20;
    const ImageBuffer up = nearest_resize(img, 4, 2);
    CHECK(up.at(0, 0) == 10);
    CHECK(up.at(1, 1) == 10);
    CHECK(up.at(2, 0) == 20);
    CHECK(up.at(3, 1) == 20);
    BinaryMask m(2, 2);
    m.set(1, 1);
    const BinaryMask mu = nearest_resize(m, 6, 6);
    CHECK(mu.count() == 9);
    CHECK(mu.at(5, 5));
    CHECK_FALSE(mu.at(2, 2));
}

TEST_CASE("clahe: degenerate inputs and validation") {
    ClaheParams p;
    const ImageBuffer c(64, 64, 1, 90);
    const ImageBuffer out = clahe(c, p);
    for (auto v : out.samples()) {
        CHECK(v == out.samples()[0]);
    }
    CHECK_THROWS_AS(clahe(ImageBuffer(4, 4, 1), p), ConfigError);  // smaller than the 8x8 grid
    CHECK_THROWS_AS(clahe(ImageBuffer(64, 64, 3), p), ConfigError);
    ClaheParams bad = p;
    bad.clip_limit = 0.0;
    CHECK_THROWS_AS(clahe(c, bad), ConfigError);
    bad = p;
    bad.tiles_x = 0;
    CHECK_THROWS_AS(clahe(c, bad), ConfigError);
}

TEST_CASE("clahe on a uniform histogram with no clipping is near identity") {
    ImageBuffer img(256, 64, 1);
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 256; ++x) {
            img.at(x, y) = static_cast<std::uint8_t>((x + 37 * y) % 256);
        }
    }
    ClaheParams p{1, 1, std::numeric_limits<double>::infinity()};
    const ImageBuffer out = clahe(img, p);
    for (std::size_t i = 0; i < out.samples().size(); ++i) {
        CHECK(std::abs(out.samples()[i] - img.samples()[i]) <= 1);
    }
}

TEST_CASE("clahe tile mappings equal the scalar oracle") {
    std::mt19937_64 gen(5);
    // Two tiles: dark left, bright right.
    ImageBuffer two(64, 32, 1);
    std::uniform_int_distribution<int> dark(10, 60);
    std::uniform_int_distribution<int> bright(170, 250);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 64; ++x) {
            two.at(x, y) = static_cast<std::uint8_t>(x < 32 ? dark(gen) : bright(gen));
        }
    }
    ClaheParams p{2, 1, 2.0};
    const ClaheLuts luts = clahe_tile_luts(two, p);
    const auto ref = oracle::clahe_luts(two, 2, 1, 2.0);
    REQUIRE(luts.luts.size() == ref.size());
    for (std::size_t t = 0; t < ref.size(); ++t) {
        CHECK(luts.luts[t] == ref[t]);
    }

    for (auto [w, h, tx, ty, clip] : {std::tuple{50, 37, 3, 4, 1.5}, std::tuple{97, 61, 8, 8, 2.0},
                                      std::tuple{128, 128, 5, 2, 4.0}, std::tuple{31, 29, 7, 3, 0.5}}) {
        const ImageBuffer g = oracle::random_gray(gen, w, h);
        const ClaheLuts got = clahe_tile_luts(g, {tx, ty, clip});
        const auto want = oracle::clahe_luts(g, tx, ty, clip);
        for (std::size_t t = 0; t < want.size(); ++t) {
            CHECK(got.luts[t] == want[t]);
        }
    }
}

TEST_CASE("clahe mappings are monotone") {
    std::mt19937_64 gen(6);
    const ImageBuffer g = oracle::random_gray(gen, 80, 80);
    const ClaheLuts luts = clahe_tile_luts(g, {});
    for (const auto& lut : luts.luts) {
        for (int i = 1; i < 256; ++i) {
            CHECK(lut[static_cast<std::size_t>(i)] >= lut[static_cast<std::size_t>(i) - 1]);
        }
    }
    // Interpolated output of a single tile is exactly its mapping.
    const ImageBuffer out = clahe(g, {1, 1, 2.0});
    const ClaheLuts one = clahe_tile_luts(g, {1, 1, 2.0});
    for (int y = 0; y < 80; ++y) {
        for (int x = 0; x < 80; ++x) {
            CHECK(out.at(x, y) == one.at(0, 0)[g.at(x, y)]);
        }
    }
}

TEST_CASE("tone normalization of neutral images equals clahe of the gray channel") {
    std::mt19937_64 gen(7);
    const ImageBuffer g = oracle::random_gray(gen, 64, 48);
    ImageBuffer rgb(64, 48, 3);
    for (int y = 0; y < 48; ++y) {
        for (int x = 0; x < 64; ++x) {
            for (int c = 0; c < 3; ++c) {
                rgb.at(x, y, c) = g.at(x, y);
            }
        }
    }
    CHECK(lightness_channel(rgb) == g);
    const ImageBuffer out = tone_normalize(rgb, {});
    const ImageBuffer expect = clahe(g, {});
    int worst = 0;
    for (int y = 0; y < 48; ++y) {
        for (int x = 0; x < 64; ++x) {
            for (int c = 0; c < 3; ++c) {
                worst = std::max(worst, std::abs(out.at(x, y, c) - expect.at(x, y)));
            }
        }
    }
    CHECK(worst == 0);
}

TEST_CASE("tone normalization narrows a luminance gap and is stable when re-applied") {
    // Smooth textured collage; the right half is 40 levels brighter. Tiles are 64 px, as in real use.
    const int n = 512;
    ImageBuffer img(n, n, 3);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const int base = 70 + static_cast<int>(30 * std::sin(x * 0.21) * std::cos(y * 0.17));
            const int lift = x >= n / 2 ? 40 : 0;
            img.at(x, y, 0) = static_cast<std::uint8_t>(std::clamp(base + lift + 20, 0, 255));
            img.at(x, y, 1) = static_cast<std::uint8_t>(std::clamp(base + lift, 0, 255));
            img.at(x, y, 2) = static_cast<std::uint8_t>(std::clamp(base + lift - 15, 0, 255));
        }
    }
    auto half_gap = [](const ImageBuffer& im) {
        const ImageBuffer l = lightness_channel(im);
        double left = 0.0;
        double right = 0.0;
        for (int y = 0; y < l.height(); ++y) {
            for (int x = 0; x < l.width(); ++x) {
                (x < l.width() / 2 ? left : right) += l.at(x, y);
            }
        }
        const double n = l.width() / 2.0 * l.height();
        return std::abs(right - left) / n;
    };
    const ImageBuffer once = tone_normalize(img, {});
    CHECK(half_gap(once) < half_gap(img));

    // Low-contrast input is only partly equalized by one clip-limited pass; later passes keep
    // pulling the mean toward mid-gray rather than away from it.
    const ImageBuffer twice = tone_normalize(once, {});
    const double m0 = mean_of(lightness_channel(img));
    const double m1 = mean_of(lightness_channel(once));
    const double m2 = mean_of(lightness_channel(twice));
    CHECK(std::abs(m1 - 127.5) < std::abs(m0 - 127.5));
    CHECK(std::abs(m2 - 127.5) < std::abs(m1 - 127.5));
    CHECK_THROWS_AS(tone_normalize(ImageBuffer(16, 16, 1), {}), ConfigError);
}

TEST_CASE("re-normalizing a mid-contrast image moves mean lightness by under 2 levels") {
    const int n = 512;
    ImageBuffer img(n, n, 3);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const int base = 100 + static_cast<int>(60 * std::sin(x * 0.21) * std::cos(y * 0.17));
            const int lift = x >= n / 2 ? 40 : 0;
            img.at(x, y, 0) = static_cast<std::uint8_t>(std::clamp(base + lift + 20, 0, 255));
            img.at(x, y, 1) = static_cast<std::uint8_t>(std::clamp(base + lift, 0, 255));
            img.at(x, y, 2) = static_cast<std::uint8_t>(std::clamp(base + lift - 15, 0, 255));
        }
    }
    const ImageBuffer once = tone_normalize(img, {});
    const ImageBuffer twice = tone_normalize(once, {});
    CHECK(std::abs(mean_of(lightness_channel(twice)) - mean_of(lightness_channel(once))) < 2.0);
}

TEST_CASE("psnr") {
    const ImageBuffer a(4, 4, 1, 100);
    ImageBuffer b = a;
    CHECK(std::isinf(psnr(a, b)));
    b.at(0, 0) = 110;  // mse = 100/16
    CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / (100.0 / 16.0))));
    CHECK_THROWS_AS(psnr(a, ImageBuffer(4, 4, 3)), ConfigError);
}
