#include <doctest.h>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <limits>

#include "sceneforge/backends.hpp"
#include "sceneforge/image_ops.hpp"

using namespace sceneforge;

namespace {

ImageBuffer smooth_rgb(int w, int h) {
    ImageBuffer img(w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = static_cast<std::uint8_t>(128 + 90 * std::sin(x / 23.0));
            img.at(x, y, 1) = static_cast<std::uint8_t>(128 + 90 * std::cos(y / 31.0));
            img.at(x, y, 2) = static_cast<std::uint8_t>(128 + 60 * std::sin((x + y) / 40.0));
        }
    }
    return img;
}

LatentTensor noisy(const LatentTensor& z0, int t, const NoiseSchedule& s, std::uint64_t seed) {
    Rng rng(seed);
    return forward_diffuse(z0, t, s, rng);
}

LatentTensor random_latent(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    LatentTensor z(h, w, 3);
    for (double& v : z.samples()) {
        v = 2.0 * rng.uniform() - 1.0;
    }
    return z;
}

// Harmonic fill by a direct sparse solve: unknown pixels satisfy n*v - sum(neighbours) = 0.
std::vector<double> laplace_reference(const ImageBuffer& img, const ImageBuffer& holes, int c) {
    const int w = img.width();
    const int h = img.height();
    std::vector<int> index(static_cast<std::size_t>(w) * h, -1);
    int n = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (holes.at(x, y) != 0) {
                index[static_cast<std::size_t>(y) * w + x] = n++;
            }
        }
    }
    std::vector<Eigen::Triplet<double>> t;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int i = index[static_cast<std::size_t>(y) * w + x];
            if (i < 0) {
                continue;
            }
            int deg = 0;
            const int dx[] = {-1, 1, 0, 0};
            const int dy[] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                const int nx = x + dx[k];
                const int ny = y + dy[k];
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) {
                    continue;
                }
                ++deg;
                const int j = index[static_cast<std::size_t>(ny) * w + nx];
                if (j >= 0) {
                    t.emplace_back(i, j, -1.0);
                } else {
                    rhs[i] += img.at(nx, ny, c);
                }
            }
            t.emplace_back(i, i, static_cast<double>(deg));
        }
    }
    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(t.begin(), t.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
    REQUIRE(solver.info() == Eigen::Success);
    const Eigen::VectorXd v = solver.solve(rhs);
    std::vector<double> out(index.size(), 0.0);
    for (std::size_t k = 0; k < index.size(); ++k) {
        out[k] = index[k] >= 0 ? v[index[k]] : img.samples()[k * 3 + static_cast<std::size_t>(c)];
    }
    return out;
}

class ShapeBreaker final : public DenoiserBackend {
public:
    DenoiserInfo info() const override { return {"broken", 4, 4, 3, false, true}; }
    LatentTensor step(const DenoiseRequest&) override { return LatentTensor(2, 2, 3); }
};

class NanMaker final : public DenoiserBackend {
public:
    DenoiserInfo info() const override { return {"nan", 4, 4, 3, false, true}; }
    LatentTensor step(const DenoiseRequest& r) override {
        LatentTensor out = r.latent;
        out.at(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
};

class Drifter final : public DenoiserBackend {
public:
    DenoiserInfo info() const override { return {"drift", 4, 4, 3, false, true}; }
    LatentTensor step(const DenoiseRequest& r) override {
        LatentTensor out = r.latent;
        out.at(0, 0, 0) += ++calls_;
        return out;
    }

private:
    int calls_ = 0;
};

class Thrower final : public DenoiserBackend {
public:
    DenoiserInfo info() const override { return {"throw", 4, 4, 3, false, true}; }
    LatentTensor step(const DenoiseRequest&) override { throw BackendError("offline"); }
};

}  // namespace

TEST_CASE("fnv1a reference values") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("toy codec encodes block means and round-trips smooth images") {
    ToyCodec codec(8);
    const LatentTensor flat = codec.encode(ImageBuffer(32, 16, 3, 51));
    CHECK(flat.height() == 2);
    CHECK(flat.width() == 4);
    for (double v : flat.samples()) {
        CHECK(v == doctest::Approx(51.0 / 127.5 - 1.0).epsilon(1e-15));
    }
    CHECK(codec.decode(flat) == ImageBuffer(32, 16, 3, 51));

    const ImageBuffer img = smooth_rgb(256, 192);
    const ImageBuffer back = codec.decode(codec.encode(img));
    CHECK(back.width() == 256);
    CHECK(back.height() == 192);
    CHECK(psnr(img, back) >= 25.0);

    CHECK_THROWS_WITH_AS(codec.encode(ImageBuffer(30, 16, 3)), doctest::Contains("not divisible"), BackendError);
    CHECK_THROWS_AS(codec.encode(ImageBuffer(32, 16, 1)), BackendError);
    CHECK_THROWS_AS(codec.decode(LatentTensor(2, 2, 4)), BackendError);
}

TEST_CASE("oracle denoiser steps exactly along the forward trajectory") {
    const NoiseSchedule s = make_schedule();
    const LatentTensor target = random_latent(24, 20, 1);
    OracleDenoiser oracle(target, s, 8, 8);
    const ViewRect v{8, 16, 4, 12};
    const LatentTensor z_star = crop_latent(target, v);
    // Same noise: x_t = sqrt(abar_t) z* + sqrt(1 - abar_t) eps.
    Rng rng(4);
    LatentTensor eps(8, 8, 3);
    for (double& e : eps.samples()) {
        e = rng.standard_normal();
    }
    auto at = [&](int t) {
        LatentTensor x(8, 8, 3);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x.samples()[i] = std::sqrt(s.alpha_bar(t)) * z_star.samples()[i] +
                             std::sqrt(1.0 - s.alpha_bar(t)) * eps.samples()[i];
        }
        return x;
    };
    const ImageBuffer pose(64, 64, 3);
    const std::string text = "x";
    const LatentTensor x700 = at(700);
    const LatentTensor out = oracle.step({x700, pose, text, 700, 686, v});
    const LatentTensor expect = at(686);
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(std::abs(out.samples()[i] - expect.samples()[i]) < 1e-12);
    }
    const LatentTensor done = oracle.step({x700, pose, text, 700, 0, v});
    for (std::size_t i = 0; i < done.size(); ++i) {
        CHECK(std::abs(done.samples()[i] - z_star.samples()[i]) < 1e-12);
    }
    CHECK_THROWS_AS(oracle.step({x700, pose, text, 700, 700, v}), BackendError);
    CHECK_THROWS_AS(oracle.step({x700, pose, text, 700, 600, ViewRect{20, 28, 0, 8}}), BackendError);
    CHECK(check_denoiser_conformance(oracle).empty());
}

TEST_CASE("toy denoiser preserves shape, is deterministic and nearly idle at small t") {
    const NoiseSchedule s = make_schedule();
    ToyDenoiser toy(s, 32, 32, 3);
    CHECK(check_denoiser_conformance(toy).empty());
    CHECK(toy.info().concurrent);

    ToyCodec codec(8);
    const LatentTensor z0 = codec.encode(smooth_rgb(256, 256));
    const ImageBuffer pose(256, 256, 3);
    const std::string text = "t";
    const ViewRect v{0, 32, 0, 32};
    const LatentTensor x1 = noisy(z0, 1, s, 2);
    const LatentTensor out = toy.step({x1, pose, text, 1, 0, v});
    // At t=1 the estimate is the rescaled observation up to a few percent shrink of fine detail.
    const double inv = 1.0 / std::sqrt(s.alpha_bar(1));
    double worst = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        worst = std::max(worst, std::abs(out.samples()[i] - x1.samples()[i] * inv));
    }
    CHECK(worst < 0.02);
    CHECK_THROWS_AS(toy.step({x1, pose, text, 1, 1, v}), BackendError);
}

TEST_CASE("toy denoiser estimate beats the raw rescaled observation") {
    const NoiseSchedule s = make_schedule();
    ToyDenoiser toy(s, 32, 32, 3);
    ToyCodec codec(8);
    const LatentTensor z0 = codec.encode(smooth_rgb(256, 256));
    const ImageBuffer pose(256, 256, 3);
    const std::string text = "t";
    for (int t : {100, 300, 500, 700}) {
        const LatentTensor xt = noisy(z0, t, s, static_cast<std::uint64_t>(t));
        const LatentTensor est = toy.step({xt, pose, text, t, 0, {0, 32, 0, 32}});
        const double inv = 1.0 / std::sqrt(s.alpha_bar(t));
        double err_est = 0.0;
        double err_raw = 0.0;
        for (std::size_t i = 0; i < z0.size(); ++i) {
            err_est += std::pow(est.samples()[i] - z0.samples()[i], 2);
            err_raw += std::pow(xt.samples()[i] * inv - z0.samples()[i], 2);
        }
        CHECK(err_est < err_raw);
    }
}

TEST_CASE("identity backend and conformance detection") {
    IdentityDenoiser id(4, 4, 3);
    CHECK(check_denoiser_conformance(id).empty());
    const LatentTensor x = random_latent(4, 4, 3);
    const ImageBuffer pose(32, 32, 3);
    const std::string text;
    CHECK(id.step({x, pose, text, 10, 5, {0, 4, 0, 4}}) == x);

    ShapeBreaker shape;
    NanMaker nan;
    Drifter drift;
    Thrower thrower;
    CHECK(check_denoiser_conformance(shape) == std::vector<std::string>{"step changed the latent shape"});
    CHECK(check_denoiser_conformance(nan) == std::vector<std::string>{"step produced non-finite values"});
    CHECK(check_denoiser_conformance(drift) ==
          std::vector<std::string>{"declared deterministic but repeated step differs"});
    const auto t = check_denoiser_conformance(thrower);
    REQUIRE(t.size() == 1);
    CHECK(t[0].find("offline") != std::string::npos);
}

TEST_CASE("chroma-key segmenter") {
    ImageBuffer img(40, 30, 3);
    for (int y = 0; y < 30; ++y) {
        for (int x = 0; x < 40; ++x) {
            img.at(x, y, 1) = 255;
        }
    }
    for (int y = 10; y < 20; ++y) {
        for (int x = 12; x < 18; ++x) {
            img.at(x, y, 0) = 200;
            img.at(x, y, 1) = 30;
        }
    }
    img.at(2, 2, 0) = 255;  // foreground outside the rectangle is ignored
    img.at(2, 2, 1) = 0;
    ToySegmenter seg;
    const ImageBuffer m = seg.segment(img, {5, 5, 30, 20});
    CHECK(m.channels() == 1);
    for (int y = 0; y < 30; ++y) {
        for (int x = 0; x < 40; ++x) {
            const bool fg = y >= 10 && y < 20 && x >= 12 && x < 18;
            REQUIRE(m.at(x, y) == (fg ? 255 : 0));
        }
    }

    // Nothing off-key inside the rectangle: the whole rectangle becomes foreground.
    const ImageBuffer fallback = seg.segment(img, {20, 0, 10, 5});
    std::size_t on = 0;
    for (auto v : fallback.samples()) {
        on += v == 255;
    }
    CHECK(on == 50);
    CHECK(fallback.at(20, 0) == 255);
    CHECK(fallback.at(19, 0) == 0);

    ToySegmenter boxes({0, 255, 0}, 40, true);
    CHECK(boxes.segment(img, {5, 5, 30, 20}).at(6, 6) == 255);
    CHECK_THROWS_AS(seg.segment(img, {35, 0, 10, 5}), BackendError);
}

TEST_CASE("toy inpainter matches a direct Laplace solve") {
    ImageBuffer img = smooth_rgb(48, 40);
    ImageBuffer holes(48, 40, 1);
    for (int y = 8; y < 30; ++y) {
        for (int x = 10; x < 36; ++x) {
            if ((x - 23) * (x - 23) + (y - 19) * (y - 19) < 110) {
                holes.at(x, y) = 255;
                for (int c = 0; c < 3; ++c) {
                    img.at(x, y, c) = 0;
                }
            }
        }
    }
    for (int x = 0; x < 6; ++x) {
        holes.at(x, 39) = 1;  // a hole on the border uses the available neighbours only
    }
    ToyInpainter inpainter;
    const ImageBuffer out = inpainter.inpaint(img, holes);
    double worst = 0.0;
    for (int c = 0; c < 3; ++c) {
        const std::vector<double> ref = laplace_reference(img, holes, c);
        for (int y = 0; y < 40; ++y) {
            for (int x = 0; x < 48; ++x) {
                if (holes.at(x, y) == 0) {
                    REQUIRE(out.at(x, y, c) == img.at(x, y, c));
                } else {
                    worst = std::max(worst, std::abs(out.at(x, y, c) - ref[static_cast<std::size_t>(y) * 48 + x]));
                }
            }
        }
    }
    // Rounding to 8 bits accounts for 0.5 of this.
    CHECK(worst <= 0.75);

    CHECK(inpainter.inpaint(img, ImageBuffer(48, 40, 1)) == img);
    CHECK_THROWS_AS(inpainter.inpaint(img, ImageBuffer(48, 40, 1, 1)), BackendError);
    CHECK_THROWS_AS(inpainter.inpaint(img, ImageBuffer(40, 40, 1)), BackendError);
}

TEST_CASE("toy generator is seeded and keyed for segmentation") {
    ToyGenerator gen(128);
    ImageBuffer pose(128, 128, 3);
    for (int y = 30; y < 100; ++y) {
        pose.at(64, y, 0) = 255;
    }
    const ImageBuffer a = gen.instance(pose, "a runner", 1);
    CHECK(a == gen.instance(pose, "a runner", 1));
    CHECK_FALSE(a == gen.instance(pose, "a runner", 2));
    CHECK_FALSE(a == gen.instance(pose, "a swimmer", 1));
    CHECK(a.at(10, 10, 1) == 255);
    CHECK(a.at(10, 10, 0) == 0);
    const ImageBuffer m = ToySegmenter().segment(a, {0, 0, 128, 128});
    CHECK(m.at(64, 60) == 255);
    CHECK(m.at(10, 10) == 0);
    CHECK(m.at(64, 10) == 0);

    const ImageBuffer bg = gen.background("a beach", 96, 64, 5);
    CHECK(bg.width() == 96);
    CHECK(bg.height() == 64);
    CHECK(bg == gen.background("a beach", 96, 64, 5));
    CHECK_FALSE(bg == gen.background("a beach", 96, 64, 6));
    CHECK_THROWS_AS(gen.background("x", 0, 4, 1), BackendError);
    CHECK_THROWS_AS(gen.instance(ImageBuffer(8, 8, 1), "x", 1), BackendError);
}
