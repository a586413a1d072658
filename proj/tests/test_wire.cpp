#include <doctest.h>

#include <cfloat>
#include <cmath>
#include <cstring>
#include <random>
#include <thread>

#include "loopback_server.hpp"
#include "sceneforge/joint_diffusion.hpp"
#include "sceneforge/remote_backend.hpp"

using namespace sceneforge;
using nlohmann::json;

namespace {

std::shared_ptr<RemoteSession> connect(const loopback::Server& server) {
    return RemoteSession::open(wire::parse_endpoint(server.endpoint()), std::chrono::seconds(20));
}

double extreme(std::mt19937_64& gen) {
    static const float picks[] = {FLT_MAX, -FLT_MAX, FLT_MIN, -FLT_MIN, FLT_TRUE_MIN, -FLT_TRUE_MIN,
                                  0.0f,    -0.0f,    1.0f,    -1.0f,    65504.0f,     1e-30f};
    switch (gen() % 3) {
        case 0:
            return picks[gen() % std::size(picks)];
        case 1: {
            std::uint32_t bits = static_cast<std::uint32_t>(gen());
            float f;
            std::memcpy(&f, &bits, 4);
            return std::isfinite(f) ? f : 0.5f;
        }
        default:
            return static_cast<float>(std::normal_distribution<double>(0.0, 3.0)(gen));
    }
}

}  // namespace

TEST_CASE("endpoint parsing") {
    const auto a = wire::parse_endpoint("localhost:5555");
    CHECK(a.host == "localhost");
    CHECK(a.port == 5555);
    CHECK(wire::parse_endpoint("tcp://10.0.0.2:80").host == "10.0.0.2");
    CHECK(wire::parse_endpoint("::1:9000").host == "::1");
    for (const char* bad : {"localhost", ":80", "host:", "host:0", "host:70000", "host:8x"}) {
        CHECK_THROWS_AS(wire::parse_endpoint(bad), ConfigError);
    }
}

TEST_CASE("f32 little-endian encoding") {
    const std::vector<double> v = {1.0, -2.0, 0.0};
    const std::string bytes = wire::encode_f32le(v);
    REQUIRE(bytes.size() == 12);
    CHECK(bytes.substr(0, 4) == std::string("\x00\x00\x80\x3f", 4));
    CHECK(bytes.substr(4, 4) == std::string("\x00\x00\x00\xc0", 4));
    CHECK(wire::decode_f32le(bytes) == std::vector<float>{1.0f, -2.0f, 0.0f});
    CHECK_THROWS_AS(wire::decode_f32le("abc"), BackendError);
}

TEST_CASE("frame headers declare payload sizes") {
    CHECK(wire::payload_size({{"op", "x"}}) == 0);
    CHECK(wire::payload_size({{"op", "x"}, {"shape", {2, 3, 4}}, {"dtype", "f32le"}}) == 96);
    CHECK_THROWS_AS(wire::payload_size({{"op", "x"}, {"shape", {2, -1}}}), BackendError);
    CHECK_THROWS_AS(wire::payload_size({{"op", "x"}, {"shape", json::array()}}), BackendError);
    CHECK_THROWS_AS(wire::payload_size({{"op", "x"}, {"shape", {2}}, {"dtype", "f16"}}), BackendError);
    CHECK_THROWS_AS(wire::payload_size({{"op", "x"}, {"shape", {1 << 20, 1 << 20}}}), BackendError);
}

TEST_CASE("handshake and ping") {
    loopback::Server server;
    {
        auto s = connect(server);
        CHECK(s->info().protocol == wire::kProtocolVersion);
        CHECK(s->info().name == "loopback");
        CHECK(s->info().view_h == 16);
        CHECK(s->info().channels == 3);
        CHECK(s->ping() == wire::kProtocolVersion);
        RemoteDenoiser d(s);
        CHECK(d.info().name == "remote:loopback");
        CHECK_FALSE(d.info().concurrent);
    }
}

TEST_CASE("protocol version mismatch is rejected") {
    loopback::ServerOptions o;
    o.protocol = wire::kProtocolVersion + 1;
    loopback::Server server(o);
    CHECK_THROWS_WITH_AS(connect(server), doctest::Contains("protocol version mismatch"), BackendError);
}

TEST_CASE("connection failures are backend errors") {
    int port = 0;
    {
        wire::Listener probe;
        port = probe.port();
    }
    CHECK_THROWS_WITH_AS(RemoteSession::open({"127.0.0.1", port}), doctest::Contains("cannot connect"),
                         BackendError);
}

TEST_CASE("step echo is byte-identical for 1000 random tensors") {
    loopback::Server server;
    std::vector<std::string> sent;
    {
        auto s = connect(server);
        RemoteDenoiser d(s);
        std::mt19937_64 gen(99);
        const std::string text = "echo";
        for (int i = 0; i < 1000; ++i) {
            const int h = 1 + static_cast<int>(gen() % 8);
            const int w = 1 + static_cast<int>(gen() % 8);
            const int c = 1 + static_cast<int>(gen() % 4);
            LatentTensor z(h, w, c);
            for (double& v : z.samples()) {
                v = extreme(gen);
            }
            const ImageBuffer pose(w * 8, h * 8, 3);
            const LatentTensor back = d.step({z, pose, text, 700, 686, {0, h, 0, w}});
            REQUIRE(back.same_shape(z));
            REQUIRE(std::memcmp(back.samples().data(), z.samples().data(), z.size() * sizeof(double)) == 0);
            sent.push_back(wire::payload_of(z));
        }
    }
    CHECK(server.step_payloads() == sent);
    CHECK(server.connections() == 1);
}

TEST_CASE("error replies become backend errors and keep the session usable") {
    loopback::Server server;
    {
        auto s = connect(server);
        RemoteDenoiser d(s);
        const LatentTensor z(2, 2, 3, 0.25);
        const ImageBuffer pose(16, 16, 3);
        const std::string bad = "__fail__";
        const std::string good = "fine";
        CHECK_THROWS_WITH_AS(d.step({z, pose, bad, 10, 5, {0, 2, 0, 2}}), doctest::Contains("remote step"),
                             BackendError);
        CHECK(d.step({z, pose, good, 10, 5, {0, 2, 0, 2}}) == z);
        CHECK_THROWS_WITH_AS(s->call({wire::Frame{{{"op", "transmogrify"}}, {}}}), doctest::Contains("transmogrify"),
                             BackendError);
        CHECK(s->ping() == wire::kProtocolVersion);
    }
}

TEST_CASE("remote codec and inpainter match the toy implementations") {
    loopback::Server server;
    {
        auto s = connect(server);
        RemoteCodec codec(s);
        ToyCodec toy(8);
        CHECK(codec.factor() == 8);
        ImageBuffer img(32, 24, 3);
        for (std::size_t i = 0; i < img.samples().size(); ++i) {
            img.samples()[i] = static_cast<std::uint8_t>((i * 37) % 256);
        }
        const LatentTensor z = codec.encode(img);
        const LatentTensor ref = toy.encode(img);
        REQUIRE(z.same_shape(ref));
        for (std::size_t i = 0; i < z.size(); ++i) {
            CHECK(z.samples()[i] == static_cast<double>(static_cast<float>(ref.samples()[i])));
        }
        CHECK(codec.decode(z) == toy.decode(z));

        RemoteInpainter inpainter(s);
        ImageBuffer holes(32, 24, 1);
        for (int y = 5; y < 15; ++y) {
            for (int x = 8; x < 20; ++x) {
                holes.at(x, y) = 255;
            }
        }
        CHECK(inpainter.inpaint(img, holes) == ToyInpainter().inpaint(img, holes));
        CHECK_THROWS_AS(inpainter.inpaint(img, ImageBuffer(8, 8, 1)), ConfigError);
    }
}

TEST_CASE("concurrent servers take parallel requests on separate connections") {
    loopback::ServerOptions o;
    o.concurrent = true;
    loopback::Server server(o);
    {
        auto s = connect(server);
        RemoteDenoiser d(s);
        CHECK(d.info().concurrent);
        std::vector<std::jthread> threads;
        std::atomic<int> ok{0};
        for (int k = 0; k < 6; ++k) {
            threads.emplace_back([&, k] {
                const std::string text = "t";
                for (int i = 0; i < 50; ++i) {
                    const LatentTensor z(3, 3, 3, k * 100.0 + i);
                    const ImageBuffer pose(24, 24, 3);
                    if (d.step({z, pose, text, 10, 5, {0, 3, 0, 3}}) == z) {
                        ++ok;
                    }
                }
            });
        }
        threads.clear();
        CHECK(ok.load() == 300);
        CHECK(server.connections() > 1);
    }
}

TEST_CASE("joint diffusion through the remote echo is a fixed point") {
    loopback::ServerOptions o;
    o.concurrent = true;
    loopback::Server server(o);
    {
        auto s = connect(server);
        RemoteDenoiser d(s);
        LatentTensor z(32, 32, 3);
        std::mt19937_64 gen(5);
        for (double& v : z.samples()) {
            v = static_cast<float>(std::normal_distribution<double>()(gen));
        }
        const auto views = default_views(32, 32, StrideParams{16, 16, 8, 4, 0.2});
        ConditioningContext cond;
        cond.global_text = "remote";
        JointDenoiseOptions opts;
        opts.workers = 3;
        const LatentTensor out = joint_denoise(z, make_uniform_plan(100, 4), views, cond, d, opts);
        CHECK(std::memcmp(out.samples().data(), z.samples().data(), z.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("oversized or malformed frames are rejected") {
    wire::Listener listener;
    std::jthread peer([&] {
        wire::Socket sock = listener.accept();
        sock.send_all("not json\n");
        sock.send_all(std::string(wire::kMaxHeaderBytes + 10, 'x'));
    });
    wire::Socket client = wire::Socket::connect({"127.0.0.1", listener.port()}, std::chrono::seconds(5));
    CHECK_THROWS_WITH_AS(wire::read_frame(client), doctest::Contains("malformed frame header"), BackendError);
    CHECK_THROWS_WITH_AS(wire::read_frame(client), doctest::Contains("exceeds"), BackendError);
}
