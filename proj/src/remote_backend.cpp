#include "sceneforge/remote_backend.hpp"

namespace sceneforge {

using nlohmann::json;

RemoteSession::RemoteSession(wire::Endpoint endpoint, std::chrono::milliseconds io_timeout)
    : endpoint_(std::move(endpoint)), io_timeout_(io_timeout) {}

std::shared_ptr<RemoteSession> RemoteSession::open(const wire::Endpoint& endpoint,
                                                   std::chrono::milliseconds io_timeout) {
    std::shared_ptr<RemoteSession> s(new RemoteSession(endpoint, io_timeout));
    s->idle_.push_back(s->connect_and_greet(&s->info_));
    return s;
}

wire::Socket RemoteSession::connect_and_greet(ServerInfo* info) {
    wire::Socket sock = wire::Socket::connect(endpoint_, io_timeout_);
    wire::write_frame(sock, {{"op", "hello"}, {"protocol", wire::kProtocolVersion}, {"client", "sceneforge"}});
    const wire::Frame reply = wire::read_frame(sock);
    const std::string op = reply.header.value("op", "");
    if (op == "error") {
        throw BackendError("handshake rejected: " + reply.header.value("message", std::string("no message")));
    }
    if (op != "hello") {
        throw BackendError("handshake: expected hello, got " + op);
    }
    const int version = reply.header.value("protocol", -1);
    if (version != wire::kProtocolVersion) {
        throw BackendError("protocol version mismatch: client " + std::to_string(wire::kProtocolVersion) +
                           ", server " + std::to_string(version));
    }
    if (info != nullptr) {
        try {
            info->protocol = version;
            info->name = reply.header.value("name", std::string("remote"));
            const auto view = reply.header.at("view").get<std::vector<int>>();
            if (view.size() != 2) {
                throw BackendError("handshake: view must be [h, w]");
            }
            info->view_h = view[0];
            info->view_w = view[1];
            info->channels = reply.header.at("channels").get<int>();
            info->factor = reply.header.value("factor", 8);
            info->concurrent = reply.header.value("concurrent", false);
        } catch (const json::exception& e) {
            throw BackendError(std::string("handshake: ") + e.what());
        }
        if (info->view_h < 1 || info->view_w < 1 || info->channels < 1 || info->factor < 1) {
            throw BackendError("handshake: non-positive view, channel or factor");
        }
    }
    return sock;
}

wire::Frame RemoteSession::call(std::vector<wire::Frame> request) {
    wire::Socket sock;
    std::uint64_t id = 0;
    {
        std::lock_guard lock(mutex_);
        id = next_id_++;
        if (!idle_.empty()) {
            sock = std::move(idle_.back());
            idle_.pop_back();
        }
    }
    if (!sock.valid()) {
        sock = connect_and_greet(nullptr);
    }
    for (auto& f : request) {
        f.header["id"] = id;
    }
    const std::string op = request.front().header.value("op", "");
    wire::Frame reply;
    try {
        for (const auto& f : request) {
            wire::write_frame(sock, f.header, f.payload);
        }
        reply = wire::read_frame(sock);
    } catch (const BackendError& e) {
        throw BackendError("remote " + op + " (request " + std::to_string(id) + "): " + e.what());
    }
    // A reply frame is complete here, so the connection is reusable even after an error reply.
    {
        std::lock_guard lock(mutex_);
        idle_.push_back(std::move(sock));
    }
    if (reply.header.value("id", std::uint64_t{0}) != id) {
        throw BackendError("remote " + op + ": reply id " + reply.header.value("id", json()).dump() +
                           " does not match request " + std::to_string(id));
    }
    if (reply.header.value("op", "") == "error") {
        throw BackendError("remote " + op + " (request " + std::to_string(id) +
                           "): " + reply.header.value("message", std::string("unspecified error")));
    }
    return reply;
}

int RemoteSession::ping() {
    const wire::Frame reply = call({wire::Frame{{{"op", "ping"}}, {}}});
    if (reply.header.value("op", "") != "pong") {
        throw BackendError("ping: expected pong");
    }
    return reply.header.value("version", -1);
}

// ---------------------------------------------------------------------------

DenoiserInfo RemoteDenoiser::info() const {
    const ServerInfo& s = session_->info();
    return {"remote:" + s.name, s.view_h, s.view_w, s.channels, s.concurrent, true};
}

LatentTensor RemoteDenoiser::step(const DenoiseRequest& req) {
    const ViewRect& v = req.view;
    json head = {{"op", "step"},
                 {"timestep", req.t},
                 {"next_timestep", req.t_next},
                 {"shape", wire::shape_of(req.latent)},
                 {"dtype", "f32le"},
                 {"text", req.text},
                 {"view", {v.h1, v.h2, v.w1, v.w2}}};
    json pose = {{"op", "pose"}, {"shape", wire::shape_of(req.pose)}, {"dtype", "f32le"}};
    const wire::Frame reply = session_->call(
        {wire::Frame{std::move(head), wire::payload_of(req.latent)}, wire::Frame{std::move(pose), wire::payload_of(req.pose)}});
    LatentTensor out = wire::latent_from(reply);
    if (!out.same_shape(req.latent)) {
        throw BackendError("remote step returned shape [" + std::to_string(out.height()) + "," +
                           std::to_string(out.width()) + "," + std::to_string(out.channels()) + "]");
    }
    return out;
}

LatentTensor RemoteCodec::encode(const ImageBuffer& rgb) {
    const wire::Frame reply = session_->call(
        {wire::Frame{{{"op", "encode"}, {"shape", wire::shape_of(rgb)}, {"dtype", "f32le"}}, wire::payload_of(rgb)}});
    LatentTensor z = wire::latent_from(reply);
    const int f = factor();
    if (z.height() * f != rgb.height() || z.width() * f != rgb.width() || z.channels() != channels()) {
        throw BackendError("remote encode returned a latent that does not match the image and factor");
    }
    return z;
}

ImageBuffer RemoteCodec::decode(const LatentTensor& z) {
    const wire::Frame reply = session_->call(
        {wire::Frame{{{"op", "decode"}, {"shape", wire::shape_of(z)}, {"dtype", "f32le"}}, wire::payload_of(z)}});
    ImageBuffer img = wire::image_from(reply);
    const int f = factor();
    if (img.height() != z.height() * f || img.width() != z.width() * f || img.channels() != 3) {
        throw BackendError("remote decode returned an image that does not match the latent and factor");
    }
    return img;
}

ImageBuffer RemoteInpainter::inpaint(const ImageBuffer& img, const ImageBuffer& hole_mask) {
    if (hole_mask.width() != img.width() || hole_mask.height() != img.height() || hole_mask.channels() != 1) {
        throw ConfigError("inpaint: mask must be single-channel with the image's dimensions");
    }
    ImageBuffer unit(hole_mask.width(), hole_mask.height(), 1);
    for (std::size_t i = 0; i < unit.samples().size(); ++i) {
        unit.samples()[i] = hole_mask.samples()[i] != 0 ? 1 : 0;
    }
    const wire::Frame reply = session_->call(
        {wire::Frame{{{"op", "inpaint"}, {"shape", wire::shape_of(img)}, {"dtype", "f32le"}}, wire::payload_of(img)},
         wire::Frame{{{"op", "mask"}, {"shape", wire::shape_of(unit)}, {"dtype", "f32le"}}, wire::payload_of(unit)}});
    ImageBuffer out = wire::image_from(reply);
    if (out.width() != img.width() || out.height() != img.height() || out.channels() != img.channels()) {
        throw BackendError("remote inpaint returned wrong dimensions");
    }
    return out;
}

BackendSet make_remote_backends(const std::shared_ptr<RemoteSession>& session, int steps) {
    BackendSet set;
    auto codec = std::make_shared<RemoteCodec>(session);
    auto denoiser = std::make_shared<RemoteDenoiser>(session);
    set.codec = codec;
    set.inpainter = std::make_shared<RemoteInpainter>(session);
    set.segmenter = std::make_shared<ToySegmenter>();
    set.generator = std::make_shared<SamplingGenerator>(codec, denoiser, set.schedule, steps);
    set.denoiser = [denoiser](const StageContext&) { return denoiser; };
    return set;
}

}  // namespace sceneforge
