#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "sceneforge/backends.hpp"
#include "sceneforge/pipeline.hpp"
#include "sceneforge/wire.hpp"

namespace sceneforge {

inline constexpr const char* kEndpointEnv = "SCENEFORGE_ENDPOINT";

/// What the server announced in its handshake reply.
struct ServerInfo {
    int protocol = 0;
    std::string name;
    int view_h = 0;
    int view_w = 0;
    int channels = 0;
    int factor = 8;
    bool concurrent = false;
};

/// Connection pool to one server. Every connection performs the handshake; requests are
/// strictly one-in-flight per connection.
class RemoteSession {
public:
    static std::shared_ptr<RemoteSession> open(const wire::Endpoint& endpoint,
                                               std::chrono::milliseconds io_timeout = std::chrono::minutes(10));

    const ServerInfo& info() const { return info_; }
    const wire::Endpoint& endpoint() const { return endpoint_; }

    /// Sends the frames in order and returns the reply; an error reply becomes BackendError.
    wire::Frame call(std::vector<wire::Frame> request);
    /// Round-trips a ping and returns the server's protocol version.
    int ping();

private:
    RemoteSession(wire::Endpoint endpoint, std::chrono::milliseconds io_timeout);
    wire::Socket connect_and_greet(ServerInfo* info);

    wire::Endpoint endpoint_;
    std::chrono::milliseconds io_timeout_;
    ServerInfo info_;
    std::mutex mutex_;
    std::vector<wire::Socket> idle_;
    std::uint64_t next_id_ = 1;
};

class RemoteDenoiser final : public DenoiserBackend {
public:
    explicit RemoteDenoiser(std::shared_ptr<RemoteSession> session) : session_(std::move(session)) {}
    DenoiserInfo info() const override;
    LatentTensor step(const DenoiseRequest& request) override;

private:
    std::shared_ptr<RemoteSession> session_;
};

class RemoteCodec final : public LatentCodec {
public:
    explicit RemoteCodec(std::shared_ptr<RemoteSession> session) : session_(std::move(session)) {}
    int factor() const override { return session_->info().factor; }
    int channels() const override { return session_->info().channels; }
    LatentTensor encode(const ImageBuffer& rgb) override;
    ImageBuffer decode(const LatentTensor& z) override;

private:
    std::shared_ptr<RemoteSession> session_;
};

class RemoteInpainter final : public Inpainter {
public:
    explicit RemoteInpainter(std::shared_ptr<RemoteSession> session) : session_(std::move(session)) {}
    ImageBuffer inpaint(const ImageBuffer& img, const ImageBuffer& hole_mask) override;

private:
    std::shared_ptr<RemoteSession> session_;
};

/// Remote denoiser, codec and inpainter; instances and backgrounds are sampled through the
/// remote denoiser; segmentation stays local (chroma key with rectangle fallback).
BackendSet make_remote_backends(const std::shared_ptr<RemoteSession>& session, int steps = 50);

}  // namespace sceneforge
