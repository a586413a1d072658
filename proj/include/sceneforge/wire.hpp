#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sceneforge/core_types.hpp"

namespace sceneforge::wire {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxHeaderBytes = 64 * 1024;
inline constexpr std::size_t kMaxPayloadBytes = std::size_t{1} << 31;

struct Endpoint {
    std::string host;
    int port = 0;
};

/// Accepts "host:port" or "tcp://host:port".
Endpoint parse_endpoint(std::string_view text);

/// Connected TCP stream with buffered reads. Move-only; closes on destruction.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& other) noexcept;
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket();

    static Socket connect(const Endpoint& endpoint, std::chrono::milliseconds io_timeout = std::chrono::minutes(10));

    bool valid() const { return fd_ >= 0; }
    void close();
    void send_all(std::string_view bytes);
    /// Reads through the next '\n' (excluded from the result); throws if `max_bytes` pass first.
    std::string recv_line(std::size_t max_bytes);
    std::string recv_exact(std::size_t n);

private:
    bool fill();

    int fd_ = -1;
    std::string buffer_;
    std::size_t pos_ = 0;
};

/// Listening socket on 127.0.0.1 (port 0 picks a free port).
class Listener {
public:
    explicit Listener(int port = 0);
    Listener(const Listener&) = delete;
    Listener& operator=(const Listener&) = delete;
    ~Listener();
    int port() const { return port_; }
    /// Blocks until a client connects; returns an invalid socket after shutdown().
    Socket accept();
    void shutdown();

private:
    int fd_ = -1;
    int port_ = 0;
};

/// One message: single-line JSON header, then shape-product x 4 bytes of f32le when the header has a shape.
struct Frame {
    nlohmann::json header;
    std::string payload;
};

std::size_t payload_size(const nlohmann::json& header);
void write_frame(Socket& socket, const nlohmann::json& header, std::string_view payload = {});
Frame read_frame(Socket& socket);

std::string encode_f32le(std::span<const double> values);
std::string encode_f32le(std::span<const float> values);
std::vector<float> decode_f32le(std::string_view bytes);

nlohmann::json shape_of(const LatentTensor& z);
nlohmann::json shape_of(const ImageBuffer& img);
std::string payload_of(const LatentTensor& z);
std::string payload_of(const ImageBuffer& img);
LatentTensor latent_from(const Frame& frame);
/// Rounds and clamps to [0,255].
ImageBuffer image_from(const Frame& frame);

}  // namespace sceneforge::wire
