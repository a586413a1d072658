#include "sceneforge/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>

namespace sceneforge::wire {

namespace {

std::string errno_text() { return std::strerror(errno); }

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
}

void append_f32(std::string& out, float f) {
    const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(f));
    char b[4];
    std::memcpy(b, &bits, 4);
    out.append(b, 4);
}

}  // namespace

Endpoint parse_endpoint(std::string_view text) {
    std::string_view rest = text;
    if (rest.starts_with("tcp://")) {
        rest.remove_prefix(6);
    }
    const auto colon = rest.rfind(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == rest.size()) {
        throw ConfigError("endpoint '" + std::string(text) + "' must be host:port");
    }
    Endpoint ep;
    ep.host = std::string(rest.substr(0, colon));
    const std::string port(rest.substr(colon + 1));
    if (!std::all_of(port.begin(), port.end(), [](char c) { return c >= '0' && c <= '9'; }) || port.size() > 5) {
        throw ConfigError("endpoint '" + std::string(text) + "' has an invalid port");
    }
    ep.port = std::stoi(port);
    if (ep.port < 1 || ep.port > 65535) {
        throw ConfigError("endpoint '" + std::string(text) + "' has an invalid port");
    }
    return ep;
}

// ---------------------------------------------------------------------------

Socket::Socket(Socket&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), buffer_(std::move(other.buffer_)), pos_(std::exchange(other.pos_, 0)) {}

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = std::exchange(other.fd_, -1);
        buffer_ = std::move(other.buffer_);
        pos_ = std::exchange(other.pos_, 0);
    }
    return *this;
}

Socket::~Socket() { close(); }

void Socket::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

Socket Socket::connect(const Endpoint& ep, std::chrono::milliseconds io_timeout) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(ep.port);
    if (const int rc = ::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
        throw BackendError("cannot resolve " + ep.host + ": " + ::gai_strerror(rc));
    }
    std::string last_error = "no addresses";
    int fd = -1;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) {
            last_error = errno_text();
            continue;
        }
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
            break;
        }
        last_error = errno_text();
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) {
        throw BackendError("cannot connect to " + ep.host + ":" + port + ": " + last_error);
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    if (io_timeout.count() > 0) {
        timeval tv{};
        tv.tv_sec = static_cast<time_t>(io_timeout.count() / 1000);
        tv.tv_usec = static_cast<suseconds_t>((io_timeout.count() % 1000) * 1000);
        ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
        ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    }
    return Socket(fd);
}

void Socket::send_all(std::string_view bytes) {
    if (fd_ < 0) {
        throw BackendError("send on a closed connection");
    }
    while (!bytes.empty()) {
        const ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw BackendError("send failed: " + errno_text());
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
}

bool Socket::fill() {
    if (pos_ > 0) {
        buffer_.erase(0, pos_);
        pos_ = 0;
    }
    char chunk[1 << 16];
    for (;;) {
        const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n > 0) {
            buffer_.append(chunk, static_cast<std::size_t>(n));
            return true;
        }
        if (n == 0) {
            return false;
        }
        if (errno == EINTR) {
            continue;
        }
        if (errno == EAGAIN || errno == EWOULDBLOCK) {
            throw BackendError("receive timed out");
        }
        throw BackendError("receive failed: " + errno_text());
    }
}

std::string Socket::recv_line(std::size_t max_bytes) {
    if (fd_ < 0) {
        throw BackendError("receive on a closed connection");
    }
    std::size_t scanned = 0;  // relative to pos_
    for (;;) {
        const auto nl = buffer_.find('\n', pos_ + scanned);
        if (nl != std::string::npos) {
            if (nl - pos_ > max_bytes) {
                throw BackendError("header line exceeds " + std::to_string(max_bytes) + " bytes");
            }
            std::string line = buffer_.substr(pos_, nl - pos_);
            pos_ = nl + 1;
            return line;
        }
        if (buffer_.size() - pos_ > max_bytes) {
            throw BackendError("header line exceeds " + std::to_string(max_bytes) + " bytes");
        }
        scanned = buffer_.size() - pos_;
        if (!fill()) {
            throw BackendError("connection closed by peer");
        }
    }
}

std::string Socket::recv_exact(std::size_t n) {
    if (fd_ < 0) {
        throw BackendError("receive on a closed connection");
    }
    while (buffer_.size() - pos_ < n) {
        if (!fill()) {
            throw BackendError("connection closed by peer after " + std::to_string(buffer_.size() - pos_) + " of " +
                               std::to_string(n) + " payload bytes");
        }
    }
    std::string out = buffer_.substr(pos_, n);
    pos_ += n;
    return out;
}

// ---------------------------------------------------------------------------

Listener::Listener(int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) {
        throw BackendError("socket: " + errno_text());
    }
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 16) != 0) {
        const std::string err = errno_text();
        ::close(fd_);
        throw BackendError("listen on port " + std::to_string(port) + ": " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
    shutdown();
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

Socket Listener::accept() {
    for (;;) {
        const int fd = ::accept(fd_, nullptr, nullptr);
        if (fd >= 0) {
            const int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return Socket(fd);
        }
        if (errno == EINTR) {
            continue;
        }
        return Socket();
    }
}

void Listener::shutdown() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
    }
}

// ---------------------------------------------------------------------------

std::size_t payload_size(const nlohmann::json& header) {
    if (!header.contains("shape")) {
        return 0;
    }
    const auto& shape = header.at("shape");
    if (!shape.is_array() || shape.empty()) {
        throw BackendError("frame shape must be a non-empty array");
    }
    if (header.value("dtype", std::string("f32le")) != "f32le") {
        throw BackendError("unsupported dtype " + header.at("dtype").dump());
    }
    std::size_t count = 4;
    for (const auto& d : shape) {
        if (!d.is_number_integer() || d.get<long long>() < 0) {
            throw BackendError("frame shape entries must be nonnegative integers");
        }
        const auto dim = d.get<std::size_t>();
        if (dim != 0 && count > kMaxPayloadBytes / dim) {
            throw BackendError("frame payload exceeds " + std::to_string(kMaxPayloadBytes) + " bytes");
        }
        count *= dim;
    }
    return count;
}

void write_frame(Socket& socket, const nlohmann::json& header, std::string_view payload) {
    const std::string line = header.dump();
    if (line.size() > kMaxHeaderBytes) {
        throw BackendError("frame header exceeds " + std::to_string(kMaxHeaderBytes) + " bytes");
    }
    const std::size_t expected = payload_size(header);
    if (expected != payload.size()) {
        throw BackendError("payload is " + std::to_string(payload.size()) + " bytes, shape needs " +
                           std::to_string(expected));
    }
    std::string bytes;
    bytes.reserve(line.size() + 1 + payload.size());
    bytes += line;
    bytes += '\n';
    bytes += payload;
    socket.send_all(bytes);
}

Frame read_frame(Socket& socket) {
    Frame f;
    const std::string line = socket.recv_line(kMaxHeaderBytes);
    try {
        f.header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("malformed frame header: ") + e.what());
    }
    if (!f.header.is_object() || !f.header.contains("op")) {
        throw BackendError("frame header must be an object with an op");
    }
    f.payload = socket.recv_exact(payload_size(f.header));
    return f;
}

std::string encode_f32le(std::span<const double> values) {
    std::string out;
    out.reserve(values.size() * 4);
    for (double v : values) {
        append_f32(out, static_cast<float>(v));
    }
    return out;
}

std::string encode_f32le(std::span<const float> values) {
    std::string out;
    out.reserve(values.size() * 4);
    for (float v : values) {
        append_f32(out, v);
    }
    return out;
}

std::vector<float> decode_f32le(std::string_view bytes) {
    if (bytes.size() % 4 != 0) {
        throw BackendError("f32le payload length " + std::to_string(bytes.size()) + " is not a multiple of 4");
    }
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + 4 * i, 4);
        out[i] = std::bit_cast<float>(to_le(bits));
    }
    return out;
}

nlohmann::json shape_of(const LatentTensor& z) { return {z.height(), z.width(), z.channels()}; }
nlohmann::json shape_of(const ImageBuffer& img) { return {img.height(), img.width(), img.channels()}; }

std::string payload_of(const LatentTensor& z) { return encode_f32le(z.samples()); }

std::string payload_of(const ImageBuffer& img) {
    std::string out;
    out.reserve(img.samples().size() * 4);
    for (std::uint8_t v : img.samples()) {
        append_f32(out, static_cast<float>(v));
    }
    return out;
}

LatentTensor latent_from(const Frame& frame) {
    const auto shape = frame.header.at("shape").get<std::vector<int>>();
    if (shape.size() != 3) {
        throw BackendError("latent frame needs shape [h, w, c]");
    }
    const auto floats = decode_f32le(frame.payload);
    std::vector<double> samples(floats.begin(), floats.end());
    if (!std::all_of(samples.begin(), samples.end(), [](double v) { return std::isfinite(v); })) {
        throw BackendError("latent frame carries non-finite values");
    }
    return LatentTensor(shape[0], shape[1], shape[2], std::move(samples));
}

ImageBuffer image_from(const Frame& frame) {
    const auto shape = frame.header.at("shape").get<std::vector<int>>();
    if (shape.size() != 3 || (shape[2] != 1 && shape[2] != 3)) {
        throw BackendError("image frame needs shape [h, w, 1|3]");
    }
    const auto floats = decode_f32le(frame.payload);
    std::vector<std::uint8_t> samples(floats.size());
    for (std::size_t i = 0; i < floats.size(); ++i) {
        const float v = floats[i];
        if (!std::isfinite(v)) {
            throw BackendError("image frame carries non-finite values");
        }
        samples[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    return ImageBuffer(shape[1], shape[0], shape[2], std::move(samples));
}

}  // namespace sceneforge::wire
