#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "sceneforge/wire.hpp"

namespace loopback {

struct ServerOptions {
    int protocol = sceneforge::wire::kProtocolVersion;
    int view = 16;
    int channels = 3;
    int factor = 8;
    bool concurrent = false;
    /// Step requests whose text equals this string get an error frame instead of a result.
    std::string fail_text = "__fail__";
};

/// In-process test double for the remote backend. Step echoes the latent payload unchanged;
/// encode/decode/inpaint run the toy implementations; every connection gets its own thread.
class Server {
public:
    explicit Server(ServerOptions options = {});
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    int port() const { return listener_.port(); }
    std::string endpoint() const { return "127.0.0.1:" + std::to_string(port()); }

    /// Raw latent payloads received by step requests, in arrival order.
    std::vector<std::string> step_payloads() const;
    std::size_t connections() const { return connections_.load(); }

private:
    void accept_loop();
    void serve(sceneforge::wire::Socket sock);

    ServerOptions options_;
    sceneforge::wire::Listener listener_;
    std::atomic<bool> stopping_{false};
    std::atomic<std::size_t> connections_{0};
    mutable std::mutex mutex_;
    std::vector<std::string> step_payloads_;
    std::vector<std::jthread> workers_;
    std::jthread acceptor_;
};

}  // namespace loopback
