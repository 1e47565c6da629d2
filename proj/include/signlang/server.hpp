#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include "signlang/realtime.hpp"

namespace signlang {

struct ServerOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 7861;       ///< 0 picks a free port
    std::size_t max_queue = 256;     ///< inbound lines buffered per connection
    std::size_t max_line_bytes = 1 << 20;
};

/// Splits "host:port". Throws ValidationError on a malformed address.
std::pair<std::string, std::uint16_t> parse_bind_address(const std::string& address);

/// Newline-delimited JSON over TCP. Each connection gets its own Session; a
/// reader thread queues lines (dropping the oldest past `max_queue`) and a
/// worker thread processes them in order.
class StreamServer {
public:
    StreamServer(std::shared_ptr<const Model> model, SmoothingPolicy policy, ServerOptions options);
    ~StreamServer();

    StreamServer(const StreamServer&) = delete;
    StreamServer& operator=(const StreamServer&) = delete;

    /// Binds, listens and starts accepting. Throws Error if the address
    /// cannot be bound.
    void start();

    /// Port actually bound (useful with port 0).
    std::uint16_t port() const noexcept { return bound_port_; }

    /// Closes the listener and every session, then joins all threads.
    void stop();

    std::size_t sessions_opened() const noexcept { return sessions_opened_.load(); }

private:
    struct Connection;

    void accept_loop();
    void reap_finished();

    std::shared_ptr<const Model> model_;
    SmoothingPolicy policy_;
    ServerOptions options_;

    int listen_fd_ = -1;
    std::uint16_t bound_port_ = 0;
    std::atomic<bool> stopping_{false};
    std::atomic<std::size_t> sessions_opened_{0};
    std::thread accept_thread_;

    std::mutex connections_mutex_;
    std::list<std::unique_ptr<Connection>> connections_;
};

} // namespace signlang
