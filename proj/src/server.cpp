#include "signlang/server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <string_view>

#include "signlang/error.hpp"
#include "signlang/session.hpp"

namespace signlang {

namespace {

bool send_all(int fd, std::string_view data) {
    while (!data.empty()) {
        const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

} // namespace

std::pair<std::string, std::uint16_t> parse_bind_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
        throw ValidationError("bind address must look like host:port, got '" + address + "'");
    }
    const std::string host = address.substr(0, colon);
    const std::string port_text = address.substr(colon + 1);
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(port_text, &used);
        if (used != port_text.size()) {
            throw std::invalid_argument(port_text);
        }
    } catch (const std::exception&) {
        throw ValidationError("invalid port '" + port_text + "'");
    }
    if (port > 65535) {
        throw ValidationError("port " + port_text + " out of range");
    }
    return {host, static_cast<std::uint16_t>(port)};
}

struct StreamServer::Connection {
    int fd = -1;
    std::thread reader;
    std::thread worker;

    std::mutex mutex;
    std::condition_variable ready;
    std::deque<std::string> queue;
    std::uint64_t pending_drops = 0;
    bool input_closed = false;
    std::atomic<bool> finished{false};
};

StreamServer::StreamServer(std::shared_ptr<const Model> model, SmoothingPolicy policy,
                           ServerOptions options)
    : model_(std::move(model)), policy_(policy), options_(std::move(options)) {
    if (!model_) {
        throw Error("server needs a model");
    }
    model_->validate();
    policy_.validate();
}

StreamServer::~StreamServer() {
    stop();
}

void StreamServer::start() {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* found = nullptr;
    const std::string port = std::to_string(options_.port);
    if (const int rc = ::getaddrinfo(options_.host.c_str(), port.c_str(), &hints, &found); rc != 0) {
        throw Error("cannot resolve " + options_.host + ": " + ::gai_strerror(rc));
    }
    std::string last_error = "no usable address";
    for (addrinfo* ai = found; ai != nullptr; ai = ai->ai_next) {
        const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) {
            last_error = std::strerror(errno);
            continue;
        }
        const int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 16) == 0) {
            listen_fd_ = fd;
            break;
        }
        last_error = std::strerror(errno);
        ::close(fd);
    }
    ::freeaddrinfo(found);
    if (listen_fd_ < 0) {
        throw Error("cannot bind " + options_.host + ":" + port + ": " + last_error);
    }
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    bound_port_ = addr.ss_family == AF_INET6
                      ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                      : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void StreamServer::accept_loop() {
    while (!stopping_) {
        pollfd pfd{listen_fd_, POLLIN, 0};
        const int rc = ::poll(&pfd, 1, 100);
        reap_finished();
        if (rc <= 0 || !(pfd.revents & POLLIN)) {
            continue;
        }
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            continue;
        }
        ++sessions_opened_;
        auto conn = std::make_unique<Connection>();
        Connection& c = *conn;
        c.fd = fd;

        c.reader = std::thread([this, &c] {
            std::string buffer;
            char chunk[65536];
            bool oversized = false;
            while (true) {
                const ssize_t n = ::recv(c.fd, chunk, sizeof chunk, 0);
                if (n < 0 && errno == EINTR) {
                    continue;
                }
                if (n <= 0) {
                    break;
                }
                buffer.append(chunk, static_cast<std::size_t>(n));
                std::size_t start = 0;
                std::size_t nl;
                std::lock_guard lock(c.mutex);
                while ((nl = buffer.find('\n', start)) != std::string::npos) {
                    std::string line = buffer.substr(start, nl - start);
                    start = nl + 1;
                    if (oversized) {
                        // Tail of a line that was already rejected.
                        oversized = false;
                        continue;
                    }
                    if (!line.empty() && line.back() == '\r') {
                        line.pop_back();
                    }
                    if (line.empty()) {
                        continue;
                    }
                    if (line.size() > options_.max_line_bytes) {
                        line.clear(); // empty line marks an oversized message
                    }
                    c.queue.push_back(std::move(line));
                    if (c.queue.size() > options_.max_queue) {
                        c.queue.pop_front();
                        ++c.pending_drops;
                    }
                }
                buffer.erase(0, start);
                if (buffer.size() > options_.max_line_bytes) {
                    buffer.clear();
                    oversized = true;
                    c.queue.push_back({});
                    if (c.queue.size() > options_.max_queue) {
                        c.queue.pop_front();
                        ++c.pending_drops;
                    }
                }
                c.ready.notify_one();
            }
            std::lock_guard lock(c.mutex);
            c.input_closed = true;
            c.ready.notify_one();
        });

        c.worker = std::thread([this, &c] {
            Session session(*model_, policy_);
            bool alive = send_all(c.fd, session.hello() + "\n");
            while (alive) {
                std::string line;
                std::uint64_t drops = 0;
                {
                    std::unique_lock lock(c.mutex);
                    c.ready.wait(lock, [&] { return !c.queue.empty() || c.input_closed || stopping_; });
                    if (stopping_ || c.queue.empty()) {
                        break;
                    }
                    line = std::move(c.queue.front());
                    c.queue.pop_front();
                    drops = std::exchange(c.pending_drops, 0);
                }
                session.note_dropped(drops);
                std::string out;
                if (line.empty()) {
                    out = error_message("message exceeds " + std::to_string(options_.max_line_bytes) +
                                        " bytes") + "\n";
                } else {
                    for (const auto& msg : session.handle_line(line)) {
                        out += msg;
                        out += '\n';
                    }
                }
                if (!out.empty()) {
                    alive = send_all(c.fd, out);
                }
            }
            ::shutdown(c.fd, SHUT_RDWR);
            c.finished = true;
        });

        std::lock_guard lock(connections_mutex_);
        connections_.push_back(std::move(conn));
    }
}

void StreamServer::reap_finished() {
    std::list<std::unique_ptr<Connection>> done;
    {
        std::lock_guard lock(connections_mutex_);
        for (auto it = connections_.begin(); it != connections_.end();) {
            if ((*it)->finished) {
                done.push_back(std::move(*it));
                it = connections_.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& c : done) {
        c->worker.join();
        c->reader.join();
        ::close(c->fd);
    }
}

void StreamServer::stop() {
    if (stopping_.exchange(true)) {
        return;
    }
    if (accept_thread_.joinable()) {
        accept_thread_.join();
    }
    std::list<std::unique_ptr<Connection>> all;
    {
        std::lock_guard lock(connections_mutex_);
        all.swap(connections_);
    }
    for (auto& c : all) {
        ::shutdown(c->fd, SHUT_RDWR);
        {
            std::lock_guard lock(c->mutex);
            c->ready.notify_all();
        }
        c->worker.join();
        c->reader.join();
        ::close(c->fd);
    }
    if (listen_fd_ >= 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
}

} // namespace signlang
