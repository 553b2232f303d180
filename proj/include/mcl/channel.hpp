#pragma once

#include "mcl/error.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace mcl {

/// Piecewise-constant available bandwidth. Before the first timestamp the
/// first rate applies.
struct ChannelTrace {
    struct Step {
        double time_s = 0.0;
        double rate_bps = 0.0;  // bytes per second
    };
    std::vector<Step> steps;

    void validate() const {
        if (steps.empty()) throw Error(ErrorKind::format, "channel trace is empty");
        for (std::size_t i = 0; i < steps.size(); ++i) {
            if (!(steps[i].rate_bps >= 0.0)) throw Error(ErrorKind::format, "trace rates must be non-negative");
            if (i > 0 && !(steps[i].time_s > steps[i - 1].time_s))
                throw Error(ErrorKind::format, "trace timestamps must be strictly increasing");
        }
    }

    [[nodiscard]] std::size_t step_index(double t) const {
        std::size_t i = 0;
        while (i + 1 < steps.size() && steps[i + 1].time_s <= t) ++i;
        return i;
    }

    [[nodiscard]] double rate_at(double t) const { return steps[step_index(t)].rate_bps; }

    static ChannelTrace constant(double rate_bps) { return {{{0.0, rate_bps}}}; }
};

/// Parses `timestamp_s rate_Bps` lines; blank lines and `#` comments are skipped.
inline ChannelTrace parse_trace(std::istream& in) {
    ChannelTrace trace;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        double t = 0.0, rate = 0.0;
        if (!(ls >> t)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            throw Error(ErrorKind::format, "trace line " + std::to_string(line_no) + " is malformed");
        }
        std::string extra;
        if (!(ls >> rate) || (ls >> extra))
            throw Error(ErrorKind::format, "trace line " + std::to_string(line_no) + " is malformed");
        trace.steps.push_back({t, rate});
    }
    trace.validate();
    return trace;
}

inline ChannelTrace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::format, "cannot open trace " + path);
    return parse_trace(in);
}

struct TransmitInterval {
    double start = 0.0;
    double end = 0.0;
};

/// Sending starts at `ready` (or at the first later step with a positive rate)
/// and lasts bytes / rate at that moment.
inline TransmitInterval transmit_interval(const ChannelTrace& trace, double ready, std::size_t bytes) {
    std::size_t i = trace.step_index(ready);
    double start = ready;
    while (trace.steps[i].rate_bps <= 0.0) {
        if (i + 1 == trace.steps.size())
            throw Error(ErrorKind::numeric, "channel trace ends with zero bandwidth; transmission never completes");
        start = trace.steps[++i].time_s;
    }
    return {start, start + static_cast<double>(bytes) / trace.steps[i].rate_bps};
}

/// One end of a reliable FIFO byte stream.
class ByteEndpoint {
public:
    virtual ~ByteEndpoint() = default;
    virtual void write(std::span<const std::uint8_t> bytes) = 0;
    /// Fills `out` completely; returns false on a clean end of stream before any byte.
    virtual bool read_exact(std::span<std::uint8_t> out) = 0;
    virtual void close_write() = 0;
};

namespace detail {

class Pipe {
public:
    void write(std::span<const std::uint8_t> bytes) {
        {
            std::lock_guard lock(mu_);
            buf_.insert(buf_.end(), bytes.begin(), bytes.end());
        }
        cv_.notify_all();
    }
    bool read_exact(std::span<std::uint8_t> out) {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return buf_.size() >= out.size() || closed_; });
        if (buf_.size() < out.size()) {
            if (buf_.empty()) return false;
            throw Error(ErrorKind::length_mismatch, "stream closed in the middle of a frame");
        }
        std::copy_n(buf_.begin(), out.size(), out.begin());
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(out.size()));
        return true;
    }
    void close() {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::uint8_t> buf_;
    bool closed_ = false;
};

class PipeEndpoint final : public ByteEndpoint {
public:
    PipeEndpoint(std::shared_ptr<Pipe> out, std::shared_ptr<Pipe> in) : out_(std::move(out)), in_(std::move(in)) {}
    void write(std::span<const std::uint8_t> bytes) override { out_->write(bytes); }
    bool read_exact(std::span<std::uint8_t> out) override { return in_->read_exact(out); }
    void close_write() override { out_->close(); }

private:
    std::shared_ptr<Pipe> out_;
    std::shared_ptr<Pipe> in_;
};

class SocketEndpoint final : public ByteEndpoint {
public:
    explicit SocketEndpoint(int fd) : fd_(fd) {}
    ~SocketEndpoint() override {
        if (fd_ >= 0) ::close(fd_);
    }
    SocketEndpoint(const SocketEndpoint&) = delete;
    SocketEndpoint& operator=(const SocketEndpoint&) = delete;

    void write(std::span<const std::uint8_t> bytes) override {
        std::size_t off = 0;
        while (off < bytes.size()) {
            const auto n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
            if (n <= 0) throw Error(ErrorKind::format, std::string("socket send failed: ") + std::strerror(errno));
            off += static_cast<std::size_t>(n);
        }
    }
    bool read_exact(std::span<std::uint8_t> out) override {
        std::size_t off = 0;
        while (off < out.size()) {
            const auto n = ::recv(fd_, out.data() + off, out.size() - off, 0);
            if (n == 0) {
                if (off == 0) return false;
                throw Error(ErrorKind::length_mismatch, "stream closed in the middle of a frame");
            }
            if (n < 0) throw Error(ErrorKind::format, std::string("socket recv failed: ") + std::strerror(errno));
            off += static_cast<std::size_t>(n);
        }
        return true;
    }
    void close_write() override { ::shutdown(fd_, SHUT_WR); }

private:
    int fd_ = -1;
};

}  // namespace detail

struct EndpointPair {
    std::unique_ptr<ByteEndpoint> client;
    std::unique_ptr<ByteEndpoint> server;
};

/// Duplex in-process channel.
inline EndpointPair make_in_process_channel() {
    auto up = std::make_shared<detail::Pipe>();
    auto down = std::make_shared<detail::Pipe>();
    return {std::make_unique<detail::PipeEndpoint>(up, down), std::make_unique<detail::PipeEndpoint>(down, up)};
}

/// Connected TCP socket pair over 127.0.0.1 on an ephemeral port.
inline EndpointPair make_tcp_loopback_channel() {
    auto fail = [](const char* what) {
        return Error(ErrorKind::format, std::string(what) + " failed: " + std::strerror(errno));
    };
    const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listener < 0) throw fail("socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    socklen_t len = sizeof addr;
    if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listener, 1) < 0 ||
        ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len) < 0) {
        ::close(listener);
        throw fail("bind/listen");
    }
    const int client = ::socket(AF_INET, SOCK_STREAM, 0);
    if (client < 0 || ::connect(client, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
        ::close(listener);
        if (client >= 0) ::close(client);
        throw fail("connect");
    }
    const int server = ::accept(listener, nullptr, nullptr);
    ::close(listener);
    if (server < 0) {
        ::close(client);
        throw fail("accept");
    }
    return {std::make_unique<detail::SocketEndpoint>(client), std::make_unique<detail::SocketEndpoint>(server)};
}

}  // namespace mcl
