#include "snlforge/stream_server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <condition_variable>
#include <cstring>
#include <iostream>

#include "json.hpp"

namespace snlforge::net {

// ------------------------------------------------------------------ framing

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]);
    return v;
}

std::uint64_t get_u64(std::string_view in, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]);
    return v;
}

std::size_t word_bytes(const fx::FixedFormat& fmt) { return static_cast<std::size_t>((fmt.total_bits + 7) / 8); }

void put_word(std::string& out, std::int64_t v, std::size_t bytes) {
    const auto u = static_cast<std::uint64_t>(v);
    for (std::size_t i = 0; i < bytes; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

std::int64_t get_word(std::string_view in, std::size_t at, std::size_t bytes) {
    std::uint64_t u = 0;
    for (std::size_t i = bytes; i-- > 0;) u = (u << 8) | static_cast<unsigned char>(in[at + i]);
    const auto shift = static_cast<int>(64 - 8 * bytes);
    return shift == 0 ? static_cast<std::int64_t>(u) : static_cast<std::int64_t>(u << shift) >> shift;
}

std::string encode(const Frame& f) {
    if (f.payload.size() > max_payload) throw std::length_error("frame payload too large");
    std::string out(frame_magic, 4);
    out.push_back(static_cast<char>(f.type));
    put_u32(out, static_cast<std::uint32_t>(f.payload.size()));
    out += f.payload;
    return out;
}

Frame make_frame(FrameType t, std::string payload) { return {static_cast<std::uint8_t>(t), std::move(payload)}; }

Frame error_frame(ErrorCode code, const std::string& message) {
    std::string p;
    put_u16(p, static_cast<std::uint16_t>(code));
    p += message;
    return make_frame(FrameType::error, std::move(p));
}

std::pair<ErrorCode, std::string> parse_error(const Frame& f) {
    if (f.payload.size() < 2) throw std::invalid_argument("ERROR frame shorter than its code field");
    const auto code = static_cast<std::uint16_t>(static_cast<unsigned char>(f.payload[0]) |
                                                 (static_cast<unsigned char>(f.payload[1]) << 8));
    return {static_cast<ErrorCode>(code), f.payload.substr(2)};
}

std::optional<FrameDecoder::Item> FrameDecoder::next() {
    const std::string_view magic(frame_magic, 4);
    if (buf_.empty()) return std::nullopt;
    // Resynchronize on the next magic, keeping a possible partial match at the end.
    auto pos = buf_.find(magic);
    if (pos != 0) {
        std::size_t keep = 0;
        if (pos == std::string::npos) {
            for (std::size_t k = std::min<std::size_t>(3, buf_.size()); k > 0; --k)
                if (buf_.compare(buf_.size() - k, k, magic.substr(0, k)) == 0) {
                    keep = k;
                    break;
                }
            pos = buf_.size() - keep;
        }
        if (pos == 0) return std::nullopt;
        buf_.erase(0, pos);
        return Item{std::nullopt, "bad magic: discarded " + std::to_string(pos) + " bytes"};
    }
    if (buf_.size() < header_size) return std::nullopt;
    const std::uint32_t len = get_u32(buf_, 5);
    if (len > max_payload) {
        buf_.erase(0, 4);
        return Item{std::nullopt, "payload length " + std::to_string(len) + " exceeds limit"};
    }
    if (buf_.size() < header_size + len) return std::nullopt;
    Frame f{static_cast<std::uint8_t>(buf_[4]), buf_.substr(header_size, len)};
    buf_.erase(0, header_size + len);
    return Item{std::move(f), {}};
}

// ------------------------------------------------------------------ session

Session::Session(sim::Pipeline pipeline)
    : pipeline_(std::move(pipeline)), wb_(word_bytes(pipeline_.precision())), loaded_(pipeline_.register_words(), false) {}

Frame Session::handle(const Frame& f) {
    try {
        switch (f.kind()) {
        case FrameType::write_reg: return write_reg(f);
        case FrameType::infer_req: return infer(f);
        case FrameType::ping: return make_frame(FrameType::ack, f.payload);
        case FrameType::info: return info();
        case FrameType::infer_resp:
        case FrameType::ack:
        case FrameType::error:
            return error_frame(ErrorCode::unknown_type, "frame type " + std::to_string(f.type) + " is not a request");
        }
        return error_frame(ErrorCode::unknown_type, "unknown frame type " + std::to_string(f.type));
    } catch (const sim::BusyError& e) {
        return error_frame(ErrorCode::busy, e.what());
    } catch (const sim::AddressError& e) {
        return error_frame(ErrorCode::address_out_of_range, e.what());
    } catch (const std::exception& e) {
        return error_frame(ErrorCode::internal, e.what());
    }
}

Frame Session::write_reg(const Frame& f) {
    const std::size_t rec = 4 + wb_;
    if (f.payload.empty() || f.payload.size() % rec != 0)
        return error_frame(ErrorCode::malformed, "WRITE_REG payload of " + std::to_string(f.payload.size()) +
                                                     " bytes is not a multiple of " + std::to_string(rec));
    std::vector<sim::RegisterWrite> writes;
    writes.reserve(f.payload.size() / rec);
    for (std::size_t at = 0; at < f.payload.size(); at += rec)
        writes.push_back({get_u32(f.payload, at), get_word(f.payload, at + 4, wb_)});
    const auto n = pipeline_.load_weights(writes);
    for (const auto& w : writes)
        if (!loaded_[w.address]) {
            loaded_[w.address] = true;
            ++loaded_count_;
        }
    std::string p;
    put_u32(p, static_cast<std::uint32_t>(n));
    return make_frame(FrameType::ack, std::move(p));
}

Frame Session::infer(const Frame& f) {
    const std::size_t n = pipeline_.input_elements();
    if (f.payload.size() != n * wb_)
        return error_frame(ErrorCode::malformed, "INFER_REQ payload of " + std::to_string(f.payload.size()) +
                                                     " bytes, expected " + std::to_string(n * wb_));
    if (!weights_ready())
        return error_frame(ErrorCode::weights_not_loaded, std::to_string(loaded_count_) + " of " +
                                                              std::to_string(loaded_.size()) + " register words loaded");
    std::vector<std::int64_t> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = get_word(f.payload, i * wb_, wb_);
    const auto r = pipeline_.simulate(x);
    ++inferences_;
    std::string p;
    for (auto v : r.output) put_word(p, v, wb_);
    put_u64(p, static_cast<std::uint64_t>(r.latency_cycles));
    return make_frame(FrameType::infer_resp, std::move(p));
}

Frame Session::info() const {
    nlohmann::json j = {{"model", pipeline_.model()},
                        {"precision", pipeline_.precision().to_string()},
                        {"register_words", pipeline_.register_words()},
                        {"input_words", pipeline_.input_elements()},
                        {"output_words", pipeline_.output_elements()},
                        {"word_bytes", wb_}};
    return make_frame(FrameType::info, j.dump());
}

// ------------------------------------------------------------------- server

struct Server::Connection {
    int fd = -1;
    std::string peer;
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::string> queue;
    bool closed = false;
    std::atomic<bool> finished{false};
    std::thread reader, writer;

    // Blocks while the queue is full; false once the peer is gone.
    bool enqueue(std::string bytes, std::size_t limit) {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return closed || queue.size() < limit; });
        if (closed) return false;
        queue.push_back(std::move(bytes));
        cv.notify_all();
        return true;
    }

    void close() {
        std::lock_guard lk(mu);
        closed = true;
        cv.notify_all();
    }
};

Server::Server(ServerConfig cfg, PipelineFactory factory) : cfg_(std::move(cfg)), factory_(std::move(factory)) {}

Server::~Server() { stop(); }

void Server::log(const std::string& line) const {
    if (cfg_.log) std::cerr << "[snlforge serve] " << line << "\n";
}

void Server::start() {
    if (running_) return;
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(cfg_.port);
    if (::inet_pton(AF_INET, cfg_.host.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        throw std::runtime_error("bad bind address '" + cfg_.host + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
        const std::string err = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw std::runtime_error("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port) + ": " + err);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
    log("listening on " + cfg_.host + ":" + std::to_string(port_));
}

void Server::stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    if (acceptor_.joinable()) acceptor_.join();
    ::close(listen_fd_);
    listen_fd_ = -1;
    std::vector<std::shared_ptr<Connection>> conns;
    {
        std::lock_guard lk(mu_);
        conns.swap(connections_);
    }
    for (auto& c : conns) {
        ::shutdown(c->fd, SHUT_RDWR);
        c->close();
        if (c->reader.joinable()) c->reader.join();
        if (c->writer.joinable()) c->writer.join();
        ::close(c->fd);
    }
    log("stopped");
}

void Server::accept_loop() {
    while (running_) {
        pollfd p{listen_fd_, POLLIN, 0};
        if (::poll(&p, 1, 100) <= 0) continue;
        sockaddr_in peer{};
        socklen_t len = sizeof peer;
        const int fd = ::accept(listen_fd_, reinterpret_cast<sockaddr*>(&peer), &len);
        if (fd < 0) continue;
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

        auto c = std::make_shared<Connection>();
        c->fd = fd;
        char host[INET_ADDRSTRLEN] = {};
        ::inet_ntop(AF_INET, &peer.sin_addr, host, sizeof host);
        c->peer = std::string(host) + ":" + std::to_string(ntohs(peer.sin_port));

        std::lock_guard lk(mu_);
        // Reap sessions that have ended.
        for (auto it = connections_.begin(); it != connections_.end();) {
            if ((*it)->finished) {
                if ((*it)->reader.joinable()) (*it)->reader.join();
                if ((*it)->writer.joinable()) (*it)->writer.join();
                ::close((*it)->fd);
                it = connections_.erase(it);
            } else {
                ++it;
            }
        }
        connections_.push_back(c);
        ++sessions_started_;
        c->writer = std::thread([c] {
            for (;;) {
                std::string bytes;
                {
                    std::unique_lock lk2(c->mu);
                    c->cv.wait(lk2, [&] { return c->closed || !c->queue.empty(); });
                    if (c->queue.empty()) return;
                    bytes = std::move(c->queue.front());
                    c->queue.pop_front();
                    c->cv.notify_all();
                }
                std::size_t off = 0;
                while (off < bytes.size()) {
                    const auto n = ::send(c->fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
                    if (n <= 0) {
                        c->close();
                        return;
                    }
                    off += static_cast<std::size_t>(n);
                }
            }
        });
        c->reader = std::thread([this, c] { run_session(c); });
    }
}

void Server::run_session(std::shared_ptr<Connection> c) {
    log("session open " + c->peer);
    std::optional<Session> session;
    try {
        session.emplace(factory_());
    } catch (const std::exception& e) {
        c->enqueue(encode(error_frame(ErrorCode::internal, e.what())), cfg_.max_queued_frames);
        log("session " + c->peer + ": pipeline construction failed: " + e.what());
    }

    FrameDecoder dec;
    auto last_data = std::chrono::steady_clock::now();
    char buf[65536];
    bool alive = session.has_value();
    while (alive && running_) {
        pollfd p{c->fd, POLLIN, 0};
        const int ready = ::poll(&p, 1, 50);
        if (ready > 0) {
            const auto n = ::recv(c->fd, buf, sizeof buf, 0);
            if (n <= 0) break;
            dec.feed(std::string_view(buf, static_cast<std::size_t>(n)));
            last_data = std::chrono::steady_clock::now();
        }
        while (auto item = dec.next()) {
            Frame reply = item->frame ? session->handle(*item->frame) : error_frame(ErrorCode::malformed, item->error);
            if (reply.kind() == FrameType::error) {
                const auto [code, msg] = parse_error(reply);
                log("session " + c->peer + ": error " + std::to_string(static_cast<int>(code)) + ": " + msg);
            }
            if (!c->enqueue(encode(reply), cfg_.max_queued_frames)) {
                alive = false;
                break;
            }
        }
        if (dec.pending() > 0 && std::chrono::steady_clock::now() - last_data > cfg_.frame_timeout) {
            const std::string msg = "truncated frame: " + std::to_string(dec.pending()) + " bytes idle past timeout";
            log("session " + c->peer + ": " + msg);
            dec.discard();
            if (!c->enqueue(encode(error_frame(ErrorCode::malformed, msg)), cfg_.max_queued_frames)) break;
        }
    }
    // Let the writer flush what is queued, then close.
    {
        std::unique_lock lk(c->mu);
        c->cv.wait_for(lk, std::chrono::seconds(2), [&] { return c->closed || c->queue.empty(); });
    }
    c->close();
    ::shutdown(c->fd, SHUT_RDWR);
    log("session close " + c->peer + (session ? " after " + std::to_string(session->inferences()) + " inferences" : ""));
    c->finished = true;
}

// ------------------------------------------------------------------- client

Client::Client(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) : timeout_(timeout) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
        throw std::runtime_error("cannot resolve " + host);
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    const int rc = fd_ < 0 ? -1 : ::connect(fd_, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0) {
        const std::string err = std::strerror(errno);
        if (fd_ >= 0) ::close(fd_);
        throw std::runtime_error("cannot connect to " + host + ":" + std::to_string(port) + ": " + err);
    }
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Client::~Client() {
    if (fd_ >= 0) ::close(fd_);
}

void Client::send_raw(std::string_view bytes) {
    std::size_t off = 0;
    while (off < bytes.size()) {
        const auto n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n <= 0) throw std::runtime_error("send failed: connection closed");
        off += static_cast<std::size_t>(n);
    }
}

Frame Client::read_frame() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    char buf[65536];
    for (;;) {
        while (auto item = decoder_.next())
            if (item->frame) return std::move(*item->frame);
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw std::runtime_error("timed out waiting for a frame");
        pollfd p{fd_, POLLIN, 0};
        if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) continue;
        const auto n = ::recv(fd_, buf, sizeof buf, 0);
        if (n <= 0) throw std::runtime_error("connection closed by server");
        decoder_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    }
}

Frame Client::request(const Frame& f) {
    send_raw(encode(f));
    return read_frame();
}

Frame Client::expect(const Frame& request_frame, FrameType type) {
    Frame r = request(request_frame);
    if (r.kind() == FrameType::error) {
        auto [code, msg] = parse_error(r);
        throw ProtocolError(code, msg);
    }
    if (r.kind() != type) throw ProtocolError(ErrorCode::unknown_type, "unexpected reply type " + std::to_string(r.type));
    return r;
}

Client::Info Client::info() {
    const auto r = expect(make_frame(FrameType::info), FrameType::info);
    const auto j = nlohmann::json::parse(r.payload);
    Info i;
    i.model = j.at("model").get<std::string>();
    i.precision = fx::parse_precision(j.at("precision").get<std::string>());
    i.register_words = j.at("register_words").get<std::uint64_t>();
    i.input_words = j.at("input_words").get<std::uint64_t>();
    i.output_words = j.at("output_words").get<std::uint64_t>();
    info_ = i;
    return i;
}

std::string Client::ping(const std::string& payload) {
    return expect(make_frame(FrameType::ping, payload), FrameType::ack).payload;
}

std::uint64_t Client::write_registers(std::span<const sim::RegisterWrite> writes, std::size_t batch) {
    if (!info_) info();
    const std::size_t wb = word_bytes(info_->precision);
    std::uint64_t acked = 0;
    for (std::size_t i = 0; i < writes.size(); i += batch) {
        std::string p;
        for (std::size_t k = i; k < std::min(writes.size(), i + batch); ++k) {
            put_u32(p, static_cast<std::uint32_t>(writes[k].address));
            put_word(p, writes[k].value, wb);
        }
        const auto r = expect(make_frame(FrameType::write_reg, std::move(p)), FrameType::ack);
        if (r.payload.size() != 4) throw ProtocolError(ErrorCode::malformed, "ACK without a count");
        acked += get_u32(r.payload, 0);
    }
    return acked;
}

std::uint64_t Client::write_image(std::span<const std::int64_t> words, std::size_t batch) {
    std::vector<sim::RegisterWrite> w;
    w.reserve(words.size());
    for (std::size_t a = 0; a < words.size(); ++a) w.push_back({a, words[a]});
    return write_registers(w, batch);
}

Client::InferResult Client::infer(std::span<const std::int64_t> input) {
    if (!info_) info();
    const std::size_t wb = word_bytes(info_->precision);
    std::string p;
    for (auto v : input) put_word(p, v, wb);
    const auto r = expect(make_frame(FrameType::infer_req, std::move(p)), FrameType::infer_resp);
    if (r.payload.size() != info_->output_words * wb + 8)
        throw ProtocolError(ErrorCode::malformed, "INFER_RESP of unexpected size " + std::to_string(r.payload.size()));
    InferResult out;
    for (std::size_t i = 0; i < info_->output_words; ++i) out.output.push_back(get_word(r.payload, i * wb, wb));
    out.cycles = get_u64(r.payload, info_->output_words * wb);
    return out;
}

}  // namespace snlforge::net
