#pragma once

// TCP virtual board. Every message is a frame:
//
//   "SNLX" | type:u8 | length:u32 LE | payload[length]
//
// WRITE_REG  payload: repeated { addr:u32, word:ceil(X/8) bytes }  -> ACK { count:u32 }
// INFER_REQ  payload: n_in words                                    -> INFER_RESP { n_out words, cycles:u64 }
// PING       payload: anything                                      -> ACK echoing it
// INFO       payload: empty                                         -> INFO { JSON text }
// ERROR      payload: code:u16, UTF-8 message
//
// Words are little-endian two's complement, sign-extended on receipt. The
// schema is this project's own; it does not follow any existing bridge format.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "snlforge/dataflow_sim.hpp"

namespace snlforge::net {

enum class FrameType : std::uint8_t {
    write_reg = 0x01,
    infer_req = 0x02,
    infer_resp = 0x03,
    ack = 0x04,
    error = 0x05,
    ping = 0x06,
    info = 0x07,
};

enum class ErrorCode : std::uint16_t {
    malformed = 1,
    address_out_of_range = 2,
    weights_not_loaded = 3,
    unknown_type = 4,
    busy = 5,
    internal = 6,
};

constexpr char frame_magic[4] = {'S', 'N', 'L', 'X'};
constexpr std::size_t header_size = 9;
constexpr std::uint32_t max_payload = 64u << 20;
constexpr std::uint16_t default_port = 8192;

struct Frame {
    std::uint8_t type = 0;
    std::string payload;

    FrameType kind() const { return static_cast<FrameType>(type); }
};

std::string encode(const Frame& f);
Frame make_frame(FrameType t, std::string payload = {});
Frame error_frame(ErrorCode code, const std::string& message);
// Throws std::invalid_argument if the payload is too short.
std::pair<ErrorCode, std::string> parse_error(const Frame& f);

void put_u16(std::string& out, std::uint16_t v);
void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
std::uint32_t get_u32(std::string_view in, std::size_t at);
std::uint64_t get_u64(std::string_view in, std::size_t at);

std::size_t word_bytes(const fx::FixedFormat& fmt);
void put_word(std::string& out, std::int64_t v, std::size_t bytes);
std::int64_t get_word(std::string_view in, std::size_t at, std::size_t bytes);

// Incremental decoder. Garbage before a magic is skipped and reported once.
class FrameDecoder {
public:
    struct Item {
        std::optional<Frame> frame;
        std::string error;  // set when bytes were discarded
    };

    void feed(std::string_view bytes) { buf_.append(bytes); }
    std::optional<Item> next();
    // Bytes of an incomplete frame (or partial magic) still buffered.
    std::size_t pending() const { return buf_.size(); }
    void discard() { buf_.clear(); }

private:
    std::string buf_;
};

using PipelineFactory = std::function<sim::Pipeline()>;

// Protocol state machine for one connection; owns its pipeline.
class Session {
public:
    explicit Session(sim::Pipeline pipeline);

    Frame handle(const Frame& request);

    std::uint64_t words_loaded() const { return loaded_count_; }
    bool weights_ready() const { return loaded_count_ == loaded_.size(); }
    std::uint64_t inferences() const { return inferences_; }
    const sim::Pipeline& pipeline() const { return pipeline_; }

private:
    Frame write_reg(const Frame& f);
    Frame infer(const Frame& f);
    Frame info() const;

    sim::Pipeline pipeline_;
    std::size_t wb_;
    std::vector<bool> loaded_;
    std::uint64_t loaded_count_ = 0;
    std::uint64_t inferences_ = 0;
};

struct ServerConfig {
    std::string host = "127.0.0.1";
    std::uint16_t port = default_port;  // 0 picks an ephemeral port
    std::chrono::milliseconds frame_timeout{500};  // partial frame left idle this long is malformed
    std::size_t max_queued_frames = 64;            // per-session outbound limit
    bool log = true;
};

class Server {
public:
    Server(ServerConfig cfg, PipelineFactory factory);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and starts accepting. Throws std::runtime_error on bind failure.
    void start();
    void stop();
    std::uint16_t port() const { return port_; }
    std::uint64_t sessions_started() const { return sessions_started_; }

private:
    struct Connection;

    void accept_loop();
    void run_session(std::shared_ptr<Connection> c);
    void log(const std::string& line) const;

    ServerConfig cfg_;
    PipelineFactory factory_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::atomic<std::uint64_t> sessions_started_{0};
    std::thread acceptor_;
    std::mutex mu_;
    std::vector<std::shared_ptr<Connection>> connections_;
};

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// Blocking reference client.
class Client {
public:
    Client(const std::string& host, std::uint16_t port,
           std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));
    ~Client();
    Client(const Client&) = delete;
    Client& operator=(const Client&) = delete;

    void send_raw(std::string_view bytes);
    Frame read_frame();
    Frame request(const Frame& f);

    struct Info {
        std::string model;
        fx::FixedFormat precision;
        std::uint64_t register_words = 0;
        std::uint64_t input_words = 0;
        std::uint64_t output_words = 0;
    };
    // Also records the word size used by the typed calls below.
    Info info();
    std::string ping(const std::string& payload);
    // Sends writes in batches; returns the total acknowledged count.
    std::uint64_t write_registers(std::span<const sim::RegisterWrite> writes, std::size_t batch = 1024);
    std::uint64_t write_image(std::span<const std::int64_t> words, std::size_t batch = 1024);

    struct InferResult {
        std::vector<std::int64_t> output;
        std::uint64_t cycles = 0;
    };
    InferResult infer(std::span<const std::int64_t> input);

private:
    Frame expect(const Frame& request, FrameType type);

    int fd_ = -1;
    std::chrono::milliseconds timeout_;
    FrameDecoder decoder_;
    std::optional<Info> info_;
};

}  // namespace snlforge::net
