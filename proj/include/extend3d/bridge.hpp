#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "extend3d/flowcore.hpp"

namespace extend3d {

// XFP1 framing: "XFP1", u8 type, u64 request_id, u32 payload_len, payload.
inline constexpr std::size_t kFrameHeaderSize = 17;
inline constexpr std::uint32_t kMaxPayload = 256u << 20;

enum class FrameType : std::uint8_t { request = 1, response = 2, error = 3 };

struct Frame {
    FrameType type = FrameType::request;
    std::uint64_t request_id = 0;
    std::vector<std::uint8_t> payload;

    friend bool operator==(const Frame&, const Frame&) = default;
};

std::vector<std::uint8_t> encode_frame(const Frame& frame);

/// Result of decoding from the front of a byte buffer. `incomplete` means
/// more bytes are needed; nothing was consumed.
struct FrameDecode {
    enum class Status { ok, incomplete } status = Status::incomplete;
    Frame frame;
    std::size_t consumed = 0;
};

/// Throws ProtocolError on bad magic, unknown type or payload_len > 256 MiB.
FrameDecode decode_frame(std::span<const std::uint8_t> bytes);

using WireLatent = std::variant<DenseLatent, SparseLatent>;

/// Request payload: f32 t, u8 mode (1 = SS dense, 2 = SLat sparse), four u32
/// shape (x, y, z, channels or feature width), u32 condition_len, condition
/// bytes, latent body, then an optional site block (u32 side, side^2 pairs of
/// u32 global column coordinates).
/// Dense body: row-major f32. Sparse body: u32 count, then per entry three
/// u32 coordinates and `width` f32 features, coordinates strictly ascending.
struct EvalRequest {
    float t = 1.0f;
    ConditionEmbedding condition;
    WireLatent latent;
    std::optional<PatchSite> site;

    Stage mode() const noexcept { return latent.index() == 0 ? Stage::sparse_structure : Stage::structured_latent; }
    friend bool operator==(const EvalRequest&, const EvalRequest&) = default;
};

/// Response payload: u8 mode, four u32 shape, body as in the request.
struct EvalResponse {
    WireLatent vector;
    friend bool operator==(const EvalResponse&, const EvalResponse&) = default;
};

std::vector<std::uint8_t> encode_request(const EvalRequest& request);
EvalRequest decode_request(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_response(const EvalResponse& response);
EvalResponse decode_response(std::span<const std::uint8_t> payload);

/// Incremental frame parser over a byte stream. Framing errors are reported
/// as events; after a bad magic the parser skips to the next "XFP1".
class FrameParser {
public:
    struct Event {
        std::optional<Frame> frame;  // empty for errors
        std::uint64_t request_id = 0;
        std::string error;
    };

    void feed(std::span<const std::uint8_t> bytes);
    std::optional<Event> next();
    std::size_t buffered() const noexcept { return buf_.size() - pos_; }

private:
    void compact();

    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

/// Answers one frame: requests are evaluated on the provider, anything else
/// (or an undecodable request) becomes a type-3 error frame.
Frame handle_frame(VectorFieldProvider& provider, const Frame& frame);

/// Synchronous server-side protocol state machine: bytes in, frames out.
/// The socket server runs the same logic with requests fanned out to workers.
class ServerSession {
public:
    explicit ServerSession(VectorFieldProvider& provider) : provider_(provider) {}
    std::vector<Frame> feed(std::span<const std::uint8_t> bytes);

private:
    VectorFieldProvider& provider_;
    FrameParser parser_;
};

/// "tcp://host:port", "host:port" or "unix:/path".
struct Endpoint {
    enum class Kind { tcp, unix_socket } kind = Kind::tcp;
    std::string host;
    int port = 0;
    std::string path;

    static Endpoint parse(const std::string& text);
    std::string str() const;
};

/// VectorFieldProvider that forwards evaluations over one pipelined
/// connection. Safe for concurrent evaluate() calls.
class RemoteProvider final : public VectorFieldProvider {
public:
    explicit RemoteProvider(const std::string& endpoint,
                            std::chrono::milliseconds timeout = std::chrono::seconds(30));
    ~RemoteProvider() override;

    RemoteProvider(const RemoteProvider&) = delete;
    RemoteProvider& operator=(const RemoteProvider&) = delete;

    DenseLatent evaluate(const DenseLatent& patch, const FieldQuery& query) override;
    SparseLatent evaluate(const SparseLatent& patch, const FieldQuery& query) override;

private:
    struct Impl;
    WireLatent call(WireLatent latent, const FieldQuery& query);
    std::unique_ptr<Impl> impl_;
};

/// Socket server for a provider. start() binds and returns the bound endpoint
/// (port 0 resolves to the chosen port); stop() closes every connection.
class Server {
public:
    Server(VectorFieldProvider& provider, const std::string& endpoint, int workers = 4);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    std::string start();
    void wait();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Binds and serves until the process ends.
[[noreturn]] void serve_provider(VectorFieldProvider& provider, const std::string& endpoint, int workers = 4);

}  // namespace extend3d
