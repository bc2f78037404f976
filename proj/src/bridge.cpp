#include "extend3d/bridge.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <functional>
#include <future>
#include <limits>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <sys/un.h>
#include <unistd.h>

#include "extend3d/bytes.hpp"

namespace extend3d {

namespace {

constexpr std::uint8_t kMagic[4] = {'X', 'F', 'P', '1'};

bool known_type(std::uint8_t t) noexcept { return t >= 1 && t <= 3; }

// True when bytes[0..n) agrees with the magic on every byte present.
bool magic_prefix(std::span<const std::uint8_t> bytes) noexcept {
    const std::size_t n = std::min<std::size_t>(4, bytes.size());
    return std::memcmp(bytes.data(), kMagic, n) == 0;
}

std::uint32_t read_u32(const std::uint8_t* p) noexcept {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint64_t read_u64(const std::uint8_t* p) noexcept {
    return static_cast<std::uint64_t>(read_u32(p)) | static_cast<std::uint64_t>(read_u32(p + 4)) << 32;
}

std::uint32_t to_u32(int v) { return static_cast<std::uint32_t>(v); }

int checked_dim(std::uint32_t v, const char* what) {
    if (v < 1 || v > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
        throw ProtocolError(std::string("xfp1: bad ") + what);
    }
    return static_cast<int>(v);
}

void write_latent(ByteWriter& w, const WireLatent& latent) {
    if (const auto* dense = std::get_if<DenseLatent>(&latent)) {
        const Extent& e = dense->extent();
        w.u8(static_cast<std::uint8_t>(Stage::sparse_structure));
        for (int s : {e.x, e.y, e.z, dense->channels()}) w.u32(to_u32(s));
        for (float v : dense->values()) w.f32(v);
        return;
    }
    const auto& sparse = std::get<SparseLatent>(latent);
    const Extent& e = sparse.extent();
    w.u8(static_cast<std::uint8_t>(Stage::structured_latent));
    for (int s : {e.x, e.y, e.z, sparse.width()}) w.u32(to_u32(s));
    w.u32(static_cast<std::uint32_t>(sparse.count()));
    for (std::size_t i = 0; i < sparse.count(); ++i) {
        const Coord& p = sparse.coords()[i];
        w.u32(to_u32(p.x));
        w.u32(to_u32(p.y));
        w.u32(to_u32(p.z));
        for (float v : sparse.feature(i)) w.f32(v);
    }
}

// Header fields (mode, shape) have already been consumed.
WireLatent read_body(ByteReader& r, std::uint8_t mode, const std::uint32_t shape[4]) {
    const int X = checked_dim(shape[0], "shape x"), Y = checked_dim(shape[1], "shape y");
    const int Z = checked_dim(shape[2], "shape z"), C = checked_dim(shape[3], "channel count");
    const Extent ext{X, Y, Z};
    if (mode == static_cast<std::uint8_t>(Stage::sparse_structure)) {
        std::uint64_t n = 1;
        for (int k = 0; k < 4; ++k) {
            n *= shape[k];
            if (n > r.remaining() / 4) throw ProtocolError("xfp1: dense body shorter than its shape");
        }
        std::vector<float> data(n);
        for (auto& v : data) v = r.f32("dense body");
        return DenseLatent(ext, C, std::move(data));
    }
    if (mode != static_cast<std::uint8_t>(Stage::structured_latent)) throw ProtocolError("xfp1: unknown mode");
    const std::uint32_t count = r.u32("entry count");
    const std::uint64_t entry = 12 + 4ull * static_cast<std::uint64_t>(C);
    if (static_cast<std::uint64_t>(count) * entry > r.remaining()) {
        throw ProtocolError("xfp1: sparse body shorter than its entry count");
    }
    std::vector<Coord> coords;
    std::vector<float> features;
    coords.reserve(count);
    features.reserve(static_cast<std::size_t>(count) * C);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t x = r.u32(), y = r.u32(), z = r.u32();
        if (x >= shape[0] || y >= shape[1] || z >= shape[2]) throw ProtocolError("xfp1: sparse coordinate out of range");
        const Coord p{static_cast<int>(x), static_cast<int>(y), static_cast<int>(z)};
        if (!coords.empty() && !(coords.back() < p)) throw ProtocolError("xfp1: sparse coordinates not ascending");
        coords.push_back(p);
        for (int k = 0; k < C; ++k) features.push_back(r.f32("feature"));
    }
    return SparseLatent::from_entries(ext, C, std::move(coords), std::move(features));
}

const Extent& extent_of(const WireLatent& l) {
    return std::visit([](const auto& v) -> const Extent& { return v.extent(); }, l);
}

template <typename Fn>
auto wire_guard(Fn fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ProtocolError&) {
        throw;
    } catch (const Error& e) {
        throw ProtocolError(std::string("xfp1: ") + e.what());
    }
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    if (!known_type(static_cast<std::uint8_t>(frame.type))) throw ProtocolError("xfp1: unknown frame type");
    if (frame.payload.size() > kMaxPayload) throw ProtocolError("xfp1: payload exceeds 256 MiB");
    ByteWriter w;
    w.buffer().reserve(kFrameHeaderSize + frame.payload.size());
    w.bytes(kMagic);
    w.u8(static_cast<std::uint8_t>(frame.type));
    w.u64(frame.request_id);
    w.u32(static_cast<std::uint32_t>(frame.payload.size()));
    w.bytes(frame.payload);
    return w.take();
}

FrameDecode decode_frame(std::span<const std::uint8_t> bytes) {
    if (!magic_prefix(bytes)) throw ProtocolError("xfp1: bad magic");
    if (bytes.size() < kFrameHeaderSize) return {};
    const std::uint8_t type = bytes[4];
    if (!known_type(type)) throw ProtocolError("xfp1: unknown frame type " + std::to_string(type));
    const std::uint32_t len = read_u32(bytes.data() + 13);
    if (len > kMaxPayload) throw ProtocolError("xfp1: payload_len " + std::to_string(len) + " exceeds 256 MiB");
    if (bytes.size() - kFrameHeaderSize < len) return {};
    FrameDecode out;
    out.status = FrameDecode::Status::ok;
    out.frame.type = static_cast<FrameType>(type);
    out.frame.request_id = read_u64(bytes.data() + 5);
    out.frame.payload.assign(bytes.begin() + kFrameHeaderSize, bytes.begin() + kFrameHeaderSize + len);
    out.consumed = kFrameHeaderSize + len;
    return out;
}

std::vector<std::uint8_t> encode_request(const EvalRequest& request) {
    ByteWriter w;
    w.f32(request.t);
    ByteWriter body;
    write_latent(body, request.latent);
    auto b = body.take();
    // Mode and shape come first, then the condition, then the body.
    w.bytes(std::span(b).first(17));
    w.u32(static_cast<std::uint32_t>(request.condition.bytes.size()));
    w.bytes(request.condition.bytes);
    w.bytes(std::span(b).subspan(17));
    if (request.site) {
        const PatchSite& s = *request.site;
        if (s.columns.size() != static_cast<std::size_t>(s.side) * s.side) throw DimensionError("xfp1: malformed site");
        w.u32(to_u32(s.side));
        for (const auto& c : s.columns) {
            w.u32(to_u32(c[0]));
            w.u32(to_u32(c[1]));
        }
    }
    return w.take();
}

EvalRequest decode_request(std::span<const std::uint8_t> payload) {
    return wire_guard([&] {
        ByteReader r(payload);
        EvalRequest req;
        req.t = r.f32("t");
        const std::uint8_t mode = r.u8("mode");
        std::uint32_t shape[4];
        for (auto& s : shape) s = r.u32("shape");
        const std::uint32_t clen = r.u32("condition_len");
        if (clen > r.remaining()) throw ProtocolError("xfp1: condition longer than payload");
        auto cond = r.bytes(clen, "condition");
        req.condition.bytes.assign(cond.begin(), cond.end());
        req.latent = read_body(r, mode, shape);
        if (r.remaining() > 0) {
            const std::uint32_t side = r.u32("site side");
            const Extent& e = extent_of(req.latent);
            if (static_cast<int>(side) != e.x || e.x != e.y) throw ProtocolError("xfp1: site side does not match patch");
            if (static_cast<std::uint64_t>(side) * side * 8 != r.remaining()) {
                throw ProtocolError("xfp1: site block length mismatch");
            }
            PatchSite site;
            site.side = static_cast<int>(side);
            site.columns.resize(static_cast<std::size_t>(side) * side);
            for (auto& c : site.columns) {
                for (auto& v : c) {
                    const std::uint32_t raw = r.u32("site column");
                    if (raw > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
                        throw ProtocolError("xfp1: site column out of range");
                    }
                    v = static_cast<int>(raw);
                }
            }
            req.site = std::move(site);
        }
        return req;
    });
}

std::vector<std::uint8_t> encode_response(const EvalResponse& response) {
    ByteWriter w;
    write_latent(w, response.vector);
    return w.take();
}

EvalResponse decode_response(std::span<const std::uint8_t> payload) {
    return wire_guard([&] {
        ByteReader r(payload);
        const std::uint8_t mode = r.u8("mode");
        std::uint32_t shape[4];
        for (auto& s : shape) s = r.u32("shape");
        EvalResponse out{read_body(r, mode, shape)};
        if (r.remaining() != 0) throw ProtocolError("xfp1: trailing bytes in response");
        return out;
    });
}

void FrameParser::feed(std::span<const std::uint8_t> bytes) {
    compact();
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

void FrameParser::compact() {
    if (pos_ == 0) return;
    if (pos_ == buf_.size()) {
        buf_.clear();
        pos_ = 0;
    } else if (pos_ >= 65536 && pos_ * 2 >= buf_.size()) {
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
        pos_ = 0;
    }
}

std::optional<FrameParser::Event> FrameParser::next() {
    const std::span<const std::uint8_t> avail(buf_.data() + pos_, buf_.size() - pos_);
    if (avail.empty()) return std::nullopt;
    auto resync_from = [&](std::size_t start) {
        std::size_t i = start;
        while (i < avail.size() && !magic_prefix(avail.subspan(i))) ++i;
        pos_ += i;
        return i;
    };
    if (!magic_prefix(avail)) {
        const std::size_t skipped = resync_from(1);
        return Event{std::nullopt, 0, "xfp1: bad magic, skipped " + std::to_string(skipped) + " bytes"};
    }
    if (avail.size() < kFrameHeaderSize) return std::nullopt;
    const std::uint8_t type = avail[4];
    const std::uint64_t id = read_u64(avail.data() + 5);
    const std::uint32_t len = read_u32(avail.data() + 13);
    if (len > kMaxPayload) {
        resync_from(4);
        return Event{std::nullopt, id, "xfp1: payload_len " + std::to_string(len) + " exceeds 256 MiB"};
    }
    if (avail.size() - kFrameHeaderSize < len) return std::nullopt;
    if (!known_type(type)) {
        pos_ += kFrameHeaderSize + len;
        return Event{std::nullopt, id, "xfp1: unknown frame type " + std::to_string(type)};
    }
    FrameDecode d = decode_frame(avail);
    pos_ += d.consumed;
    return Event{std::move(d.frame), d.frame.request_id, {}};
}

Frame handle_frame(VectorFieldProvider& provider, const Frame& frame) {
    auto error = [&](const std::string& msg) {
        return Frame{FrameType::error, frame.request_id, std::vector<std::uint8_t>(msg.begin(), msg.end())};
    };
    if (frame.type != FrameType::request) return error("xfp1: server accepts only request frames");
    try {
        const EvalRequest req = decode_request(frame.payload);
        const FieldQuery query{req.mode(), static_cast<double>(req.t), &req.condition,
                               req.site ? &*req.site : nullptr};
        EvalResponse resp;
        if (const auto* dense = std::get_if<DenseLatent>(&req.latent)) {
            DenseLatent v = provider.evaluate(*dense, query);
            if (!v.same_shape(*dense)) return error("provider returned a vector of the wrong shape");
            resp.vector = std::move(v);
        } else {
            const auto& sparse = std::get<SparseLatent>(req.latent);
            SparseLatent v = provider.evaluate(sparse, query);
            if (!v.same_shape(sparse)) return error("provider returned a vector of the wrong shape");
            resp.vector = std::move(v);
        }
        return Frame{FrameType::response, frame.request_id, encode_response(resp)};
    } catch (const std::exception& e) {
        return error(e.what());
    }
}

std::vector<Frame> ServerSession::feed(std::span<const std::uint8_t> bytes) {
    parser_.feed(bytes);
    std::vector<Frame> out;
    while (auto ev = parser_.next()) {
        if (ev->frame) {
            out.push_back(handle_frame(provider_, *ev->frame));
        } else {
            out.push_back({FrameType::error, ev->request_id, std::vector<std::uint8_t>(ev->error.begin(), ev->error.end())});
        }
    }
    return out;
}

Endpoint Endpoint::parse(const std::string& text) {
    Endpoint ep;
    if (text.rfind("unix:", 0) == 0) {
        ep.kind = Kind::unix_socket;
        ep.path = text.substr(5);
        if (ep.path.empty()) throw ConfigError("endpoint: empty unix socket path");
        if (ep.path.size() >= sizeof(sockaddr_un::sun_path)) throw ConfigError("endpoint: unix socket path too long");
        return ep;
    }
    std::string rest = text.rfind("tcp://", 0) == 0 ? text.substr(6) : text;
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0) throw ConfigError("endpoint: expected host:port, got '" + text + "'");
    ep.host = rest.substr(0, colon);
    const std::string port = rest.substr(colon + 1);
    if (port.empty() || port.size() > 5 || !std::all_of(port.begin(), port.end(), ::isdigit)) {
        throw ConfigError("endpoint: bad port in '" + text + "'");
    }
    ep.port = std::stoi(port);
    if (ep.port > 65535) throw ConfigError("endpoint: port out of range");
    return ep;
}

std::string Endpoint::str() const {
    return kind == Kind::unix_socket ? "unix:" + path : "tcp://" + host + ":" + std::to_string(port);
}

namespace {

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { reset(); }
    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }

    int fd() const noexcept { return fd_; }
    explicit operator bool() const noexcept { return fd_ >= 0; }
    void shutdown() noexcept {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }
    void reset() noexcept {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

bool send_all(int fd, std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return false;
        sent += static_cast<std::size_t>(n);
    }
    return true;
}

// Returns bytes read, 0 on orderly close, -1 on error.
ssize_t recv_some(int fd, std::uint8_t* buf, std::size_t cap) {
    for (;;) {
        const ssize_t n = ::recv(fd, buf, cap, 0);
        if (n < 0 && errno == EINTR) continue;
        return n;
    }
}

Socket connect_to(const Endpoint& ep) {
    if (ep.kind == Endpoint::Kind::unix_socket) {
        Socket s(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
        if (!s) throw ProviderError("remote: socket() failed");
        sockaddr_un addr{};
        addr.sun_family = AF_UNIX;
        std::strncpy(addr.sun_path, ep.path.c_str(), sizeof(addr.sun_path) - 1);
        if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            throw ProviderError("remote: cannot connect to " + ep.str() + ": " + std::strerror(errno));
        }
        return s;
    }
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(ep.port);
    if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
        throw ProviderError("remote: cannot resolve " + ep.str());
    }
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        Socket s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
        if (!s) continue;
        if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
            int one = 1;
            ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            return s;
        }
    }
    throw ProviderError("remote: cannot connect to " + ep.str() + ": " + std::strerror(errno));
}

Socket listen_on(Endpoint& ep) {
    if (ep.kind == Endpoint::Kind::unix_socket) {
        struct stat st{};
        if (::stat(ep.path.c_str(), &st) == 0 && S_ISSOCK(st.st_mode)) ::unlink(ep.path.c_str());
        Socket s(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
        if (!s) throw ProviderError("serve: socket() failed");
        sockaddr_un addr{};
        addr.sun_family = AF_UNIX;
        std::strncpy(addr.sun_path, ep.path.c_str(), sizeof(addr.sun_path) - 1);
        if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(s.fd(), 64) != 0) {
            throw ProviderError("serve: cannot bind " + ep.str() + ": " + std::strerror(errno));
        }
        return s;
    }
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(ep.port);
    if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
        throw ProviderError("serve: cannot resolve " + ep.str());
    }
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        Socket s(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
        if (!s) continue;
        int one = 1;
        ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        if (::bind(s.fd(), ai->ai_addr, ai->ai_addrlen) != 0 || ::listen(s.fd(), 64) != 0) continue;
        sockaddr_storage bound{};
        socklen_t len = sizeof(bound);
        ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
        ep.port = bound.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port)
                                              : ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
        return s;
    }
    throw ProviderError("serve: cannot bind " + ep.str() + ": " + std::strerror(errno));
}

}  // namespace

struct RemoteProvider::Impl {
    Endpoint endpoint;
    std::chrono::milliseconds timeout;
    Socket sock;
    std::mutex write_mu;
    std::mutex mu;
    std::unordered_map<std::uint64_t, std::promise<Frame>> pending;
    bool closed = false;
    std::string close_reason;
    std::uint64_t next_id = 1;
    std::thread reader;

    void fail_all(const std::string& reason) {
        std::lock_guard lock(mu);
        if (!closed) {
            closed = true;
            close_reason = reason;
        }
        for (auto& [id, p] : pending) {
            p.set_exception(std::make_exception_ptr(
                ProviderError("remote: request " + std::to_string(id) + " failed: " + close_reason)));
        }
        pending.clear();
    }

    void read_loop() {
        FrameParser parser;
        std::vector<std::uint8_t> buf(1 << 16);
        for (;;) {
            const ssize_t n = recv_some(sock.fd(), buf.data(), buf.size());
            if (n <= 0) {
                fail_all(n == 0 ? "connection closed by server" : "connection error");
                return;
            }
            parser.feed(std::span(buf.data(), static_cast<std::size_t>(n)));
            while (auto ev = parser.next()) {
                if (!ev->frame) {
                    fail_all("protocol violation from server: " + ev->error);
                    sock.shutdown();
                    return;
                }
                std::lock_guard lock(mu);
                auto it = pending.find(ev->frame->request_id);
                if (it == pending.end()) continue;  // late reply to a timed-out request
                it->second.set_value(std::move(*ev->frame));
                pending.erase(it);
            }
        }
    }
};

RemoteProvider::RemoteProvider(const std::string& endpoint, std::chrono::milliseconds timeout)
    : impl_(std::make_unique<Impl>()) {
    impl_->endpoint = Endpoint::parse(endpoint);
    impl_->timeout = timeout;
    impl_->sock = connect_to(impl_->endpoint);
    impl_->reader = std::thread([impl = impl_.get()] { impl->read_loop(); });
}

RemoteProvider::~RemoteProvider() {
    impl_->sock.shutdown();
    if (impl_->reader.joinable()) impl_->reader.join();
}

WireLatent RemoteProvider::call(WireLatent latent, const FieldQuery& query) {
    EvalRequest req;
    req.t = static_cast<float>(query.t);
    if (query.condition) req.condition = *query.condition;
    if (query.site) req.site = *query.site;
    req.latent = std::move(latent);

    std::future<Frame> reply;
    std::uint64_t id = 0;
    {
        std::lock_guard lock(impl_->mu);
        if (impl_->closed) throw ProviderError("remote: connection unusable: " + impl_->close_reason);
        id = impl_->next_id++;
        reply = impl_->pending[id].get_future();
    }
    const auto bytes = encode_frame({FrameType::request, id, encode_request(req)});
    bool ok = false;
    {
        std::lock_guard lock(impl_->write_mu);
        ok = send_all(impl_->sock.fd(), bytes);
    }
    if (!ok) {
        impl_->fail_all("send failed");
        throw ProviderError("remote: request " + std::to_string(id) + " could not be sent");
    }
    if (reply.wait_for(impl_->timeout) != std::future_status::ready) {
        std::lock_guard lock(impl_->mu);
        impl_->pending.erase(id);
        throw ProviderError("remote: request " + std::to_string(id) + " timed out after " +
                            std::to_string(impl_->timeout.count()) + " ms");
    }
    Frame frame = reply.get();
    if (frame.type == FrameType::error) {
        throw ProviderError("remote: request " + std::to_string(id) + " failed on server: " +
                            std::string(frame.payload.begin(), frame.payload.end()));
    }
    if (frame.type != FrameType::response) throw ProtocolError("remote: unexpected frame type in reply");
    EvalResponse resp = decode_response(frame.payload);
    const bool same = std::visit(
        [&](const auto& sent) {
            using T = std::decay_t<decltype(sent)>;
            const T* got = std::get_if<T>(&resp.vector);
            return got && got->same_shape(sent);
        },
        req.latent);
    if (!same) throw ProtocolError("remote: response shape differs from request " + std::to_string(id));
    return std::move(resp.vector);
}

DenseLatent RemoteProvider::evaluate(const DenseLatent& patch, const FieldQuery& query) {
    return std::get<DenseLatent>(call(patch, query));
}

SparseLatent RemoteProvider::evaluate(const SparseLatent& patch, const FieldQuery& query) {
    return std::get<SparseLatent>(call(patch, query));
}

namespace {

class WorkerPool {
public:
    explicit WorkerPool(int n) {
        for (int i = 0; i < std::max(1, n); ++i) threads_.emplace_back([this] { run(); });
    }
    ~WorkerPool() { stop(); }

    void submit(std::function<void()> task) {
        {
            std::lock_guard lock(mu_);
            if (stopping_) return;
            tasks_.push_back(std::move(task));
        }
        cv_.notify_one();
    }

    void stop() {
        {
            std::lock_guard lock(mu_);
            stopping_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_)
            if (t.joinable()) t.join();
    }

private:
    void run() {
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [this] { return stopping_ || !tasks_.empty(); });
                if (tasks_.empty()) return;
                task = std::move(tasks_.front());
                tasks_.pop_front();
            }
            task();
        }
    }

    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> tasks_;
    bool stopping_ = false;
    std::vector<std::thread> threads_;
};

struct Connection {
    Socket sock;
    std::mutex write_mu;

    void write(const Frame& frame) {
        const auto bytes = encode_frame(frame);
        std::lock_guard lock(write_mu);
        send_all(sock.fd(), bytes);
    }
};

}  // namespace

struct Server::Impl {
    VectorFieldProvider& provider;
    Endpoint endpoint;
    int workers;
    Socket listener;
    std::unique_ptr<WorkerPool> pool;
    std::mutex provider_mu;
    std::mutex mu;
    std::condition_variable stopped_cv;
    bool started = false;
    bool stopped = false;
    std::vector<std::shared_ptr<Connection>> connections;
    std::vector<std::thread> readers;
    std::thread acceptor;

    Impl(VectorFieldProvider& p, Endpoint ep, int w) : provider(p), endpoint(std::move(ep)), workers(w) {}

    Frame answer(const Frame& f) {
        if (provider.concurrent()) return handle_frame(provider, f);
        std::lock_guard lock(provider_mu);
        return handle_frame(provider, f);
    }

    void serve_connection(std::shared_ptr<Connection> conn) {
        FrameParser parser;
        std::vector<std::uint8_t> buf(1 << 16);
        for (;;) {
            const ssize_t n = recv_some(conn->sock.fd(), buf.data(), buf.size());
            if (n <= 0) return;
            parser.feed(std::span(buf.data(), static_cast<std::size_t>(n)));
            while (auto ev = parser.next()) {
                if (!ev->frame) {
                    conn->write({FrameType::error, ev->request_id,
                                 std::vector<std::uint8_t>(ev->error.begin(), ev->error.end())});
                } else if (ev->frame->type != FrameType::request) {
                    conn->write(handle_frame(provider, *ev->frame));
                } else {
                    pool->submit([this, conn, f = std::move(*ev->frame)] { conn->write(answer(f)); });
                }
            }
        }
    }

    void accept_loop() {
        for (;;) {
            const int fd = ::accept4(listener.fd(), nullptr, nullptr, SOCK_CLOEXEC);
            if (fd < 0) {
                if (errno == EINTR || errno == ECONNABORTED) continue;
                return;
            }
            auto conn = std::make_shared<Connection>();
            conn->sock = Socket(fd);
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            std::lock_guard lock(mu);
            if (stopped) return;
            connections.push_back(conn);
            readers.emplace_back([this, conn] { serve_connection(conn); });
        }
    }
};

Server::Server(VectorFieldProvider& provider, const std::string& endpoint, int workers)
    : impl_(std::make_unique<Impl>(provider, Endpoint::parse(endpoint), workers)) {}

Server::~Server() { stop(); }

std::string Server::start() {
    std::lock_guard lock(impl_->mu);
    if (impl_->started) throw Error("server: already started");
    impl_->listener = listen_on(impl_->endpoint);
    impl_->pool = std::make_unique<WorkerPool>(impl_->workers);
    impl_->started = true;
    impl_->acceptor = std::thread([impl = impl_.get()] { impl->accept_loop(); });
    return impl_->endpoint.str();
}

void Server::wait() {
    std::unique_lock lock(impl_->mu);
    impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
}

void Server::stop() {
    std::vector<std::thread> readers;
    {
        std::lock_guard lock(impl_->mu);
        if (!impl_->started || impl_->stopped) return;
        impl_->stopped = true;
        impl_->listener.shutdown();
        for (auto& c : impl_->connections) c->sock.shutdown();
        readers = std::move(impl_->readers);
    }
    impl_->stopped_cv.notify_all();
    if (impl_->acceptor.joinable()) impl_->acceptor.join();
    for (auto& t : readers)
        if (t.joinable()) t.join();
    impl_->pool->stop();
    impl_->listener.reset();
    if (impl_->endpoint.kind == Endpoint::Kind::unix_socket) ::unlink(impl_->endpoint.path.c_str());
}

void serve_provider(VectorFieldProvider& provider, const std::string& endpoint, int workers) {
    Server server(provider, endpoint, workers);
    server.start();
    for (;;) server.wait();
}

}  // namespace extend3d
