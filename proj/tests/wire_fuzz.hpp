#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "extend3d/bridge.hpp"

namespace testing {

inline extend3d::EvalRequest random_request(std::mt19937_64& rng) {
    using namespace extend3d;
    std::uniform_int_distribution<int> side(1, 4), small(1, 3), byte(0, 255);
    std::uniform_real_distribution<float> val(-2.f, 2.f);
    EvalRequest req;
    req.t = std::uniform_real_distribution<float>(0.01f, 1.f)(rng);
    req.condition.bytes.resize(static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 44)(rng)));
    for (auto& b : req.condition.bytes) b = static_cast<std::uint8_t>(byte(rng));
    const int K = side(rng);
    if (rng() & 1) {
        DenseLatent z({K, K, K}, small(rng));
        for (auto& v : z.values()) v = val(rng);
        req.latent = std::move(z);
    } else {
        const int width = small(rng);
        std::vector<Coord> coords;
        std::vector<float> feats;
        std::bernoulli_distribution keep(0.3);
        for (int x = 0; x < K; ++x)
            for (int y = 0; y < K; ++y)
                for (int z = 0; z < K; ++z)
                    if (keep(rng)) {
                        coords.push_back({x, y, z});
                        for (int k = 0; k < width; ++k) feats.push_back(val(rng));
                    }
        req.latent = SparseLatent::from_entries({K, K, K}, width, std::move(coords), std::move(feats));
    }
    if (rng() & 1) {
        PatchSite site;
        site.side = K;
        std::uniform_int_distribution<int> col(0, 63);
        for (int k = 0; k < K * K; ++k) site.columns.push_back({col(rng), col(rng)});
        req.site = std::move(site);
    }
    return req;
}

inline extend3d::Frame random_frame(std::mt19937_64& rng) {
    using namespace extend3d;
    Frame f;
    f.type = static_cast<FrameType>(std::uniform_int_distribution<int>(1, 3)(rng));
    f.request_id = rng();
    f.payload.resize(static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 300)(rng)));
    for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng());
    return f;
}

struct FuzzOutcome {
    int cases = 0;
    int failures = 0;
    std::string first_failure;

    void fail(const std::string& what) {
        if (failures++ == 0) first_failure = what;
    }
};

inline std::uint32_t le32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return b[at] | b[at + 1] << 8 | b[at + 2] << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

inline std::uint64_t le64(const std::vector<std::uint8_t>& b, std::size_t at) {
    return le32(b, at) | static_cast<std::uint64_t>(le32(b, at + 4)) << 32;
}

// What a server must answer for one (possibly corrupted) frame, derived from
// the framing rules alone: 'r' response, 'e' error, 'm' bad-magic error,
// '-' nothing yet.
struct Expected {
    char kind;
    std::uint64_t id;
};

inline Expected expected_reply(const std::vector<std::uint8_t>& bytes) {
    using namespace extend3d;
    static constexpr char magic[4] = {'X', 'F', 'P', '1'};
    for (std::size_t k = 0; k < 4; ++k) {
        if (k == bytes.size()) return {'-', 0};
        if (bytes[k] != static_cast<std::uint8_t>(magic[k])) return {'m', 0};
    }
    if (bytes.size() < kFrameHeaderSize) return {'-', 0};
    const std::uint8_t type = bytes[4];
    const std::uint64_t id = le64(bytes, 5);
    const std::uint32_t len = le32(bytes, 13);
    if (len > kMaxPayload) return {'e', id};
    if (bytes.size() - kFrameHeaderSize < len) return {'-', 0};
    if (type != 1) return {'e', id};
    try {
        decode_request(std::span(bytes).subspan(kFrameHeaderSize, len));
        return {'r', id};
    } catch (const ProtocolError&) {
        return {'e', id};
    }
}

// Encode/decode round trips of random frames and requests, then mutated
// request frames pushed through a server session. Every mutated frame must
// produce exactly the reply the framing rules demand, and a clean frame sent
// afterwards on the same session must still be answered.
inline FuzzOutcome run_wire_fuzz(int random_cases, int mutated_cases, std::uint64_t seed) {
    using namespace extend3d;
    FuzzOutcome out;
    std::mt19937_64 rng(seed);
    ZeroField zero;

    for (int n = 0; n < random_cases; ++n) {
        ++out.cases;
        try {
            const Frame f = random_frame(rng);
            auto bytes = encode_frame(f);
            if (bytes[0] != 0x58 || bytes[1] != 0x46 || bytes[2] != 0x50 || bytes[3] != 0x31) out.fail("magic bytes");
            const std::size_t clean = bytes.size();
            bytes.push_back(0xAB);  // trailing byte must not be consumed
            const FrameDecode d = decode_frame(bytes);
            if (d.status != FrameDecode::Status::ok || !(d.frame == f) || d.consumed != clean) out.fail("frame round trip");
            const FrameDecode cut = decode_frame(std::span(bytes).first(clean - 1));
            if (cut.status != FrameDecode::Status::incomplete || cut.consumed != 0) out.fail("truncated frame surfaced");

            const EvalRequest req = random_request(rng);
            if (!(decode_request(encode_request(req)) == req)) out.fail("request round trip");
            const EvalResponse resp{req.latent};
            if (!(decode_response(encode_response(resp)) == resp)) out.fail("response round trip");

            // Random garbage never yields a response.
            std::vector<std::uint8_t> junk(static_cast<std::size_t>(rng() % 64));
            for (auto& b : junk) b = static_cast<std::uint8_t>(rng());
            ServerSession session(zero);
            for (const auto& fr : session.feed(junk))
                if (fr.type != FrameType::error) out.fail("garbage answered with a non-error frame");
        } catch (const std::exception& e) {
            out.fail(std::string("random case threw: ") + e.what());
        }
    }

    for (int n = 0; n < mutated_cases; ++n) {
        ++out.cases;
        try {
            const EvalRequest req = random_request(rng);
            std::vector<std::uint8_t> bytes = encode_frame({FrameType::request, rng() >> 1, encode_request(req)});
            const int flips = 1 + static_cast<int>(rng() % 4);
            for (int k = 0; k < flips; ++k) {
                const std::size_t at = rng() % bytes.size();
                switch (rng() % 4) {
                    case 0: bytes[at] ^= static_cast<std::uint8_t>(1u << (rng() % 8)); break;
                    case 1: bytes[at] = static_cast<std::uint8_t>(rng()); break;
                    case 2: bytes.resize(std::max<std::size_t>(1, at)); break;
                    default:
                        // Target the payload header fields most likely to matter.
                        if (bytes.size() > kFrameHeaderSize + 20)
                            bytes[kFrameHeaderSize + rng() % 21] = static_cast<std::uint8_t>(rng());
                }
            }
            const Expected want = expected_reply(bytes);
            ServerSession session(zero);
            const std::vector<Frame> got = session.feed(bytes);
            if (want.kind == '-') {
                if (!got.empty()) out.fail("reply to an incomplete frame");
            } else if (want.kind == 'm') {
                if (got.empty()) out.fail("bad magic not reported");
                for (const auto& f : got)
                    if (f.type == FrameType::response) out.fail("response after bad magic");
            } else {
                // A shortened payload_len leaves trailing bytes that are
                // themselves garbage: they may only add error frames.
                const bool trailing = bytes.size() > kFrameHeaderSize + le32(bytes, 13);
                if (got.empty() || (got.size() > 1 && !trailing)) {
                    out.fail("expected one reply, got " + std::to_string(got.size()));
                } else {
                    const FrameType type = want.kind == 'r' ? FrameType::response : FrameType::error;
                    if (got[0].type != type || got[0].request_id != want.id) out.fail("wrong reply type or id");
                    if (type == FrameType::error && got[0].payload.empty()) out.fail("empty error message");
                    for (std::size_t k = 1; k < got.size(); ++k)
                        if (got[k].type != FrameType::error) out.fail("trailing garbage answered");
                }
            }
            // The connection survives: once the corrupted frame has been
            // consumed, the next clean frame is answered.
            if (want.kind != '-') {
                const auto good = encode_frame({FrameType::request, 7, encode_request(random_request(rng))});
                int responses = 0;
                for (const auto& f : session.feed(good)) {
                    if (f.type == FrameType::response && f.request_id == 7) ++responses;
                    else if (f.type != FrameType::error) out.fail("unexpected frame after recovery");
                }
                if (responses != 1) out.fail("clean frame after a corrupted one was not answered");
            }
        } catch (const std::exception& e) {
            out.fail(std::string("mutated case threw: ") + e.what());
        }
    }
    return out;
}

}  // namespace testing
