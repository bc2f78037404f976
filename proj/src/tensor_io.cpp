#include "extend3d/tensor_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "extend3d/bytes.hpp"
#include "extend3d/errors.hpp"

namespace extend3d {

namespace {
constexpr char kMagic[8] = {'X', 'L', 'T', '1', '\0', '\0', '\0', '\0'};
constexpr std::uint32_t kMaxRank = 16;
}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path);
}

std::size_t Tensor::element_count() const noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::vector<std::uint8_t> encode_xlt(const Tensor& tensor) {
    if (tensor.data.size() != tensor.element_count()) throw DimensionError("xlt: payload does not match shape");
    ByteWriter w;
    w.buffer().reserve(12 + 4 * tensor.shape.size() + 4 * tensor.data.size());
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(static_cast<std::uint32_t>(tensor.shape.size()));
    for (auto d : tensor.shape) w.u32(d);
    for (float v : tensor.data) w.f32(v);
    return w.take();
}

Tensor decode_xlt(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    auto magic = r.bytes(8, "magic");
    if (std::memcmp(magic.data(), kMagic, 8) != 0) throw ParseError("xlt: bad magic", 0);
    Tensor t;
    const std::size_t rank_at = r.offset();
    const std::uint32_t rank = r.u32("rank");
    if (rank > kMaxRank) throw ParseError("xlt: rank too large", rank_at);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        t.shape.push_back(r.u32("dimension"));
        count *= t.shape.back();
        if (count > bytes.size()) throw ParseError("xlt: declared payload exceeds file size", r.offset());
    }
    if (r.remaining() / 4 < count) throw ParseError("xlt: truncated payload", r.offset());
    t.data.resize(count);
    for (auto& v : t.data) v = r.f32("payload");
    if (r.remaining() != 0) throw ParseError("xlt: trailing bytes after payload", r.offset());
    return t;
}

void write_xlt(const std::string& path, const Tensor& tensor) { write_file_bytes(path, encode_xlt(tensor)); }

Tensor read_xlt(const std::string& path) { return decode_xlt(read_file_bytes(path)); }

Tensor to_tensor(const DenseLatent& latent) {
    const auto& e = latent.extent();
    return {{static_cast<std::uint32_t>(e.x), static_cast<std::uint32_t>(e.y), static_cast<std::uint32_t>(e.z),
             static_cast<std::uint32_t>(latent.channels())},
            {latent.values().begin(), latent.values().end()}};
}

Tensor to_tensor(const OccupancyGrid& grid) {
    const auto& e = grid.extent();
    Tensor t{{static_cast<std::uint32_t>(e.x), static_cast<std::uint32_t>(e.y), static_cast<std::uint32_t>(e.z)},
             {}};
    t.data.reserve(e.cells());
    for (auto c : grid.cells()) t.data.push_back(c ? 1.0f : 0.0f);
    return t;
}

Tensor to_tensor(const SparseLatent& latent) {
    const auto w = static_cast<std::size_t>(latent.width());
    Tensor t{{static_cast<std::uint32_t>(latent.count()), static_cast<std::uint32_t>(3 + w)}, {}};
    t.data.reserve(latent.count() * (3 + w));
    for (std::size_t i = 0; i < latent.count(); ++i) {
        const auto& p = latent.coords()[i];
        t.data.push_back(static_cast<float>(p.x));
        t.data.push_back(static_cast<float>(p.y));
        t.data.push_back(static_cast<float>(p.z));
        auto f = latent.feature(i);
        t.data.insert(t.data.end(), f.begin(), f.end());
    }
    return t;
}

DenseLatent dense_from_tensor(const Tensor& tensor) {
    if (tensor.shape.size() != 4) throw DimensionError("expected a rank-4 (X, Y, Z, C) tensor");
    return DenseLatent({static_cast<int>(tensor.shape[0]), static_cast<int>(tensor.shape[1]),
                        static_cast<int>(tensor.shape[2])},
                       static_cast<int>(tensor.shape[3]), tensor.data);
}

OccupancyGrid occupancy_from_tensor(const Tensor& tensor) {
    if (tensor.shape.size() != 3) throw DimensionError("expected a rank-3 (X, Y, Z) occupancy tensor");
    OccupancyGrid g({static_cast<int>(tensor.shape[0]), static_cast<int>(tensor.shape[1]),
                     static_cast<int>(tensor.shape[2])});
    const auto& e = g.extent();
    std::size_t i = 0;
    for (int x = 0; x < e.x; ++x)
        for (int y = 0; y < e.y; ++y)
            for (int z = 0; z < e.z; ++z) g.set({x, y, z}, tensor.data[i++] > 0.5f);
    return g;
}

SparseLatent sparse_from_tensor(const Tensor& tensor, Extent extent) {
    if (tensor.shape.size() != 2 || tensor.shape[1] < 4) {
        throw DimensionError("expected a rank-2 (count, 3 + width) sparse tensor");
    }
    const std::size_t n = tensor.shape[0];
    const std::size_t cols = tensor.shape[1];
    const std::size_t w = cols - 3;
    std::vector<Coord> coords;
    std::vector<float> features;
    coords.reserve(n);
    features.reserve(n * w);
    for (std::size_t i = 0; i < n; ++i) {
        const float* row = tensor.data.data() + i * cols;
        for (int k = 0; k < 3; ++k) {
            if (row[k] != std::floor(row[k])) throw DimensionError("sparse tensor: non-integer coordinate");
        }
        coords.push_back({static_cast<int>(row[0]), static_cast<int>(row[1]), static_cast<int>(row[2])});
        features.insert(features.end(), row + 3, row + cols);
    }
    return SparseLatent::from_entries(extent, static_cast<int>(w), std::move(coords), std::move(features));
}

}  // namespace extend3d
