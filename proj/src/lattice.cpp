#include "extend3d/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "extend3d/errors.hpp"

namespace extend3d {

void Dims::validate() const {
    if (a < 1 || b < 1 || N < 1 || M < 1 || C < 1 || l < 1) {
        throw ConfigError("dims: all of a, b, N, M, C, l must be >= 1");
    }
    if (M % N != 0) {
        throw ConfigError("dims: M (" + std::to_string(M) + ") must be a multiple of N (" +
                          std::to_string(N) + ")");
    }
}

DenseLatent::DenseLatent(Extent extent, int channels, float fill)
    : extent_(extent), channels_(channels), data_(extent.cells() * static_cast<std::size_t>(channels), fill) {
    if (extent.x < 0 || extent.y < 0 || extent.z < 0 || channels < 1) {
        throw DimensionError("dense latent: negative extent or channels < 1");
    }
}

DenseLatent::DenseLatent(Extent extent, int channels, std::vector<float> data)
    : extent_(extent), channels_(channels), data_(std::move(data)) {
    if (channels < 1 || data_.size() != extent.cells() * static_cast<std::size_t>(channels)) {
        throw DimensionError("dense latent: payload size does not match shape");
    }
}

bool DenseLatent::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

SparseLatent::SparseLatent(Extent extent, int width) : extent_(extent), width_(width) {
    if (width < 1) throw DimensionError("sparse latent: feature width must be >= 1");
}

SparseLatent SparseLatent::from_entries(Extent extent, int width, std::vector<Coord> coords,
                                        std::vector<float> features) {
    SparseLatent out(extent, width);
    if (features.size() != coords.size() * static_cast<std::size_t>(width)) {
        throw DimensionError("sparse latent: feature payload does not match count x width");
    }
    for (const auto& p : coords) {
        if (!extent.contains(p)) {
            throw BoundsError("sparse latent: coordinate (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                              "," + std::to_string(p.z) + ") outside lattice");
        }
    }
    std::vector<std::size_t> order(coords.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return coords[i] < coords[j]; });

    out.coords_.reserve(coords.size());
    out.features_.reserve(features.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const std::size_t i = order[k];
        if (k > 0 && coords[i] == out.coords_.back()) throw BoundsError("sparse latent: duplicate coordinate");
        out.coords_.push_back(coords[i]);
        auto first = features.begin() + static_cast<std::ptrdiff_t>(i * width);
        out.features_.insert(out.features_.end(), first, first + width);
    }
    return out;
}

std::optional<std::size_t> SparseLatent::find(const Coord& p) const noexcept {
    auto it = std::lower_bound(coords_.begin(), coords_.end(), p);
    if (it == coords_.end() || *it != p) return std::nullopt;
    return static_cast<std::size_t>(it - coords_.begin());
}

bool SparseLatent::all_finite() const noexcept {
    return std::all_of(features_.begin(), features_.end(), [](float v) { return std::isfinite(v); });
}

OccupancyGrid::OccupancyGrid(Extent extent) : extent_(extent), cells_(extent.cells(), 0) {}

std::size_t OccupancyGrid::count() const noexcept {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

std::vector<Coord> OccupancyGrid::coords() const {
    std::vector<Coord> out;
    for (int x = 0; x < extent_.x; ++x)
        for (int y = 0; y < extent_.y; ++y)
            for (int z = 0; z < extent_.z; ++z)
                if (occupied({x, y, z})) out.push_back({x, y, z});
    return out;
}

Schedule::Schedule(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) throw ConfigError("schedule: needs at least two times");
    if (!(times_.front() <= 1.0)) throw ConfigError("schedule: first time must be <= 1");
    if (times_.back() != 0.0) throw ConfigError("schedule: last time must be exactly 0");
    for (std::size_t m = 1; m < times_.size(); ++m) {
        if (!(times_[m] < times_[m - 1])) throw ConfigError("schedule: times must be strictly decreasing");
    }
}

Schedule Schedule::uniform(double t_start, int k) {
    if (k < 2) throw ConfigError("schedule: k must be >= 2");
    if (!(t_start > 0.0)) throw ConfigError("schedule: t_start must be positive");
    std::vector<double> times(static_cast<std::size_t>(k));
    for (int m = 0; m < k; ++m) {
        times[static_cast<std::size_t>(m)] = t_start * (1.0 - static_cast<double>(m) / static_cast<double>(k - 1));
    }
    return Schedule(std::move(times));
}

DenseLatent lerp_latent(const DenseLatent& x0, const DenseLatent& eps, double t) {
    if (!x0.same_shape(eps)) throw DimensionError("lerp_latent: shape mismatch");
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("lerp_latent: t must lie in [0, 1]");
    DenseLatent out(x0.extent(), x0.channels());
    auto a = x0.values();
    auto b = eps.values();
    auto o = out.values();
    const double s = 1.0 - t;
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = static_cast<float>(s * a[i] + t * b[i]);
    }
    return out;
}

DenseLatent sample_gaussian(Extent extent, int channels, std::uint64_t seed) {
    DenseLatent out(extent, channels);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : out.values()) v = static_cast<float>(normal(rng));
    return out;
}

DenseLatent sample_gaussian(const Dims& dims, std::uint64_t seed) {
    dims.validate();
    return sample_gaussian(dims.ss_extent(), dims.C, seed);
}

SparseLatent init_sparse_noise(const std::vector<Coord>& coords, const Dims& dims, std::uint64_t seed) {
    dims.validate();
    // Sorting first makes the feature assigned to a coordinate independent of input order.
    auto shell = SparseLatent::from_entries(dims.occ_extent(), dims.l, coords,
                                            std::vector<float>(coords.size() * static_cast<std::size_t>(dims.l)));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : shell.values()) v = static_cast<float>(normal(rng));
    return shell;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace extend3d
