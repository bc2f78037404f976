#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace extend3d {

struct Coord {
    int x = 0;
    int y = 0;
    int z = 0;

    friend auto operator<=>(const Coord&, const Coord&) = default;
    friend bool operator==(const Coord&, const Coord&) = default;
};

// Box [0,x) x [0,y) x [0,z) of integer lattice cells.
struct Extent {
    int x = 0;
    int y = 0;
    int z = 0;

    std::size_t cells() const noexcept {
        return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) * static_cast<std::size_t>(z);
    }
    bool contains(const Coord& p) const noexcept {
        return p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x < x && p.y < y && p.z < z;
    }
    std::size_t index(const Coord& p) const noexcept {
        return (static_cast<std::size_t>(p.x) * y + p.y) * z + p.z;
    }

    friend bool operator==(const Extent&, const Extent&) = default;
};

/// Extended-lattice geometry. The sparse-structure latent lives on an
/// aN x bN x N lattice, occupancy and structured latents on aM x bM x M.
struct Dims {
    int a = 2;
    int b = 2;
    int N = 8;
    int M = 32;
    int C = 1;
    int l = 4;

    /// Throws ConfigError unless every field is >= 1 and N divides M.
    void validate() const;

    int ratio() const noexcept { return M / N; }
    Extent ss_extent() const noexcept { return {a * N, b * N, N}; }
    Extent occ_extent() const noexcept { return {a * M, b * M, M}; }

    friend bool operator==(const Dims&, const Dims&) = default;
};

/// Dense real lattice with a trailing channel axis, row-major (x, y, z, c).
class DenseLatent {
public:
    DenseLatent() = default;
    DenseLatent(Extent extent, int channels, float fill = 0.0f);
    DenseLatent(Extent extent, int channels, std::vector<float> data);

    const Extent& extent() const noexcept { return extent_; }
    int channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return data_.size(); }

    float& at(int x, int y, int z, int c = 0) noexcept { return data_[offset(x, y, z, c)]; }
    float at(int x, int y, int z, int c = 0) const noexcept { return data_[offset(x, y, z, c)]; }

    /// Start of the contiguous z * channels run of column (x, y).
    const float* column(int x, int y) const noexcept { return data_.data() + offset(x, y, 0); }
    float* column(int x, int y) noexcept { return data_.data() + offset(x, y, 0); }

    std::size_t offset(int x, int y, int z, int c = 0) const noexcept {
        return ((static_cast<std::size_t>(x) * extent_.y + y) * extent_.z + z) * channels_ + c;
    }

    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }

    bool same_shape(const DenseLatent& other) const noexcept {
        return extent_ == other.extent_ && channels_ == other.channels_;
    }
    bool all_finite() const noexcept;

    friend bool operator==(const DenseLatent&, const DenseLatent&) = default;

private:
    Extent extent_{};
    int channels_ = 0;
    std::vector<float> data_;
};

/// Set of (coordinate, feature) pairs. Coordinates are kept sorted and unique
/// so that lookups and reductions have a fixed order.
class SparseLatent {
public:
    SparseLatent() = default;
    SparseLatent(Extent extent, int width);

    /// Builds from unsorted entries; throws BoundsError on out-of-range or
    /// duplicate coordinates and DimensionError on a feature size mismatch.
    static SparseLatent from_entries(Extent extent, int width, std::vector<Coord> coords,
                                     std::vector<float> features);

    const Extent& extent() const noexcept { return extent_; }
    int width() const noexcept { return width_; }
    std::size_t count() const noexcept { return coords_.size(); }
    bool empty() const noexcept { return coords_.empty(); }

    const std::vector<Coord>& coords() const noexcept { return coords_; }
    std::span<float> feature(std::size_t i) noexcept {
        return {features_.data() + i * width_, static_cast<std::size_t>(width_)};
    }
    std::span<const float> feature(std::size_t i) const noexcept {
        return {features_.data() + i * width_, static_cast<std::size_t>(width_)};
    }
    std::span<float> values() noexcept { return features_; }
    std::span<const float> values() const noexcept { return features_; }

    std::optional<std::size_t> find(const Coord& p) const noexcept;

    /// Same extent, width and coordinate set.
    bool same_shape(const SparseLatent& other) const noexcept {
        return extent_ == other.extent_ && width_ == other.width_ && coords_ == other.coords_;
    }
    bool all_finite() const noexcept;

    friend bool operator==(const SparseLatent&, const SparseLatent&) = default;

private:
    Extent extent_{};
    int width_ = 0;
    std::vector<Coord> coords_;
    std::vector<float> features_;
};

class OccupancyGrid {
public:
    OccupancyGrid() = default;
    explicit OccupancyGrid(Extent extent);

    const Extent& extent() const noexcept { return extent_; }

    bool occupied(const Coord& p) const noexcept { return cells_[extent_.index(p)] != 0; }
    void set(const Coord& p, bool value = true) noexcept { cells_[extent_.index(p)] = value ? 1 : 0; }

    std::size_t count() const noexcept;
    /// Occupied coordinates in lexicographic (x, y, z) order.
    std::vector<Coord> coords() const;

    std::span<const std::uint8_t> cells() const noexcept { return cells_; }

    friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

private:
    Extent extent_{};
    std::vector<std::uint8_t> cells_;
};

/// Strictly decreasing integration times ending at exactly 0.
class Schedule {
public:
    explicit Schedule(std::vector<double> times);

    /// k uniformly spaced times from t_start down to 0.
    static Schedule uniform(double t_start, int k);

    const std::vector<double>& times() const noexcept { return times_; }
    std::size_t size() const noexcept { return times_.size(); }
    double front() const noexcept { return times_.front(); }

private:
    std::vector<double> times_;
};

/// (1 - t) * x0 + t * eps, element-wise.
DenseLatent lerp_latent(const DenseLatent& x0, const DenseLatent& eps, double t);

/// I.i.d. standard normal entries; identical output for identical seeds.
DenseLatent sample_gaussian(Extent extent, int channels, std::uint64_t seed);
DenseLatent sample_gaussian(const Dims& dims, std::uint64_t seed);

/// One standard-normal feature of width dims.l per coordinate.
SparseLatent init_sparse_noise(const std::vector<Coord>& coords, const Dims& dims, std::uint64_t seed);

/// Deterministic sub-stream seed (splitmix64 of seed combined with stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace extend3d
