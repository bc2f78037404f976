#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "extend3d/lattice.hpp"

namespace extend3d {

/// Sliding window (i, j) of side K with stride K/d. Its box is
/// [iK/d, iK/d + K) x [jK/d, jK/d + K) x [0, K).
struct Window {
    int i = 0;
    int j = 0;
    int K = 1;
    int d = 1;

    int x0() const noexcept { return i * (K / d); }
    int y0() const noexcept { return j * (K / d); }
    bool contains(const Coord& p) const noexcept {
        return p.x >= x0() && p.x < x0() + K && p.y >= y0() && p.y < y0() + K && p.z >= 0 && p.z < K;
    }
    bool contains_column(int x, int y) const noexcept {
        return x >= x0() && x < x0() + K && y >= y0() && y < y0() + K;
    }

    friend bool operator==(const Window&, const Window&) = default;
};

/// All windows of one patch geometry over an aK x bK x K lattice, in
/// i-major order. Every reduction over windows follows this order.
class PatchGrid {
public:
    PatchGrid(int a, int b, int K, int d);

    int a() const noexcept { return a_; }
    int b() const noexcept { return b_; }
    int K() const noexcept { return K_; }
    int d() const noexcept { return d_; }
    int stride() const noexcept { return K_ / d_; }
    Extent extent() const noexcept { return {a_ * K_, b_ * K_, K_}; }

    int rows() const noexcept { return (a_ - 1) * d_ + 1; }
    int cols() const noexcept { return (b_ - 1) * d_ + 1; }
    std::size_t size() const noexcept { return windows_.size(); }
    const std::vector<Window>& windows() const noexcept { return windows_; }
    const Window& operator[](std::size_t w) const noexcept { return windows_[w]; }
    std::size_t index_of(int i, int j) const noexcept { return static_cast<std::size_t>(i * cols() + j); }

    /// Window index ranges [first, last] covering a column along each axis.
    std::array<int, 2> covering_rows(int x) const noexcept;
    std::array<int, 2> covering_cols(int y) const noexcept;
    /// Number of windows whose box contains column (x, y).
    int coverage(int x, int y) const noexcept;
    /// Indices (into windows()) of windows containing column (x, y), ascending.
    std::vector<std::size_t> covering(int x, int y) const;

private:
    int a_, b_, K_, d_;
    std::vector<Window> windows_;
};

/// Throws ConfigError unless d divides K and K is dims.N or dims.M.
PatchGrid make_patch_grid(const Dims& dims, int d, int K);

/// Copy of the window's K x K x K sub-lattice.
DenseLatent patch_dense(const DenseLatent& z, const Window& w);
/// Zero lattice of the given extent with the window box set to x.
DenseLatent unpatch_dense(const DenseLatent& x, const Window& w, Extent extent);

/// Entries inside the window, translated into [K]^3.
SparseLatent patch_sparse(const SparseLatent& z, const Window& w);
/// Entries translated back to the extended lattice; every global coordinate
/// the patch does not mention receives the zero feature.
SparseLatent unpatch_sparse(const SparseLatent& x, const Window& w, std::span<const Coord> global_coords,
                            Extent extent);

/// Overlap-averaged merge: per cell, the mean of every covering patch's value
/// (sum of zero-padded patches divided by the coverage count). 64-bit
/// accumulation in window order, parallel over columns.
DenseLatent merge_vectors(std::span<const DenseLatent> patches, const PatchGrid& grid);
/// Same reduction for sparse patch vectors over a fixed global coordinate set;
/// the divisor is the number of windows covering the coordinate.
SparseLatent merge_vectors(std::span<const SparseLatent> patches, const PatchGrid& grid,
                           std::span<const Coord> global_coords, Extent extent);

/// Where each column of a K x K x K patch comes from in the extended lattice.
/// Sliding windows and dilated samples are both expressed this way so that
/// providers which need global context (oracles) can be evaluated on either.
struct PatchSite {
    int side = 0;
    std::vector<std::array<int, 2>> columns;  // side * side entries, index u * side + v

    static PatchSite from_window(const Window& w);

    const std::array<int, 2>& column(int u, int v) const noexcept {
        return columns[static_cast<std::size_t>(u) * side + v];
    }
    Coord to_global(const Coord& local) const noexcept {
        const auto& c = column(local.x, local.y);
        return {c[0], c[1], local.z};
    }

    friend bool operator==(const PatchSite&, const PatchSite&) = default;
};

DenseLatent gather_site(const DenseLatent& z, const PatchSite& site);

/// a*b dilated samples of a K x K x K shape. The lattice is cut into K x K
/// blocks of a x b pillars; each sample takes one pillar per block, keeping
/// the blocks' relative layout. The pillar-to-sample assignment in each block
/// is a seeded permutation, so the samples partition all pillars.
struct DilatedPartition {
    int a = 1;
    int b = 1;
    int K = 1;
    std::vector<PatchSite> samples;
};

DilatedPartition dilated_partition(int a, int b, int K, std::uint64_t seed);

/// Writes each sample's vector back to its pillars. Every cell is written once.
DenseLatent scatter_dilated(std::span<const DenseLatent> sample_vectors, const DilatedPartition& partition);

}  // namespace extend3d
