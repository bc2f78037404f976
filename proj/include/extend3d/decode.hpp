#pragma once

#include <span>
#include <string>
#include <vector>

#include "extend3d/lattice.hpp"
#include "extend3d/patchwork.hpp"
#include "extend3d/ply.hpp"
#include "extend3d/tensor_io.hpp"

namespace extend3d {

/// Signed distances on a box of cells (negative inside), row-major (x, y, z).
struct SdfGrid {
    Extent extent;
    std::vector<double> values;

    SdfGrid() = default;
    SdfGrid(Extent e, double fill) : extent(e), values(e.cells(), fill) {}

    double& at(int x, int y, int z) noexcept { return values[extent.index({x, y, z})]; }
    double at(int x, int y, int z) const noexcept { return values[extent.index({x, y, z})]; }

    friend bool operator==(const SdfGrid&, const SdfGrid&) = default;
};

/// Channel 0 of every entry as the SDF value; +1 (outside) elsewhere.
SdfGrid toy_decode_sdf(const SparseLatent& patch);

/// Raised-cosine ramp of one axis: rise(u) * rise(side - 1 - u) with
/// rise(u) = 0.5 - 0.5 cos(pi * min(1, (u + 0.5) / ramp)). A ramp of 0 gives
/// weight 1 everywhere.
double cosine_weight(int u, int side, int ramp) noexcept;

/// An SDF patch placed at (x0, y0, 0) of a larger grid, blended with a ramp
/// of the given width in x and y.
struct PlacedPatch {
    const SdfGrid* sdf = nullptr;
    int x0 = 0;
    int y0 = 0;
    int ramp = 0;
};

/// Per cell, sum_i w_i sdf_i / sum_i w_i over the patches covering it. Each
/// cell reduces its patches sorted by placement, so the result does not
/// depend on the order of `patches`. Cells no patch covers keep +1.
SdfGrid merge_placed(std::span<const PlacedPatch> patches, Extent extent);

/// One SDF patch per window of `grid`; ramp width is the overlap depth K - K/d.
SdfGrid merge_sdf_patches(std::span<const SdfGrid> patches, const PatchGrid& grid);

/// Cuts the SLat into the grid's windows, decodes each and merges them.
SdfGrid decode_merged_sdf(const SparseLatent& slat, const PatchGrid& grid, int workers = 1);

Tensor to_tensor(const SdfGrid& sdf);

/// Occupied voxel centres (p + 0.5) / M, so the scene spans [0,a] x [0,b] x [0,1].
PointCloud occupancy_points(const OccupancyGrid& grid, int M);
/// Entry centres as above; with `colors`, feature channels 0..2 clamped to
/// [0, 1] and rounded to 0..255.
PointCloud slat_points(const SparseLatent& slat, int M, bool colors);

std::string export_ply(const OccupancyGrid& grid, int M);
std::string export_ply(const SparseLatent& slat, int M, bool colors);

}  // namespace extend3d
