#include "extend3d/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "extend3d/flowcore.hpp"

namespace extend3d {

SdfGrid toy_decode_sdf(const SparseLatent& patch) {
    SdfGrid out(patch.extent(), 1.0);
    if (patch.width() < 1) return out;
    for (std::size_t i = 0; i < patch.count(); ++i) {
        const Coord& p = patch.coords()[i];
        out.at(p.x, p.y, p.z) = patch.feature(i)[0];
    }
    return out;
}

double cosine_weight(int u, int side, int ramp) noexcept {
    if (ramp <= 0) return 1.0;
    auto rise = [ramp](int k) {
        const double s = std::min(1.0, (k + 0.5) / ramp);
        return 0.5 - 0.5 * std::cos(std::numbers::pi * s);
    };
    return rise(u) * rise(side - 1 - u);
}

SdfGrid merge_placed(std::span<const PlacedPatch> patches, Extent extent) {
    std::vector<std::size_t> order(patches.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (!patches[i].sdf) throw DimensionError("merge_placed: null patch");
        if (patches[i].sdf->extent.z != extent.z) throw DimensionError("merge_placed: patch depth differs from grid");
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
        return std::pair(patches[l].x0, patches[l].y0) < std::pair(patches[r].x0, patches[r].y0);
    });

    SdfGrid out(extent, 1.0);
    const int X = extent.x, Y = extent.y, Z = extent.z;
#pragma omp parallel for schedule(static)
    for (int x = 0; x < X; ++x) {
        std::vector<double> num(static_cast<std::size_t>(Z));
        std::vector<double> den(static_cast<std::size_t>(Z));
        for (int y = 0; y < Y; ++y) {
            std::fill(num.begin(), num.end(), 0.0);
            std::fill(den.begin(), den.end(), 0.0);
            bool covered = false;
            for (std::size_t i : order) {
                const PlacedPatch& p = patches[i];
                const Extent& pe = p.sdf->extent;
                const int u = x - p.x0, v = y - p.y0;
                if (u < 0 || v < 0 || u >= pe.x || v >= pe.y) continue;
                covered = true;
                const double w = cosine_weight(u, pe.x, p.ramp) * cosine_weight(v, pe.y, p.ramp);
                for (int z = 0; z < Z; ++z) {
                    num[static_cast<std::size_t>(z)] += w * p.sdf->at(u, v, z);
                    den[static_cast<std::size_t>(z)] += w;
                }
            }
            if (!covered) continue;
            for (int z = 0; z < Z; ++z) out.at(x, y, z) = num[static_cast<std::size_t>(z)] / den[static_cast<std::size_t>(z)];
        }
    }
    return out;
}

SdfGrid merge_sdf_patches(std::span<const SdfGrid> patches, const PatchGrid& grid) {
    if (patches.size() != grid.size()) throw DimensionError("merge_sdf_patches: need one patch per window");
    const int K = grid.K();
    std::vector<PlacedPatch> placed;
    placed.reserve(patches.size());
    for (std::size_t w = 0; w < patches.size(); ++w) {
        if (patches[w].extent != Extent{K, K, K}) throw DimensionError("merge_sdf_patches: bad patch shape");
        placed.push_back({&patches[w], grid[w].x0(), grid[w].y0(), K - grid.stride()});
    }
    return merge_placed(placed, grid.extent());
}

SdfGrid decode_merged_sdf(const SparseLatent& slat, const PatchGrid& grid, int workers) {
    if (slat.extent() != grid.extent()) throw DimensionError("decode_merged_sdf: latent does not match the grid");
    std::vector<SdfGrid> patches(grid.size());
    parallel_for(static_cast<int>(grid.size()), workers, [&](int w) {
        patches[static_cast<std::size_t>(w)] = toy_decode_sdf(patch_sparse(slat, grid[static_cast<std::size_t>(w)]));
    });
    return merge_sdf_patches(patches, grid);
}

Tensor to_tensor(const SdfGrid& sdf) {
    Tensor t;
    t.shape = {static_cast<std::uint32_t>(sdf.extent.x), static_cast<std::uint32_t>(sdf.extent.y),
               static_cast<std::uint32_t>(sdf.extent.z)};
    t.data.assign(sdf.values.begin(), sdf.values.end());
    return t;
}

namespace {

Vec3 centre(const Coord& p, int M) {
    return {(p.x + 0.5) / M, (p.y + 0.5) / M, (p.z + 0.5) / M};
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

PointCloud occupancy_points(const OccupancyGrid& grid, int M) {
    if (M < 1) throw DimensionError("occupancy_points: M must be >= 1");
    PointCloud cloud;
    for (const auto& p : grid.coords()) cloud.points.push_back(centre(p, M));
    return cloud;
}

PointCloud slat_points(const SparseLatent& slat, int M, bool colors) {
    if (M < 1) throw DimensionError("slat_points: M must be >= 1");
    PointCloud cloud;
    for (std::size_t i = 0; i < slat.count(); ++i) {
        cloud.points.push_back(centre(slat.coords()[i], M));
        if (!colors) continue;
        std::array<std::uint8_t, 3> rgb{};
        const auto f = slat.feature(i);
        for (std::size_t k = 0; k < 3 && k < f.size(); ++k) rgb[k] = to_byte(f[k]);
        cloud.colors.push_back(rgb);
    }
    return cloud;
}

std::string export_ply(const OccupancyGrid& grid, int M) { return format_ply(occupancy_points(grid, M)); }

std::string export_ply(const SparseLatent& slat, int M, bool colors) {
    return format_ply(slat_points(slat, M, colors));
}

}  // namespace extend3d
