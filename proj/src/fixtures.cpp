#include "extend3d/fixtures.hpp"

#include <algorithm>
#include <random>

#include "extend3d/structedit.hpp"

namespace extend3d {

namespace {

// Raise block-column heights over a footprint.
void place_box(std::vector<int>& heights, int by, int x0, int y0, int wx, int wy, int h) {
    for (int x = x0; x < x0 + wx; ++x)
        for (int y = y0; y < y0 + wy; ++y) {
            int& cell = heights[static_cast<std::size_t>(x) * by + y];
            cell = std::max(cell, h);
        }
}

}  // namespace

SyntheticScene occluded_cavity_scene(const Dims& dims, std::uint64_t seed) {
    dims.validate();
    const int r = dims.ratio();
    const Extent blocks = dims.ss_extent();
    const Extent occ = dims.occ_extent();
    std::mt19937_64 rng(seed);
    auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    std::vector<int> heights(static_cast<std::size_t>(blocks.x) * blocks.y, 1);
    // The cavity: a wide box whose interior is hidden under its roof.
    const int cw = std::max(1, blocks.x / 2), ch = std::max(1, blocks.y / 2);
    const int c_height = std::min(blocks.z, 5);
    place_box(heights, blocks.y, uniform_int(0, blocks.x - cw), uniform_int(0, blocks.y - ch), cw, ch, c_height);
    for (int n = 0; n < 3; ++n) {
        const int wx = std::min(blocks.x, uniform_int(2, 4)), wy = std::min(blocks.y, uniform_int(2, 4));
        const int h = uniform_int(std::min(2, blocks.z), std::max(1, blocks.z / 2 + 1));
        place_box(heights, blocks.y, uniform_int(0, blocks.x - wx), uniform_int(0, blocks.y - wy), wx, wy, h);
    }
    std::vector<std::array<float, 3>> colours(heights.size());
    std::uniform_real_distribution<float> shade(0.15f, 0.85f);
    for (auto& c : colours) c = {shade(rng), shade(rng), shade(rng)};

    SyntheticScene s;
    s.dims = dims;
    s.box = {{0.0, 0.0, 0.0}, {static_cast<double>(occ.x), static_cast<double>(occ.y), static_cast<double>(occ.z)}};
    s.target = OccupancyGrid(occ);
    s.prior.height = occ.x;
    s.prior.width = occ.y;
    s.prior.image.resize(static_cast<std::size_t>(occ.x) * occ.y * 3);
    s.prior.points.resize(s.prior.image.size());
    s.prior.valid.assign(static_cast<std::size_t>(occ.x) * occ.y, 1);
    s.prior.camera = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1};

    std::vector<Coord> coords;
    std::vector<float> features;
    for (int x = 0; x < occ.x; ++x)
        for (int y = 0; y < occ.y; ++y) {
            const std::size_t col = static_cast<std::size_t>(x / r) * blocks.y + y / r;
            const int top = heights[col] * r;
            const std::size_t px = static_cast<std::size_t>(x) * occ.y + y;
            for (int k = 0; k < 3; ++k) s.prior.image[px * 3 + k] = colours[col][static_cast<std::size_t>(k)];
            s.prior.points[px * 3] = static_cast<float>(x + 0.5);
            s.prior.points[px * 3 + 1] = static_cast<float>(y + 0.5);
            s.prior.points[px * 3 + 2] = static_cast<float>(top - 0.5);
            for (int z = 0; z < top; ++z) {
                s.target.set({x, y, z});
                coords.push_back({x, y, z});
                for (int k = 0; k < dims.l; ++k) {
                    features.push_back(k < 3 ? colours[col][static_cast<std::size_t>(k)]
                                             : static_cast<float>(-(top - z - 0.5) / occ.z));
                }
            }
        }
    s.slat_target = SparseLatent::from_entries(occ, dims.l, std::move(coords), std::move(features));
    s.visible = voxelize(s.prior.valid_points(), s.box, occ).grid;
    s.hidden = OccupancyGrid(occ);
    for (const auto& p : s.target.coords())
        if (!s.visible.occupied(p)) s.hidden.set(p);
    s.ss_target = ToyCodec(dims).encode(s.target);
    return s;
}

}  // namespace extend3d
