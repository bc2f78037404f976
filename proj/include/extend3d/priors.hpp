#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extend3d/flowcore.hpp"
#include "extend3d/lattice.hpp"
#include "extend3d/patchwork.hpp"

namespace extend3d {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// RGB image, row-major (row, col, channel), values nominally in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> rgb;

    Image() = default;
    Image(int h, int w, double fill = 0.0) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, fill) {}

    double& at(int row, int col, int c) noexcept { return rgb[(static_cast<std::size_t>(row) * width + col) * 3 + c]; }
    double at(int row, int col, int c) const noexcept {
        return rgb[(static_cast<std::size_t>(row) * width + col) * 3 + c];
    }
    friend bool operator==(const Image&, const Image&) = default;
};

/// Image, per-pixel 3D points, validity mask and a 3x4 camera matrix, as
/// produced by a monocular depth estimator. Stored in f32 so that SPR1 files
/// round-trip bit-exactly.
struct ScenePrior {
    int height = 0;
    int width = 0;
    std::vector<float> image;   // H * W * 3
    std::vector<float> points;  // H * W * 3
    std::vector<std::uint8_t> valid;  // H * W
    std::array<float, 12> camera{};

    std::size_t pixels() const noexcept { return static_cast<std::size_t>(height) * width; }
    bool is_valid(int row, int col) const noexcept { return valid[static_cast<std::size_t>(row) * width + col] != 0; }
    Vec3 point(int row, int col) const noexcept {
        const float* p = &points[(static_cast<std::size_t>(row) * width + col) * 3];
        return {p[0], p[1], p[2]};
    }
    Image to_image() const;
    std::vector<Vec3> valid_points() const;

    /// Throws ParseError(offset 0) on shape disagreement or non-finite valid points.
    void validate() const;

    friend bool operator==(const ScenePrior&, const ScenePrior&) = default;
};

/// SPR1: "SPR1", u32 H, u32 W, f32 image[H*W*3], f32 points[H*W*3],
/// u8 valid[H*W], f32 camera[12]; little-endian.
std::vector<std::uint8_t> encode_spr(const ScenePrior& prior);
ScenePrior decode_spr(std::span<const std::uint8_t> bytes);
ScenePrior load_scene_prior(const std::string& path);
void save_scene_prior(const std::string& path, const ScenePrior& prior);

/// World-space box mapped onto the lattice extent.
struct NormalizationBox {
    Vec3 min;
    Vec3 max;

    void validate() const;
    /// Continuous lattice coordinates of a world point for the given extent.
    Vec3 to_lattice(const Vec3& q, const Extent& extent) const noexcept;
};

/// Tight bounding box of the valid points, grown by 1% of the extent on every
/// side; degenerate axes are padded by 0.5.
NormalizationBox auto_normalization_box(std::span<const Vec3> points);

struct VoxelizeResult {
    OccupancyGrid grid;
    std::size_t clamped = 0;  // points that fell outside the box
};

/// floor((q - min) / extent * size), clamped into the lattice.
Coord voxel_of(const Vec3& q, const NormalizationBox& box, const Extent& extent, bool* clamped = nullptr) noexcept;
VoxelizeResult voxelize(std::span<const Vec3> points, const NormalizationBox& box, const Extent& extent);
/// One coordinate per point (duplicates kept), in input order.
std::vector<Coord> voxel_coords(std::span<const Vec3> points, const NormalizationBox& box, const Extent& extent);

/// Windows (indices into grid.windows()) whose box holds the voxel, given in
/// the grid's own lattice resolution.
std::vector<std::size_t> pixel_to_window(const Coord& voxel, const PatchGrid& grid);

struct ImagePatch {
    Image image;
    bool empty = false;  // no pixel mapped into the window; image is 1x1 black
};

/// Keeps the pixels whose 3D point falls inside the window, blacks out the
/// rest, crops to the kept pixels' bounding box and pads to a square with
/// black rows/columns at the bottom/right.
ImagePatch image_patchify(const ScenePrior& prior, const NormalizationBox& box, const Window& window,
                          const PatchGrid& grid);

/// 11 little-endian f32: mean RGB followed by an 8-bin luminance histogram
/// (fractions of the pixel count).
ConditionEmbedding toy_condition(const Image& patch);

/// Per-window conditions for a grid; windows without pixels fall back to the
/// full-image condition and are reported in `empty_windows`.
struct WindowConditions {
    std::vector<ConditionEmbedding> per_window;
    ConditionEmbedding global;
    std::vector<std::size_t> empty_windows;
};
WindowConditions condition_windows(const ScenePrior& prior, const NormalizationBox& box, const PatchGrid& grid);

/// Top-down (z axis) view of the prior at lattice resolution: column (x, y)
/// holds the mean colour of the pixels whose point voxelizes into it, black
/// when none does. Rows are x, columns are y.
Image top_view_target(const ScenePrior& prior, const NormalizationBox& box, const Extent& extent);

}  // namespace extend3d
