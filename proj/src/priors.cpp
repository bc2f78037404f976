#include "extend3d/priors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "extend3d/bytes.hpp"

namespace extend3d {

Image ScenePrior::to_image() const {
    Image img(height, width);
    std::copy(image.begin(), image.end(), img.rgb.begin());
    return img;
}

std::vector<Vec3> ScenePrior::valid_points() const {
    std::vector<Vec3> out;
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c)
            if (is_valid(r, c)) out.push_back(point(r, c));
    return out;
}

void ScenePrior::validate() const {
    if (height < 0 || width < 0) throw ParseError("prior: negative size", 0);
    const std::size_t n = pixels();
    if (image.size() != n * 3 || points.size() != n * 3 || valid.size() != n) {
        throw ParseError("prior: array sizes disagree with H x W", 0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!valid[i]) continue;
        for (int k = 0; k < 3; ++k) {
            if (!std::isfinite(points[i * 3 + k])) throw ParseError("prior: non-finite point at a valid pixel", 0);
        }
    }
}

std::vector<std::uint8_t> encode_spr(const ScenePrior& prior) {
    prior.validate();
    ByteWriter w;
    w.text("SPR1");
    w.u32(static_cast<std::uint32_t>(prior.height));
    w.u32(static_cast<std::uint32_t>(prior.width));
    for (float v : prior.image) w.f32(v);
    for (float v : prior.points) w.f32(v);
    w.bytes(prior.valid);
    for (float v : prior.camera) w.f32(v);
    return w.take();
}

ScenePrior decode_spr(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    auto magic = r.bytes(4, "magic");
    if (std::memcmp(magic.data(), "SPR1", 4) != 0) throw ParseError("spr: bad magic", 0);
    ScenePrior p;
    const std::uint32_t h = r.u32("height");
    const std::uint32_t w = r.u32("width");
    const std::uint64_t n = static_cast<std::uint64_t>(h) * w;
    // 12 image + 12 point + 1 mask bytes per pixel, then the camera.
    const std::uint64_t need = n * 25 + 48;
    if (n > static_cast<std::uint64_t>(std::numeric_limits<int>::max()) || need > r.remaining()) {
        throw ParseError("spr: truncated payload for " + std::to_string(h) + "x" + std::to_string(w), r.offset());
    }
    if (need < r.remaining()) throw ParseError("spr: trailing bytes after camera", r.offset() + need);
    p.height = static_cast<int>(h);
    p.width = static_cast<int>(w);
    p.image.resize(n * 3);
    p.points.resize(n * 3);
    for (auto& v : p.image) {
        const std::size_t at = r.offset();
        v = r.f32("image");
        if (!std::isfinite(v)) throw ParseError("spr: non-finite colour", at);
    }
    const std::size_t points_at = r.offset();
    for (auto& v : p.points) v = r.f32("points");
    auto mask = r.bytes(n, "valid mask");
    p.valid.assign(mask.begin(), mask.end());
    for (std::size_t i = 0; i < n; ++i) {
        if (p.valid[i] > 1) throw ParseError("spr: mask byte is not 0/1", points_at + n * 12 + i);
        if (!p.valid[i]) continue;
        for (int k = 0; k < 3; ++k) {
            if (!std::isfinite(p.points[i * 3 + k])) {
                throw ParseError("spr: non-finite point at valid pixel", points_at + (i * 3 + k) * 4);
            }
        }
    }
    for (auto& v : p.camera) v = r.f32("camera");
    return p;
}

ScenePrior load_scene_prior(const std::string& path) { return decode_spr(read_file_bytes(path)); }

void save_scene_prior(const std::string& path, const ScenePrior& prior) { write_file_bytes(path, encode_spr(prior)); }

void NormalizationBox::validate() const {
    if (!(max.x > min.x && max.y > min.y && max.z > min.z)) {
        throw ConfigError("normalization box: extent must be positive on every axis");
    }
}

Vec3 NormalizationBox::to_lattice(const Vec3& q, const Extent& extent) const noexcept {
    return {(q.x - min.x) / (max.x - min.x) * extent.x, (q.y - min.y) / (max.y - min.y) * extent.y,
            (q.z - min.z) / (max.z - min.z) * extent.z};
}

NormalizationBox auto_normalization_box(std::span<const Vec3> points) {
    if (points.empty()) return {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
    Vec3 lo = points.front();
    Vec3 hi = points.front();
    for (const auto& p : points) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    auto grow = [](double& a, double& b) {
        const double ext = b - a;
        if (ext <= 0.0) {
            a -= 0.5;
            b += 0.5;
        } else {
            a -= 0.01 * ext;
            b += 0.01 * ext;
        }
    };
    grow(lo.x, hi.x);
    grow(lo.y, hi.y);
    grow(lo.z, hi.z);
    return {lo, hi};
}

Coord voxel_of(const Vec3& q, const NormalizationBox& box, const Extent& extent, bool* clamped) noexcept {
    const Vec3 u = box.to_lattice(q, extent);
    bool outside = false;
    auto axis = [&](double v, int size) {
        const double f = std::floor(v);
        if (f < 0.0) {
            outside = true;
            return 0;
        }
        if (f > size - 1) {
            // The far face of the box itself is part of the box.
            if (v > size) outside = true;
            return size - 1;
        }
        return static_cast<int>(f);
    };
    Coord c{axis(u.x, extent.x), axis(u.y, extent.y), axis(u.z, extent.z)};
    if (clamped) *clamped = outside;
    return c;
}

VoxelizeResult voxelize(std::span<const Vec3> points, const NormalizationBox& box, const Extent& extent) {
    box.validate();
    VoxelizeResult out{OccupancyGrid(extent), 0};
    for (const auto& q : points) {
        bool clamped = false;
        out.grid.set(voxel_of(q, box, extent, &clamped));
        out.clamped += clamped ? 1 : 0;
    }
    return out;
}

std::vector<Coord> voxel_coords(std::span<const Vec3> points, const NormalizationBox& box, const Extent& extent) {
    box.validate();
    std::vector<Coord> out;
    out.reserve(points.size());
    for (const auto& q : points) out.push_back(voxel_of(q, box, extent));
    return out;
}

std::vector<std::size_t> pixel_to_window(const Coord& voxel, const PatchGrid& grid) {
    if (!grid.extent().contains(voxel)) throw BoundsError("pixel_to_window: voxel outside lattice");
    return grid.covering(voxel.x, voxel.y);
}

ImagePatch image_patchify(const ScenePrior& prior, const NormalizationBox& box, const Window& window,
                          const PatchGrid& grid) {
    const Extent ext = grid.extent();
    int r0 = prior.height, r1 = -1, c0 = prior.width, c1 = -1;
    std::vector<std::uint8_t> keep(prior.pixels(), 0);
    for (int r = 0; r < prior.height; ++r)
        for (int c = 0; c < prior.width; ++c) {
            if (!prior.is_valid(r, c)) continue;
            if (!window.contains(voxel_of(prior.point(r, c), box, ext))) continue;
            keep[static_cast<std::size_t>(r) * prior.width + c] = 1;
            r0 = std::min(r0, r);
            r1 = std::max(r1, r);
            c0 = std::min(c0, c);
            c1 = std::max(c1, c);
        }
    if (r1 < 0) return {Image(1, 1), true};

    const int h = r1 - r0 + 1;
    const int w = c1 - c0 + 1;
    const int side = std::max(h, w);
    ImagePatch out{Image(side, side), false};
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::size_t src = static_cast<std::size_t>(r0 + r) * prior.width + (c0 + c);
            if (!keep[src]) continue;
            for (int k = 0; k < 3; ++k) out.image.at(r, c, k) = prior.image[src * 3 + k];
        }
    return out;
}

ConditionEmbedding toy_condition(const Image& patch) {
    if (patch.height < 1 || patch.width < 1) throw DimensionError("toy_condition: empty image");
    double mean[3] = {0.0, 0.0, 0.0};
    double hist[8] = {};
    const std::size_t n = static_cast<std::size_t>(patch.height) * patch.width;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = patch.rgb[i * 3], g = patch.rgb[i * 3 + 1], b = patch.rgb[i * 3 + 2];
        mean[0] += r;
        mean[1] += g;
        mean[2] += b;
        const double lum = 0.2126 * r + 0.7152 * g + 0.0722 * b;
        const int bin = std::clamp(static_cast<int>(std::floor(lum * 8.0)), 0, 7);
        hist[bin] += 1.0;
    }
    ByteWriter w;
    for (double m : mean) w.f32(static_cast<float>(m / n));
    for (double h : hist) w.f32(static_cast<float>(h / n));
    return {w.take()};
}

WindowConditions condition_windows(const ScenePrior& prior, const NormalizationBox& box, const PatchGrid& grid) {
    WindowConditions out;
    out.global = toy_condition(prior.to_image());
    out.per_window.reserve(grid.size());
    for (std::size_t w = 0; w < grid.size(); ++w) {
        ImagePatch patch = image_patchify(prior, box, grid[w], grid);
        if (patch.empty) {
            out.empty_windows.push_back(w);
            out.per_window.push_back(out.global);
        } else {
            out.per_window.push_back(toy_condition(patch.image));
        }
    }
    return out;
}

Image top_view_target(const ScenePrior& prior, const NormalizationBox& box, const Extent& extent) {
    Image sum(extent.x, extent.y);
    std::vector<int> hits(static_cast<std::size_t>(extent.x) * extent.y, 0);
    for (int r = 0; r < prior.height; ++r)
        for (int c = 0; c < prior.width; ++c) {
            if (!prior.is_valid(r, c)) continue;
            const Coord v = voxel_of(prior.point(r, c), box, extent);
            const std::size_t src = static_cast<std::size_t>(r) * prior.width + c;
            for (int k = 0; k < 3; ++k) sum.at(v.x, v.y, k) += prior.image[src * 3 + k];
            ++hits[static_cast<std::size_t>(v.x) * extent.y + v.y];
        }
    for (int x = 0; x < extent.x; ++x)
        for (int y = 0; y < extent.y; ++y) {
            const int n = hits[static_cast<std::size_t>(x) * extent.y + y];
            if (n == 0) continue;
            for (int k = 0; k < 3; ++k) sum.at(x, y, k) /= n;
        }
    return sum;
}

}  // namespace extend3d
