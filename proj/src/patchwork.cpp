#include "extend3d/patchwork.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "extend3d/errors.hpp"

namespace extend3d {

PatchGrid::PatchGrid(int a, int b, int K, int d) : a_(a), b_(b), K_(K), d_(d) {
    if (a < 1 || b < 1 || K < 1 || d < 1) throw ConfigError("patch grid: a, b, K, d must be >= 1");
    if (K % d != 0) {
        throw ConfigError("patch grid: division factor " + std::to_string(d) + " does not divide K=" +
                          std::to_string(K));
    }
    windows_.reserve(static_cast<std::size_t>(rows() * cols()));
    for (int i = 0; i < rows(); ++i)
        for (int j = 0; j < cols(); ++j) windows_.push_back({i, j, K, d});
}

std::array<int, 2> PatchGrid::covering_rows(int x) const noexcept {
    const int s = stride();
    const int first = x < K_ ? 0 : (x - K_) / s + 1;
    const int last = std::min(rows() - 1, x / s);
    return {first, last};
}

std::array<int, 2> PatchGrid::covering_cols(int y) const noexcept {
    const int s = stride();
    const int first = y < K_ ? 0 : (y - K_) / s + 1;
    const int last = std::min(cols() - 1, y / s);
    return {first, last};
}

int PatchGrid::coverage(int x, int y) const noexcept {
    const auto r = covering_rows(x);
    const auto c = covering_cols(y);
    return std::max(0, r[1] - r[0] + 1) * std::max(0, c[1] - c[0] + 1);
}

std::vector<std::size_t> PatchGrid::covering(int x, int y) const {
    std::vector<std::size_t> out;
    const auto r = covering_rows(x);
    const auto c = covering_cols(y);
    for (int i = r[0]; i <= r[1]; ++i)
        for (int j = c[0]; j <= c[1]; ++j) out.push_back(index_of(i, j));
    return out;
}

PatchGrid make_patch_grid(const Dims& dims, int d, int K) {
    dims.validate();
    if (K != dims.N && K != dims.M) throw ConfigError("patch grid: K must equal N or M");
    return PatchGrid(dims.a, dims.b, K, d);
}

DenseLatent patch_dense(const DenseLatent& z, const Window& w) {
    const auto& e = z.extent();
    if (w.x0() + w.K > e.x || w.y0() + w.K > e.y || w.K > e.z) throw BoundsError("patch_dense: window outside lattice");
    const int C = z.channels();
    DenseLatent out({w.K, w.K, w.K}, C);
    for (int u = 0; u < w.K; ++u)
        for (int v = 0; v < w.K; ++v) {
            const float* src = z.column(w.x0() + u, w.y0() + v);
            std::copy(src, src + static_cast<std::ptrdiff_t>(w.K) * C, &out.at(u, v, 0));
        }
    return out;
}

DenseLatent unpatch_dense(const DenseLatent& x, const Window& w, Extent extent) {
    if (x.extent() != Extent{w.K, w.K, w.K}) throw DimensionError("unpatch_dense: patch is not K x K x K");
    if (w.x0() + w.K > extent.x || w.y0() + w.K > extent.y || w.K > extent.z) {
        throw BoundsError("unpatch_dense: window outside lattice");
    }
    const int C = x.channels();
    DenseLatent out(extent, C);
    for (int u = 0; u < w.K; ++u)
        for (int v = 0; v < w.K; ++v) {
            const float* src = x.column(u, v);
            std::copy(src, src + static_cast<std::ptrdiff_t>(w.K) * C, &out.at(w.x0() + u, w.y0() + v, 0));
        }
    return out;
}

SparseLatent patch_sparse(const SparseLatent& z, const Window& w) {
    std::vector<Coord> coords;
    std::vector<float> features;
    for (std::size_t n = 0; n < z.count(); ++n) {
        const auto& p = z.coords()[n];
        if (!w.contains(p)) continue;
        coords.push_back({p.x - w.x0(), p.y - w.y0(), p.z});
        auto f = z.feature(n);
        features.insert(features.end(), f.begin(), f.end());
    }
    // Translation preserves lexicographic order, so from_entries only validates.
    return SparseLatent::from_entries({w.K, w.K, w.K}, z.width(), std::move(coords), std::move(features));
}

SparseLatent unpatch_sparse(const SparseLatent& x, const Window& w, std::span<const Coord> global_coords,
                            Extent extent) {
    std::vector<Coord> coords;
    std::vector<float> features;
    const auto width = static_cast<std::size_t>(x.width());
    for (std::size_t n = 0; n < x.count(); ++n) {
        const auto& p = x.coords()[n];
        coords.push_back({p.x + w.x0(), p.y + w.y0(), p.z});
        auto f = x.feature(n);
        features.insert(features.end(), f.begin(), f.end());
    }
    const std::vector<Coord> translated = coords;
    for (const auto& g : global_coords) {
        if (std::binary_search(translated.begin(), translated.end(), g)) continue;
        coords.push_back(g);
        features.insert(features.end(), width, 0.0f);
    }
    return SparseLatent::from_entries(extent, x.width(), std::move(coords), std::move(features));
}

DenseLatent merge_vectors(std::span<const DenseLatent> patches, const PatchGrid& grid) {
    if (patches.size() != grid.size()) throw DimensionError("merge_vectors: need one patch per window");
    const int K = grid.K();
    const int C = patches.empty() ? 1 : patches.front().channels();
    for (const auto& p : patches) {
        if (p.extent() != Extent{K, K, K} || p.channels() != C) throw DimensionError("merge_vectors: bad patch shape");
    }
    const Extent ext = grid.extent();
    DenseLatent out(ext, C);
    const int X = ext.x;
    const int Y = ext.y;
    const std::size_t depth = static_cast<std::size_t>(K) * C;

#pragma omp parallel for schedule(static)
    for (int x = 0; x < X; ++x) {
        std::vector<double> acc(depth);
        for (int y = 0; y < Y; ++y) {
            const auto rows = grid.covering_rows(x);
            const auto cols = grid.covering_cols(y);
            const int count = (rows[1] - rows[0] + 1) * (cols[1] - cols[0] + 1);
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int i = rows[0]; i <= rows[1]; ++i)
                for (int j = cols[0]; j <= cols[1]; ++j) {
                    const Window& w = grid[grid.index_of(i, j)];
                    const float* src = patches[grid.index_of(i, j)].column(x - w.x0(), y - w.y0());
                    for (std::size_t k = 0; k < depth; ++k) acc[k] += src[k];
                }
            float* dst = &out.at(x, y, 0);
            for (std::size_t k = 0; k < depth; ++k) dst[k] = static_cast<float>(acc[k] / count);
        }
    }
    return out;
}

SparseLatent merge_vectors(std::span<const SparseLatent> patches, const PatchGrid& grid,
                           std::span<const Coord> global_coords, Extent extent) {
    if (patches.size() != grid.size()) throw DimensionError("merge_vectors: need one patch per window");
    const int width = patches.empty() ? 1 : patches.front().width();
    // A grid covers every column of its own extent, so only the bounds need checking.
    for (const auto& p : global_coords) {
        if (!grid.extent().contains(p)) throw BoundsError("merge_vectors: coordinate not covered by any window");
    }
    std::vector<float> features(global_coords.size() * static_cast<std::size_t>(width));
    const auto n = static_cast<std::ptrdiff_t>(global_coords.size());

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t g = 0; g < n; ++g) {
        const Coord& p = global_coords[static_cast<std::size_t>(g)];
        const auto rows = grid.covering_rows(p.x);
        const auto cols = grid.covering_cols(p.y);
        const int count = (rows[1] - rows[0] + 1) * (cols[1] - cols[0] + 1);
        std::vector<double> acc(static_cast<std::size_t>(width), 0.0);
        for (int i = rows[0]; i <= rows[1]; ++i)
            for (int j = cols[0]; j <= cols[1]; ++j) {
                const std::size_t wi = grid.index_of(i, j);
                const Window& w = grid[wi];
                const auto hit = patches[wi].find({p.x - w.x0(), p.y - w.y0(), p.z});
                if (!hit) continue;
                auto f = patches[wi].feature(*hit);
                for (int k = 0; k < width; ++k) acc[static_cast<std::size_t>(k)] += f[static_cast<std::size_t>(k)];
            }
        float* dst = features.data() + static_cast<std::size_t>(g) * width;
        for (int k = 0; k < width; ++k) dst[k] = static_cast<float>(acc[static_cast<std::size_t>(k)] / count);
    }
    return SparseLatent::from_entries(extent, width, {global_coords.begin(), global_coords.end()}, std::move(features));
}

PatchSite PatchSite::from_window(const Window& w) {
    PatchSite site;
    site.side = w.K;
    site.columns.reserve(static_cast<std::size_t>(w.K) * w.K);
    for (int u = 0; u < w.K; ++u)
        for (int v = 0; v < w.K; ++v) site.columns.push_back({w.x0() + u, w.y0() + v});
    return site;
}

DenseLatent gather_site(const DenseLatent& z, const PatchSite& site) {
    const int K = site.side;
    const int C = z.channels();
    if (z.extent().z != K) throw DimensionError("gather_site: lattice depth differs from site side");
    DenseLatent out({K, K, K}, C);
    for (int u = 0; u < K; ++u)
        for (int v = 0; v < K; ++v) {
            const auto& c = site.column(u, v);
            if (c[0] < 0 || c[1] < 0 || c[0] >= z.extent().x || c[1] >= z.extent().y) {
                throw BoundsError("gather_site: column outside lattice");
            }
            const float* src = z.column(c[0], c[1]);
            std::copy(src, src + static_cast<std::ptrdiff_t>(K) * C, &out.at(u, v, 0));
        }
    return out;
}

DilatedPartition dilated_partition(int a, int b, int K, std::uint64_t seed) {
    if (a < 1 || b < 1 || K < 1) throw ConfigError("dilated_partition: a, b, K must be >= 1");
    DilatedPartition part{a, b, K, {}};
    const int samples = a * b;
    part.samples.resize(static_cast<std::size_t>(samples));
    for (auto& s : part.samples) {
        s.side = K;
        s.columns.resize(static_cast<std::size_t>(K) * K);
    }
    std::mt19937_64 rng(seed);
    std::vector<int> perm(static_cast<std::size_t>(samples));
    for (int u = 0; u < K; ++u)
        for (int v = 0; v < K; ++v) {
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            for (int s = 0; s < samples; ++s) {
                const int pillar = perm[static_cast<std::size_t>(s)];
                part.samples[static_cast<std::size_t>(s)].columns[static_cast<std::size_t>(u) * K + v] = {
                    u * a + pillar / b, v * b + pillar % b};
            }
        }
    return part;
}

DenseLatent scatter_dilated(std::span<const DenseLatent> sample_vectors, const DilatedPartition& partition) {
    if (sample_vectors.size() != partition.samples.size()) {
        throw DimensionError("scatter_dilated: need one vector per dilated sample");
    }
    const int K = partition.K;
    const int C = sample_vectors.empty() ? 1 : sample_vectors.front().channels();
    DenseLatent out({partition.a * K, partition.b * K, K}, C);
    for (std::size_t s = 0; s < sample_vectors.size(); ++s) {
        const auto& vec = sample_vectors[s];
        if (vec.extent() != Extent{K, K, K} || vec.channels() != C) {
            throw DimensionError("scatter_dilated: bad sample shape");
        }
        const auto& site = partition.samples[s];
        for (int u = 0; u < K; ++u)
            for (int v = 0; v < K; ++v) {
                const auto& c = site.column(u, v);
                const float* src = vec.column(u, v);
                std::copy(src, src + static_cast<std::ptrdiff_t>(K) * C, &out.at(c[0], c[1], 0));
            }
    }
    return out;
}

}  // namespace extend3d
