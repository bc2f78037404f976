#include "extend3d/reference.hpp"

#include <algorithm>

#include "extend3d/ssim.hpp"

namespace extend3d::reference {

DenseLatent merge_vectors(std::span<const DenseLatent> patches, const PatchGrid& grid) {
    if (patches.size() != grid.size()) throw DimensionError("merge_vectors: need one patch per window");
    const Extent ext = grid.extent();
    const int C = patches.empty() ? 1 : patches.front().channels();
    std::vector<double> sum(ext.cells() * static_cast<std::size_t>(C), 0.0);
    std::vector<int> count(ext.cells(), 0);
    DenseLatent layout(ext, C);
    for (std::size_t w = 0; w < grid.size(); ++w) {
        const Window& win = grid[w];
        const DenseLatent& p = patches[w];
        for (int u = 0; u < win.K; ++u)
            for (int v = 0; v < win.K; ++v)
                for (int z = 0; z < win.K; ++z) {
                    const int x = win.x0() + u, y = win.y0() + v;
                    ++count[ext.index({x, y, z})];
                    for (int c = 0; c < C; ++c) sum[layout.offset(x, y, z, c)] += p.at(u, v, z, c);
                }
    }
    DenseLatent out(ext, C);
    for (int x = 0; x < ext.x; ++x)
        for (int y = 0; y < ext.y; ++y)
            for (int z = 0; z < ext.z; ++z)
                for (int c = 0; c < C; ++c) {
                    out.at(x, y, z, c) =
                        static_cast<float>(sum[layout.offset(x, y, z, c)] / count[ext.index({x, y, z})]);
                }
    return out;
}

SparseLatent merge_vectors(std::span<const SparseLatent> patches, const PatchGrid& grid,
                           std::span<const Coord> global_coords, Extent extent) {
    if (patches.size() != grid.size()) throw DimensionError("merge_vectors: need one patch per window");
    const int width = patches.empty() ? 1 : patches.front().width();
    std::vector<Coord> coords(global_coords.begin(), global_coords.end());
    SparseLatent layout = SparseLatent::from_entries(extent, width, coords,
                                                     std::vector<float>(coords.size() * width, 0.0f));
    std::vector<double> sum(layout.values().size(), 0.0);
    for (std::size_t w = 0; w < grid.size(); ++w) {
        const Window& win = grid[w];
        const SparseLatent& p = patches[w];
        for (std::size_t i = 0; i < p.count(); ++i) {
            const Coord& q = p.coords()[i];
            const auto hit = layout.find({q.x + win.x0(), q.y + win.y0(), q.z});
            if (!hit) continue;
            for (int k = 0; k < width; ++k) sum[*hit * width + k] += p.feature(i)[k];
        }
    }
    for (std::size_t i = 0; i < layout.count(); ++i) {
        const Coord& q = layout.coords()[i];
        const int n = grid.coverage(q.x, q.y);
        for (int k = 0; k < width; ++k) layout.feature(i)[k] = static_cast<float>(sum[i * width + k] / n);
    }
    return layout;
}

double ssim(const Image& a, const Image& b, std::span<double> grad_a) {
    if (a.height != b.height || a.width != b.width) throw DimensionError("ssim: image shapes differ");
    if (grad_a.size() != a.rgb.size()) throw DimensionError("ssim: gradient buffer has the wrong size");
    const int wh = std::min(kSsimWindow, a.height), ww = std::min(kSsimWindow, a.width);
    const int rows = a.height - wh + 1, cols = a.width - ww + 1;
    const double n = static_cast<double>(wh) * ww;
    const double windows = static_cast<double>(rows) * cols * 3.0;
    std::fill(grad_a.begin(), grad_a.end(), 0.0);
    double total = 0.0;
    for (int c = 0; c < 3; ++c)
        for (int r0 = 0; r0 < rows; ++r0)
            for (int c0 = 0; c0 < cols; ++c0) {
                double ma = 0, mb = 0;
                for (int r = r0; r < r0 + wh; ++r)
                    for (int q = c0; q < c0 + ww; ++q) {
                        ma += a.at(r, q, c);
                        mb += b.at(r, q, c);
                    }
                ma /= n;
                mb /= n;
                double va = 0, vb = 0, cov = 0;
                for (int r = r0; r < r0 + wh; ++r)
                    for (int q = c0; q < c0 + ww; ++q) {
                        const double da = a.at(r, q, c) - ma, db = b.at(r, q, c) - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                va /= n;
                vb /= n;
                cov /= n;
                const double n1 = 2 * ma * mb + kSsimC1, n2 = 2 * cov + kSsimC2;
                const double d1 = ma * ma + mb * mb + kSsimC1, d2 = va + vb + kSsimC2;
                const double s = n1 * n2 / (d1 * d2);
                total += s;
                for (int r = r0; r < r0 + wh; ++r)
                    for (int q = c0; q < c0 + ww; ++q) {
                        // d/dA_k of mu_a, sigma_a^2 and sigma_ab.
                        const double dmu = 1.0 / n;
                        const double dva = 2.0 * (a.at(r, q, c) - ma) / n;
                        const double dcov = (b.at(r, q, c) - mb) / n;
                        const double dn1 = 2 * mb * dmu, dn2 = 2 * dcov;
                        const double dd1 = 2 * ma * dmu, dd2 = dva;
                        const double ds = (dn1 * n2 + n1 * dn2) / (d1 * d2) - s * (dd1 / d1 + dd2 / d2);
                        grad_a[(static_cast<std::size_t>(r) * a.width + q) * 3 + c] += ds / windows;
                    }
            }
    return total / windows;
}

SdfGrid merge_sdf_patches(std::span<const SdfGrid> patches, const PatchGrid& grid) {
    if (patches.size() != grid.size()) throw DimensionError("merge_sdf_patches: need one patch per window");
    const Extent ext = grid.extent();
    const int ramp = grid.K() - grid.stride();
    std::vector<double> num(ext.cells(), 0.0), den(ext.cells(), 0.0);
    for (std::size_t w = 0; w < grid.size(); ++w) {
        const Window& win = grid[w];
        for (int u = 0; u < win.K; ++u)
            for (int v = 0; v < win.K; ++v) {
                const double wt = cosine_weight(u, win.K, ramp) * cosine_weight(v, win.K, ramp);
                for (int z = 0; z < win.K; ++z) {
                    const std::size_t i = ext.index({win.x0() + u, win.y0() + v, z});
                    num[i] += wt * patches[w].at(u, v, z);
                    den[i] += wt;
                }
            }
    }
    SdfGrid out(ext, 1.0);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = num[i] / den[i];
    return out;
}

DenseLatent extended_field(const DenseLatent& z, double t, const FieldContext& ctx) {
    const PatchGrid& grid = *ctx.grid;
    std::vector<DenseLatent> vectors;
    for (std::size_t w = 0; w < grid.size(); ++w) {
        const PatchSite site = PatchSite::from_window(grid[w]);
        const ConditionEmbedding* cond = ctx.window_conditions.empty() ? ctx.global_condition : &ctx.window_conditions[w];
        const FieldQuery query{ctx.stage, provider_time(t), cond, &site};
        vectors.push_back(ctx.provider->evaluate(patch_dense(z, grid[w]), query));
    }
    return reference::merge_vectors(vectors, grid);
}

}  // namespace extend3d::reference
