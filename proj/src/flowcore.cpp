#include "extend3d/flowcore.hpp"

#include <exception>
#include <mutex>
#include <numbers>

#include <omp.h>

namespace extend3d {

DenseLatent ZeroField::evaluate(const DenseLatent& patch, const FieldQuery&) {
    return DenseLatent(patch.extent(), patch.channels());
}

SparseLatent ZeroField::evaluate(const SparseLatent& patch, const FieldQuery&) {
    SparseLatent out = patch;
    for (auto& v : out.values()) v = 0.0f;
    return out;
}

OracleField::OracleField(std::optional<DenseLatent> dense_target, std::optional<SparseLatent> sparse_target,
                         double sigma)
    : dense_(std::move(dense_target)), sparse_(std::move(sparse_target)), sigma_(sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("oracle field: sigma must be finite and >= 0");
}

double OracleField::velocity(double z, double target, double t) const noexcept {
    if (sigma_ == 0.0) return (z - target) / t;
    // E[eps - x0 | Z_t = z] for x0 ~ N(target, sigma^2), eps ~ N(0, 1).
    const double s2 = sigma_ * sigma_;
    const double var = (1.0 - t) * (1.0 - t) * s2 + t * t;
    return (t - (1.0 - t) * s2) / var * (z - (1.0 - t) * target) - target;
}

DenseLatent OracleField::evaluate(const DenseLatent& patch, const FieldQuery& query) {
    if (!dense_) throw ProviderError("oracle field: no dense target configured");
    if (!(query.t > 0.0)) throw ProviderError("oracle field: singular at t = 0");
    const auto& e = patch.extent();
    const int C = patch.channels();
    if (C != dense_->channels() || e.z != dense_->extent().z) throw ProviderError("oracle field: patch/target shape mismatch");
    DenseLatent out(e, C);
    for (int u = 0; u < e.x; ++u)
        for (int v = 0; v < e.y; ++v) {
            int gx = u;
            int gy = v;
            if (query.site) {
                const auto& col = query.site->column(u, v);
                gx = col[0];
                gy = col[1];
            }
            if (gx >= dense_->extent().x || gy >= dense_->extent().y) throw ProviderError("oracle field: site outside target");
            for (int z = 0; z < e.z; ++z)
                for (int c = 0; c < C; ++c) {
                    out.at(u, v, z, c) =
                        static_cast<float>(velocity(patch.at(u, v, z, c), dense_->at(gx, gy, z, c), query.t));
                }
        }
    return out;
}

SparseLatent OracleField::evaluate(const SparseLatent& patch, const FieldQuery& query) {
    if (!sparse_) throw ProviderError("oracle field: no sparse target configured");
    if (!(query.t > 0.0)) throw ProviderError("oracle field: singular at t = 0");
    if (patch.width() != sparse_->width()) throw ProviderError("oracle field: feature width mismatch");
    SparseLatent out = patch;
    const auto width = static_cast<std::size_t>(patch.width());
    for (std::size_t n = 0; n < patch.count(); ++n) {
        const Coord g = query.site ? query.site->to_global(patch.coords()[n]) : patch.coords()[n];
        const auto hit = sparse_->find(g);
        auto zf = patch.feature(n);
        auto of = out.feature(n);
        for (std::size_t k = 0; k < width; ++k) {
            const double target = hit ? sparse_->feature(*hit)[k] : 0.0;
            of[k] = static_cast<float>(velocity(zf[k], target, query.t));
        }
    }
    return out;
}

DenseLatent oracle_eval(const DenseLatent& z, const DenseLatent& target, double t) {
    if (!z.same_shape(target)) throw DimensionError("oracle_eval: shape mismatch");
    if (!(t > 0.0)) throw Error("oracle_eval: singular at t = 0");
    DenseLatent out(z.extent(), z.channels());
    auto a = z.values();
    auto b = target.values();
    auto o = out.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = static_cast<float>((static_cast<double>(a[i]) - b[i]) / t);
    return out;
}

SparseLatent oracle_eval(const SparseLatent& z, const SparseLatent& target, double t) {
    if (!(t > 0.0)) throw Error("oracle_eval: singular at t = 0");
    if (z.width() != target.width()) throw DimensionError("oracle_eval: feature width mismatch");
    SparseLatent out = z;
    for (std::size_t n = 0; n < z.count(); ++n) {
        const auto hit = target.find(z.coords()[n]);
        auto zf = z.feature(n);
        auto of = out.feature(n);
        for (std::size_t k = 0; k < zf.size(); ++k) {
            const double tv = hit ? target.feature(*hit)[k] : 0.0;
            of[k] = static_cast<float>((static_cast<double>(zf[k]) - tv) / t);
        }
    }
    return out;
}

void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
    if (workers <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
    for (int i = 0; i < count; ++i) {
        try {
            fn(i);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

namespace {

int effective_workers(const FieldContext& ctx) { return ctx.provider->concurrent() ? ctx.workers : 1; }

void check_context(const FieldContext& ctx) {
    if (!ctx.grid || !ctx.provider) throw ConfigError("field context: grid and provider are required");
    if (!ctx.window_conditions.empty() && ctx.window_conditions.size() != ctx.grid->size()) {
        throw ConfigError("field context: need one condition per window");
    }
}

const ConditionEmbedding* window_condition(const FieldContext& ctx, std::size_t w) {
    if (!ctx.window_conditions.empty()) return &ctx.window_conditions[w];
    return ctx.global_condition;
}

[[noreturn]] void rethrow_with_patch(const Window& win, const std::exception& e) {
    throw ProviderError("patch (" + std::to_string(win.i) + "," + std::to_string(win.j) + "): " + e.what());
}

}  // namespace

DenseLatent extended_field(const DenseLatent& z, double t, const FieldContext& ctx) {
    check_context(ctx);
    const PatchGrid& grid = *ctx.grid;
    if (z.extent() != grid.extent()) throw DimensionError("extended_field: latent does not match patch grid");
    std::vector<DenseLatent> vectors(grid.size());
    parallel_for(static_cast<int>(grid.size()), effective_workers(ctx), [&](int w) {
        const Window& win = grid[static_cast<std::size_t>(w)];
        try {
            const PatchSite site = PatchSite::from_window(win);
            const FieldQuery query{ctx.stage, provider_time(t), window_condition(ctx, static_cast<std::size_t>(w)), &site};
            const DenseLatent patch = patch_dense(z, win);
            DenseLatent v = ctx.provider->evaluate(patch, query);
            if (!v.same_shape(patch)) throw ProviderError("provider returned a different shape");
            vectors[static_cast<std::size_t>(w)] = std::move(v);
        } catch (const std::exception& e) {
            rethrow_with_patch(win, e);
        }
    });
    return merge_vectors(vectors, grid);
}

SparseLatent extended_field(const SparseLatent& z, double t, const FieldContext& ctx) {
    check_context(ctx);
    const PatchGrid& grid = *ctx.grid;
    if (z.extent() != grid.extent()) throw DimensionError("extended_field: latent does not match patch grid");
    std::vector<SparseLatent> vectors(grid.size());
    parallel_for(static_cast<int>(grid.size()), effective_workers(ctx), [&](int w) {
        const Window& win = grid[static_cast<std::size_t>(w)];
        try {
            SparseLatent patch = patch_sparse(z, win);
            if (patch.empty()) {
                vectors[static_cast<std::size_t>(w)] = std::move(patch);
                return;
            }
            const PatchSite site = PatchSite::from_window(win);
            const FieldQuery query{ctx.stage, provider_time(t), window_condition(ctx, static_cast<std::size_t>(w)), &site};
            SparseLatent v = ctx.provider->evaluate(patch, query);
            if (!v.same_shape(patch)) throw ProviderError("provider returned a different coordinate set or width");
            vectors[static_cast<std::size_t>(w)] = std::move(v);
        } catch (const std::exception& e) {
            rethrow_with_patch(win, e);
        }
    });
    return merge_vectors(vectors, grid, z.coords(), z.extent());
}

DenseLatent dilated_field(const DenseLatent& z, double t, const FieldContext& ctx, const DilatedPartition& partition) {
    check_context(ctx);
    std::vector<DenseLatent> vectors(partition.samples.size());
    parallel_for(static_cast<int>(partition.samples.size()), effective_workers(ctx), [&](int s) {
        const PatchSite& site = partition.samples[static_cast<std::size_t>(s)];
        try {
            const FieldQuery query{ctx.stage, provider_time(t), ctx.global_condition, &site};
            const DenseLatent sample = gather_site(z, site);
            DenseLatent v = ctx.provider->evaluate(sample, query);
            if (!v.same_shape(sample)) throw ProviderError("provider returned a different shape");
            vectors[static_cast<std::size_t>(s)] = std::move(v);
        } catch (const std::exception& e) {
            throw ProviderError("dilated sample " + std::to_string(s) + ": " + e.what());
        }
    });
    return scatter_dilated(vectors, partition);
}

double gamma_weight(double t, double alpha) noexcept {
    const double c = std::cos(std::numbers::pi - std::numbers::pi * t);
    double p;
    if (alpha == std::floor(alpha)) {
        p = std::pow(c, alpha);
    } else {
        p = std::copysign(std::pow(std::abs(c), alpha), c);
    }
    return 0.5 * p + 0.5;
}

DenseLatent mixed_field(const DenseLatent& z, double t, const FieldContext& ctx, const DilatedPartition& partition,
                        double alpha) {
    const double g = gamma_weight(t, alpha);
    if (g == 0.0) return extended_field(z, t, ctx);
    if (g == 1.0) return dilated_field(z, t, ctx, partition);
    DenseLatent patchwise = extended_field(z, t, ctx);
    const DenseLatent dilated = dilated_field(z, t, ctx, partition);
    auto pv = patchwise.values();
    auto dv = dilated.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        pv[i] = static_cast<float>((1.0 - g) * static_cast<double>(pv[i]) + g * static_cast<double>(dv[i]));
    }
    return patchwise;
}

}  // namespace extend3d
