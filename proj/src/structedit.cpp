#include "extend3d/structedit.hpp"

#include <cmath>

namespace extend3d {

ToyCodec::ToyCodec(const Dims& dims) : dims_(dims) { dims_.validate(); }

DenseLatent ToyCodec::encode(const OccupancyGrid& grid) const {
    if (grid.extent() != dims_.occ_extent()) throw DimensionError("encode: occupancy grid does not match dims");
    const int r = ratio();
    const double block = static_cast<double>(r) * r * r;
    const Extent ext = dims_.ss_extent();
    DenseLatent out(ext, dims_.C);
    for (int x = 0; x < ext.x; ++x)
        for (int y = 0; y < ext.y; ++y)
            for (int z = 0; z < ext.z; ++z) {
                int filled = 0;
                for (int dx = 0; dx < r; ++dx)
                    for (int dy = 0; dy < r; ++dy)
                        for (int dz = 0; dz < r; ++dz) filled += grid.occupied({x * r + dx, y * r + dy, z * r + dz});
                const auto value = static_cast<float>(2.0 * (filled / block) - 1.0);
                for (int c = 0; c < dims_.C; ++c) out.at(x, y, z, c) = value;
            }
    return out;
}

double ToyCodec::logit_at(const DenseLatent& latent, const Coord& voxel) const noexcept {
    const int r = ratio();
    double sum = 0.0;
    for (int c = 0; c < dims_.C; ++c) sum += latent.at(voxel.x / r, voxel.y / r, voxel.z / r, c);
    return sum / dims_.C;
}

DenseLatent ToyCodec::decode_logits(const DenseLatent& latent) const {
    if (latent.extent() != dims_.ss_extent() || latent.channels() != dims_.C) {
        throw DimensionError("decode: latent does not match dims");
    }
    const Extent ext = dims_.occ_extent();
    DenseLatent out(ext, 1);
    for (int x = 0; x < ext.x; ++x)
        for (int y = 0; y < ext.y; ++y)
            for (int z = 0; z < ext.z; ++z) out.at(x, y, z) = static_cast<float>(logit_at(latent, {x, y, z}));
    return out;
}

OccupancyGrid ToyCodec::decode(const DenseLatent& latent) const {
    const DenseLatent logits = decode_logits(latent);
    OccupancyGrid out(logits.extent());
    const Extent ext = logits.extent();
    for (int x = 0; x < ext.x; ++x)
        for (int y = 0; y < ext.y; ++y)
            for (int z = 0; z < ext.z; ++z) out.set({x, y, z}, logits.at(x, y, z) > 0.0f);
    return out;
}

void SdeditParams::validate() const {
    if (!(t_start > 0.0 && t_start <= 1.0)) throw ConfigError("sdedit: t_start must lie in (0, 1]");
    if (!(t_noise >= 0.0 && t_noise <= 1.0)) throw ConfigError("sdedit: t_noise must lie in [0, 1]");
    if (t_noise > t_start && !allow_over_noise) {
        throw ConfigError("sdedit: t_noise must not exceed t_start (set allow_over_noise for ablations)");
    }
    if (n_iter < 0) throw ConfigError("sdedit: n_iter must be >= 0");
}

DenseLatent under_noise(const DenseLatent& guide, const SdeditParams& params, std::uint64_t seed) {
    params.validate();
    const DenseLatent eps = sample_gaussian(guide.extent(), guide.channels(), seed);
    return lerp_latent(guide, eps, params.t_noise);
}

SdeditRound sdedit_round(const OccupancyGrid& occupancy, const ToyCodec& codec, const SdeditParams& params,
                         const Schedule& schedule, const DenseFieldFn& field, const DenseHook& hook,
                         std::uint64_t seed) {
    params.validate();
    if (std::abs(schedule.front() - params.t_start) > 1e-12) {
        throw ConfigError("sdedit_round: schedule must start at t_start");
    }
    const DenseLatent guide = codec.encode(occupancy);
    DenseLatent start = under_noise(guide, params, seed);
    DenseLatent final_latent = euler_integrate<DenseLatent>(std::move(start), schedule, field, hook);
    OccupancyGrid next = codec.decode(final_latent);
    return {std::move(next), std::move(final_latent)};
}

IterativeSdeditResult iterative_sdedit(const OccupancyGrid& initial, const ToyCodec& codec, const SdeditParams& params,
                                       const Schedule& schedule, const DenseFieldFn& field,
                                       const std::function<DenseHook(int round)>& hook_for_round, std::uint64_t seed) {
    params.validate();
    IterativeSdeditResult result;
    result.occupancy = initial;
    result.occupied_per_round.push_back(initial.count());
    for (int n = 0; n < params.n_iter; ++n) {
        const DenseHook hook = hook_for_round ? hook_for_round(n) : DenseHook{};
        auto round = sdedit_round(result.occupancy, codec, params, schedule, field, hook,
                                  derive_seed(seed, static_cast<std::uint64_t>(n)));
        result.occupancy = std::move(round.occupancy);
        result.occupied_per_round.push_back(result.occupancy.count());
    }
    result.coords = result.occupancy.coords();
    return result;
}

}  // namespace extend3d
