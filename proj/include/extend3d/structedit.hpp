#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "extend3d/flowcore.hpp"
#include "extend3d/lattice.hpp"

namespace extend3d {

/// Linear stand-in for the occupancy VAE. encode averages each r^3 block
/// and maps the fraction o to 2o - 1 in every channel; decode upsamples the
/// channel mean by nearest neighbour, so a voxel is occupied exactly when its
/// block is more than half full.
class ToyCodec {
public:
    explicit ToyCodec(const Dims& dims);

    const Dims& dims() const noexcept { return dims_; }
    int ratio() const noexcept { return dims_.ratio(); }

    DenseLatent encode(const OccupancyGrid& grid) const;
    /// Real-valued aM x bM x M logits as a single-channel lattice.
    DenseLatent decode_logits(const DenseLatent& latent) const;
    /// Logit at one voxel; cheaper than a full decode.
    double logit_at(const DenseLatent& latent, const Coord& voxel) const noexcept;
    /// Strictly positive logits are occupied.
    OccupancyGrid decode(const DenseLatent& latent) const;

private:
    Dims dims_;
};

struct SdeditParams {
    double t_start = 0.8;
    double t_noise = 0.6;
    int n_iter = 2;
    /// Permits t_noise > t_start. Only meaningful for ablations.
    bool allow_over_noise = false;

    /// Throws ConfigError unless 0 <= t_noise <= t_start, 0 < t_start <= 1
    /// and n_iter >= 0 (t_noise may exceed t_start if allow_over_noise).
    void validate() const;
};

/// (1 - t_noise) * guide + t_noise * eps. The caller then integrates from
/// t_start, so t_noise < t_start under-noises the guide.
DenseLatent under_noise(const DenseLatent& guide, const SdeditParams& params, std::uint64_t seed);

/// Field used during a round; typically a bound extended_field or mixed_field.
using DenseFieldFn = FieldFn<DenseLatent>;
using DenseHook = StepHook<DenseLatent>;

struct SdeditRound {
    OccupancyGrid occupancy;
    DenseLatent final_latent;
};

/// encode -> under_noise -> Euler over the schedule (hook applied every step)
/// -> decode -> threshold. The schedule must start at params.t_start.
SdeditRound sdedit_round(const OccupancyGrid& occupancy, const ToyCodec& codec, const SdeditParams& params,
                         const Schedule& schedule, const DenseFieldFn& field, const DenseHook& hook,
                         std::uint64_t seed);

/// Chains params.n_iter rounds. Round n draws its noise from
/// derive_seed(seed, n). `hook_for_round` may return an empty hook to disable
/// optimization in a given round; `on_round` observes every round's output.
struct IterativeSdeditResult {
    std::vector<Coord> coords;
    OccupancyGrid occupancy;
    std::vector<std::size_t> occupied_per_round;  // index 0 is the input grid
};

IterativeSdeditResult iterative_sdedit(const OccupancyGrid& initial, const ToyCodec& codec, const SdeditParams& params,
                                       const Schedule& schedule, const DenseFieldFn& field,
                                       const std::function<DenseHook(int round)>& hook_for_round, std::uint64_t seed);

}  // namespace extend3d
