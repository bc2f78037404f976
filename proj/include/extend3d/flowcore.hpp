#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extend3d/errors.hpp"
#include "extend3d/lattice.hpp"
#include "extend3d/patchwork.hpp"

namespace extend3d {

enum class Stage : std::uint8_t { sparse_structure = 1, structured_latent = 2 };

/// Opaque conditioning bytes handed to providers.
struct ConditionEmbedding {
    std::vector<std::uint8_t> bytes;
    friend bool operator==(const ConditionEmbedding&, const ConditionEmbedding&) = default;
};

struct FieldQuery {
    Stage stage = Stage::sparse_structure;
    double t = 1.0;
    const ConditionEmbedding* condition = nullptr;
    const PatchSite* site = nullptr;  // may be null when the caller has no global placement
};

/// v(Z, C, t) on one backbone-sized patch. Output shape equals input shape.
class VectorFieldProvider {
public:
    virtual ~VectorFieldProvider() = default;

    virtual DenseLatent evaluate(const DenseLatent& patch, const FieldQuery& query) = 0;
    virtual SparseLatent evaluate(const SparseLatent& patch, const FieldQuery& query) = 0;

    /// Whether evaluate() may be called from several workers at once.
    virtual bool concurrent() const { return true; }
};

class ZeroField final : public VectorFieldProvider {
public:
    DenseLatent evaluate(const DenseLatent& patch, const FieldQuery& query) override;
    SparseLatent evaluate(const SparseLatent& patch, const FieldQuery& query) override;
};

/// Closed-form field toward a global target. With sigma = 0 this is the exact
/// oracle (Z - target) / t whose Euler trajectory is the straight line of the
/// interpolation Z_t = (1 - t) x0 + t eps. With sigma > 0 it is the optimal
/// flow field for data distributed as N(target, sigma^2 I): the field still
/// pulls toward the target but treats part of the input as signal, so how
/// much of a guide survives depends on the noise level the field is told.
///
/// Patches are mapped to the global target through FieldQuery::site; without
/// a site the patch is assumed to sit at the lattice origin.
class OracleField final : public VectorFieldProvider {
public:
    OracleField(std::optional<DenseLatent> dense_target, std::optional<SparseLatent> sparse_target, double sigma = 0.0);

    DenseLatent evaluate(const DenseLatent& patch, const FieldQuery& query) override;
    SparseLatent evaluate(const SparseLatent& patch, const FieldQuery& query) override;

    double sigma() const noexcept { return sigma_; }
    const std::optional<DenseLatent>& dense_target() const noexcept { return dense_; }
    const std::optional<SparseLatent>& sparse_target() const noexcept { return sparse_; }

private:
    double velocity(double z, double target, double t) const noexcept;

    std::optional<DenseLatent> dense_;
    std::optional<SparseLatent> sparse_;
    double sigma_;
};

/// Element-wise oracle (Z - target) / t on whole lattices. Throws on t = 0.
DenseLatent oracle_eval(const DenseLatent& z, const DenseLatent& target, double t);
SparseLatent oracle_eval(const SparseLatent& z, const SparseLatent& target, double t);

/// Time as providers see it: rounded to f32, the precision the wire protocol
/// carries, so in-process and remote providers receive identical queries.
inline double provider_time(double t) noexcept { return static_cast<double>(static_cast<float>(t)); }

/// Everything the merged field needs besides the latent and the time.
struct FieldContext {
    const PatchGrid* grid = nullptr;
    std::span<const ConditionEmbedding> window_conditions;  // one per window, grid order
    const ConditionEmbedding* global_condition = nullptr;
    VectorFieldProvider* provider = nullptr;
    Stage stage = Stage::sparse_structure;
    int workers = 1;
};

/// Runs fn(0..count-1) on up to `workers` OpenMP threads. The first exception
/// is rethrown on the calling thread after the region joins.
void parallel_for(int count, int workers, const std::function<void(int)>& fn);

/// Overlapping patch-wise field: every window is evaluated independently and
/// the zero-padded results are averaged over the coverage count.
DenseLatent extended_field(const DenseLatent& z, double t, const FieldContext& ctx);
SparseLatent extended_field(const SparseLatent& z, double t, const FieldContext& ctx);

/// Provider evaluations on the dilated samples (full-image condition),
/// scattered back to the extended lattice.
DenseLatent dilated_field(const DenseLatent& z, double t, const FieldContext& ctx, const DilatedPartition& partition);

/// 0.5 cos^alpha(pi - pi t) + 0.5
double gamma_weight(double t, double alpha) noexcept;

/// (1 - gamma_t) * patch-wise + gamma_t * dilated. When gamma_t is exactly 0
/// the dilated branch is skipped.
DenseLatent mixed_field(const DenseLatent& z, double t, const FieldContext& ctx, const DilatedPartition& partition,
                        double alpha);

/// Euler integration over a schedule. The hook maps the raw field to the
/// applied vector at each step (identity when empty).
template <typename Latent>
using FieldFn = std::function<Latent(const Latent& z, double t, int step)>;
template <typename Latent>
using StepHook = std::function<Latent(const Latent& z, double t, Latent raw, int step)>;

template <typename Latent>
Latent euler_integrate(Latent z, const Schedule& schedule, const FieldFn<Latent>& field,
                       const StepHook<Latent>& hook = {}) {
    const auto& times = schedule.times();
    for (std::size_t m = 0; m + 1 < times.size(); ++m) {
        const double t = times[m];
        const double dt = times[m + 1] - t;
        Latent v = field(z, t, static_cast<int>(m));
        if (hook) v = hook(z, t, std::move(v), static_cast<int>(m));
        if (!v.same_shape(z)) throw DimensionError("euler_integrate: field changed the latent shape");
        auto zs = z.values();
        auto vs = v.values();
        for (std::size_t k = 0; k < zs.size(); ++k) {
            zs[k] = static_cast<float>(static_cast<double>(zs[k]) + dt * static_cast<double>(vs[k]));
        }
        if (!z.all_finite()) {
            throw DivergenceError("euler_integrate: non-finite state after step " + std::to_string(m),
                                  static_cast<int>(m));
        }
    }
    return z;
}

}  // namespace extend3d
