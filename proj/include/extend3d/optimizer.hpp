#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "extend3d/lattice.hpp"
#include "extend3d/priors.hpp"
#include "extend3d/structedit.hpp"

namespace extend3d {

struct AdamParams {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int steps = 5;

    /// Throws ConfigError unless lr > 0, eps > 0, 0 <= beta < 1, steps >= 0.
    void validate() const;
};

struct OptimState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;

    OptimState() = default;
    explicit OptimState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update of x in place. Throws OptimizationError on a
/// non-finite gradient (x and state are left untouched).
void adam_step(std::span<double> x, std::span<const double> grad, OptimState& state, const AdamParams& params);

/// Loss with an analytic gradient over a flat parameter vector.
class DifferentiableObjective {
public:
    virtual ~DifferentiableObjective() = default;

    virtual std::size_t size() const = 0;
    /// Returns the loss; writes dL/dv into grad (same size as v).
    virtual double evaluate(std::span<const double> v, std::span<double> grad) const = 0;

    double value(std::span<const double> v) const;
};

struct OptimizeResult {
    std::vector<double> v;
    std::vector<double> trace;  // loss before each step, then the final loss
};

/// Runs params.steps Adam steps from v_init. A non-finite loss aborts with an
/// OptimizationError carrying the trace so far.
OptimizeResult optimize_vector(std::vector<double> v_init, const DifferentiableObjective& objective,
                               const AdamParams& params, OptimState* state = nullptr);

/// Binary cross-entropy pull toward the prior points:
///   L = -(1/|P|) sum_p log sigmoid(logit_p(Z_t - t v))
/// where logits come from the toy decoder. P is a multiset, so voxels with
/// more points weigh more. Parameters are the flattened SS latent v.
class SsLoss final : public DifferentiableObjective {
public:
    SsLoss(DenseLatent z_t, double t, std::span<const Coord> prior_voxels, const ToyCodec& codec);

    std::size_t size() const override { return z_.size(); }
    double evaluate(std::span<const double> v, std::span<double> grad) const override;

    /// Latent blocks touched by at least one prior point, with their counts.
    const std::vector<std::pair<std::size_t, std::size_t>>& blocks() const noexcept { return blocks_; }

private:
    DenseLatent z_;
    double t_;
    int channels_;
    std::size_t total_ = 0;
    std::vector<std::pair<std::size_t, std::size_t>> blocks_;  // (cell offset / C, point count)
};

/// Orthographic top-down render: pixel (x, y) is the mean over the column's
/// entries of feature channels 0..2 (missing channels render as 0). Columns
/// without entries are black. Image rows are x, columns are y.
Image projection_render(const SparseLatent& slat);
Image projection_render(const SparseLatent& slat, std::span<const double> features);

struct SlatWeights {
    double l2 = 1.0;
    double ssim = 1.0;
};

/// lambda_l2 * |render(Z_t - t v) - target|^2 / HW - lambda_ssim * SSIM(render, target)
class SlatObjective final : public DifferentiableObjective {
public:
    SlatObjective(SparseLatent z_t, double t, Image target, SlatWeights weights);

    std::size_t size() const override { return z_.values().size(); }
    double evaluate(std::span<const double> v, std::span<double> grad) const override;

private:
    SparseLatent z_;
    double t_;
    Image target_;
    SlatWeights weights_;
    std::vector<std::size_t> column_;  // per entry, x * width + y
    std::vector<int> count_;           // entries per column
};

std::vector<double> to_doubles(std::span<const float> values);
void assign_floats(std::span<float> out, std::span<const double> values);

}  // namespace extend3d
