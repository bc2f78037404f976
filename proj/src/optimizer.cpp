#include "extend3d/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "extend3d/ssim.hpp"

namespace extend3d {

namespace {

// log(sigmoid(x)) without overflow for large |x|.
double log_sigmoid(double x) noexcept { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_sizes(std::size_t want, std::span<const double> v, std::span<double> grad) {
    if (v.size() != want || grad.size() != want) throw DimensionError("objective: parameter size mismatch");
}

}  // namespace

void AdamParams::validate() const {
    if (!(lr > 0.0)) throw ConfigError("adam: lr must be positive");
    if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("adam: betas must lie in [0, 1)");
    }
    if (steps < 0) throw ConfigError("adam: steps must be >= 0");
}

void adam_step(std::span<double> x, std::span<const double> grad, OptimState& state, const AdamParams& params) {
    if (grad.size() != x.size()) throw DimensionError("adam_step: gradient size differs from parameters");
    if (state.m.empty() && state.v.empty()) state = OptimState(x.size());
    if (state.m.size() != x.size() || state.v.size() != x.size()) throw DimensionError("adam_step: state size mismatch");
    for (double g : grad)
        if (!std::isfinite(g)) throw OptimizationError("adam_step: non-finite gradient");

    const std::int64_t k = ++state.step;
    const double c1 = 1.0 - std::pow(params.beta1, static_cast<double>(k));
    const double c2 = 1.0 - std::pow(params.beta2, static_cast<double>(k));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double g = grad[i];
        state.m[i] = params.beta1 * state.m[i] + (1.0 - params.beta1) * g;
        state.v[i] = params.beta2 * state.v[i] + (1.0 - params.beta2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        x[i] -= params.lr * mhat / (std::sqrt(vhat) + params.eps);
    }
}

double DifferentiableObjective::value(std::span<const double> v) const {
    std::vector<double> scratch(v.size());
    return evaluate(v, scratch);
}

OptimizeResult optimize_vector(std::vector<double> v_init, const DifferentiableObjective& objective,
                               const AdamParams& params, OptimState* state) {
    params.validate();
    if (v_init.size() != objective.size()) throw DimensionError("optimize_vector: initial vector has the wrong size");
    OptimizeResult out{std::move(v_init), {}};
    OptimState local;
    OptimState& st = state ? *state : local;
    std::vector<double> grad(out.v.size());
    for (int s = 0; s <= params.steps; ++s) {
        const double loss = objective.evaluate(out.v, grad);
        out.trace.push_back(loss);
        if (!std::isfinite(loss)) {
            throw OptimizationError("optimize_vector: non-finite loss at step " + std::to_string(s), out.trace);
        }
        if (s == params.steps) break;
        adam_step(out.v, grad, st, params);
    }
    return out;
}

SsLoss::SsLoss(DenseLatent z_t, double t, std::span<const Coord> prior_voxels, const ToyCodec& codec)
    : z_(std::move(z_t)), t_(t), channels_(codec.dims().C), total_(prior_voxels.size()) {
    if (!(t > 0.0 && t <= 1.0)) throw OptimizationError("ss_loss: t must lie in (0, 1]");
    if (prior_voxels.empty()) throw OptimizationError("ss_loss: empty prior coordinate set");
    if (z_.extent() != codec.dims().ss_extent() || z_.channels() != channels_) {
        throw DimensionError("ss_loss: latent does not match the codec");
    }
    const Extent occ = codec.dims().occ_extent();
    const int r = codec.ratio();
    std::map<std::size_t, std::size_t> counts;
    for (const auto& p : prior_voxels) {
        if (!occ.contains(p)) throw BoundsError("ss_loss: prior voxel outside the lattice");
        ++counts[z_.offset(p.x / r, p.y / r, p.z / r) / static_cast<std::size_t>(channels_)];
    }
    blocks_.assign(counts.begin(), counts.end());
}

double SsLoss::evaluate(std::span<const double> v, std::span<double> grad) const {
    check_sizes(size(), v, grad);
    std::fill(grad.begin(), grad.end(), 0.0);
    const auto z = z_.values();
    const double n = static_cast<double>(total_);
    const std::size_t C = static_cast<std::size_t>(channels_);
    double loss = 0.0;
    for (const auto& [cell, count] : blocks_) {
        double logit = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t k = cell * C + c;
            logit += static_cast<double>(z[k]) - t_ * v[k];
        }
        logit /= static_cast<double>(C);
        loss -= static_cast<double>(count) * log_sigmoid(logit);
        const double g = t_ * static_cast<double>(count) * (1.0 - sigmoid(logit)) / (n * static_cast<double>(C));
        for (std::size_t c = 0; c < C; ++c) grad[cell * C + c] = g;
    }
    return loss / n;
}

Image projection_render(const SparseLatent& slat) {
    return projection_render(slat, to_doubles(slat.values()));
}

Image projection_render(const SparseLatent& slat, std::span<const double> features) {
    if (features.size() != slat.values().size()) throw DimensionError("projection_render: feature size mismatch");
    const Extent ext = slat.extent();
    Image img(ext.x, ext.y);
    std::vector<int> hits(static_cast<std::size_t>(ext.x) * ext.y, 0);
    const int channels = std::min(3, slat.width());
    for (std::size_t i = 0; i < slat.count(); ++i) {
        const Coord& p = slat.coords()[i];
        for (int k = 0; k < channels; ++k) img.at(p.x, p.y, k) += features[i * slat.width() + k];
        ++hits[static_cast<std::size_t>(p.x) * ext.y + p.y];
    }
    for (int x = 0; x < ext.x; ++x)
        for (int y = 0; y < ext.y; ++y) {
            const int n = hits[static_cast<std::size_t>(x) * ext.y + y];
            if (n > 1)
                for (int k = 0; k < 3; ++k) img.at(x, y, k) /= n;
        }
    return img;
}

SlatObjective::SlatObjective(SparseLatent z_t, double t, Image target, SlatWeights weights)
    : z_(std::move(z_t)), t_(t), target_(std::move(target)), weights_(weights) {
    if (target_.height == 0 || target_.width == 0) throw ConfigError("slat_objective: missing target image");
    if (!(weights_.l2 >= 0.0 && weights_.ssim >= 0.0)) throw ConfigError("slat_objective: weights must be >= 0");
    if (!(t > 0.0 && t <= 1.0)) throw OptimizationError("slat_objective: t must lie in (0, 1]");
    const Extent ext = z_.extent();
    if (target_.height != ext.x || target_.width != ext.y) {
        throw DimensionError("slat_objective: target image does not match the lattice footprint");
    }
    count_.assign(static_cast<std::size_t>(ext.x) * ext.y, 0);
    column_.reserve(z_.count());
    for (const auto& p : z_.coords()) {
        const std::size_t col = static_cast<std::size_t>(p.x) * ext.y + p.y;
        column_.push_back(col);
        ++count_[col];
    }
}

double SlatObjective::evaluate(std::span<const double> v, std::span<double> grad) const {
    check_sizes(size(), v, grad);
    const auto z = z_.values();
    std::vector<double> x(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) x[k] = static_cast<double>(z[k]) - t_ * v[k];
    const Image rendered = projection_render(z_, x);

    const double hw = static_cast<double>(rendered.height) * rendered.width;
    std::vector<double> dimg(rendered.rgb.size(), 0.0);
    double loss = 0.0;
    if (weights_.l2 > 0.0) {
        double sq = 0.0;
        for (std::size_t k = 0; k < rendered.rgb.size(); ++k) {
            const double diff = rendered.rgb[k] - target_.rgb[k];
            sq += diff * diff;
            dimg[k] = weights_.l2 * 2.0 * diff / hw;
        }
        loss += weights_.l2 * sq / hw;
    }
    if (weights_.ssim > 0.0) {
        std::vector<double> g(rendered.rgb.size());
        loss -= weights_.ssim * ssim(rendered, target_, g);
        for (std::size_t k = 0; k < g.size(); ++k) dimg[k] -= weights_.ssim * g[k];
    }

    std::fill(grad.begin(), grad.end(), 0.0);
    const std::size_t width = static_cast<std::size_t>(z_.width());
    const std::size_t channels = std::min<std::size_t>(3, width);
    for (std::size_t i = 0; i < z_.count(); ++i) {
        const std::size_t col = column_[i];
        const double scale = -t_ / count_[col];
        for (std::size_t k = 0; k < channels; ++k) grad[i * width + k] = scale * dimg[col * 3 + k];
    }
    return loss;
}

std::vector<double> to_doubles(std::span<const float> values) {
    return std::vector<double>(values.begin(), values.end());
}

void assign_floats(std::span<float> out, std::span<const double> values) {
    if (out.size() != values.size()) throw DimensionError("assign_floats: size mismatch");
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = static_cast<float>(values[k]);
}

}  // namespace extend3d
