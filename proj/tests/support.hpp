#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "extend3d/lattice.hpp"
#include "extend3d/optimizer.hpp"
#include "extend3d/priors.hpp"

namespace testing {

inline extend3d::DenseLatent random_dense(extend3d::Extent e, int channels, std::mt19937_64& rng,
                                          double lo = -1.0, double hi = 1.0) {
    extend3d::DenseLatent z(e, channels);
    std::uniform_real_distribution<float> u(static_cast<float>(lo), static_cast<float>(hi));
    for (auto& v : z.values()) v = u(rng);
    return z;
}

inline extend3d::SparseLatent random_sparse(extend3d::Extent e, int width, double density, std::mt19937_64& rng) {
    std::vector<extend3d::Coord> coords;
    std::vector<float> features;
    std::bernoulli_distribution keep(density);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (int x = 0; x < e.x; ++x)
        for (int y = 0; y < e.y; ++y)
            for (int z = 0; z < e.z; ++z)
                if (keep(rng)) {
                    coords.push_back({x, y, z});
                    for (int k = 0; k < width; ++k) features.push_back(u(rng));
                }
    return extend3d::SparseLatent::from_entries(e, width, std::move(coords), std::move(features));
}

inline extend3d::Image random_image(int h, int w, std::mt19937_64& rng) {
    extend3d::Image img(h, w);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : img.rgb) v = u(rng);
    return img;
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

inline double rel_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct FdProbe {
    std::size_t index;
    double analytic;
    double numeric;
    double rel;
};

// Central differences of f at `probes` random coordinates of x.
inline std::vector<FdProbe> fd_check(const std::function<double(std::span<const double>)>& f,
                                     std::vector<double> x, std::span<const double> grad, int probes,
                                     std::mt19937_64& rng, double h = 1e-5, double floor = 1e-6) {
    std::vector<FdProbe> out;
    std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
    for (int p = 0; p < probes; ++p) {
        const std::size_t i = pick(rng);
        const double x0 = x[i];
        x[i] = x0 + h;
        const double up = f(x);
        x[i] = x0 - h;
        const double down = f(x);
        x[i] = x0;
        const double numeric = (up - down) / (2.0 * h);
        out.push_back({i, grad[i], numeric, rel_error(grad[i], numeric, floor)});
    }
    return out;
}

inline double worst(const std::vector<FdProbe>& probes) {
    double m = 0.0;
    for (const auto& p : probes) m = std::max(m, p.rel);
    return m;
}

// Block-constant occupancy: every r^3 block is wholly full or empty.
inline extend3d::OccupancyGrid random_block_grid(const extend3d::Dims& dims, double p, std::mt19937_64& rng) {
    const extend3d::Extent blocks = dims.ss_extent();
    const int r = dims.ratio();
    extend3d::OccupancyGrid g(dims.occ_extent());
    std::bernoulli_distribution full(p);
    for (int bx = 0; bx < blocks.x; ++bx)
        for (int by = 0; by < blocks.y; ++by)
            for (int bz = 0; bz < blocks.z; ++bz) {
                if (!full(rng)) continue;
                for (int x = 0; x < r; ++x)
                    for (int y = 0; y < r; ++y)
                        for (int z = 0; z < r; ++z) g.set({bx * r + x, by * r + y, bz * r + z});
            }
    return g;
}

}  // namespace testing
