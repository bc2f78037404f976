#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "doctest.h"
#include "extend3d/flowcore.hpp"
#include "extend3d/reference.hpp"
#include "support.hpp"

using namespace extend3d;

namespace {

// Depends on where the patch sits, so windowed and dilated evaluations differ.
class PositionField final : public VectorFieldProvider {
public:
    DenseLatent evaluate(const DenseLatent& patch, const FieldQuery& q) override {
        DenseLatent out = patch;
        const auto& e = patch.extent();
        for (int u = 0; u < e.x; ++u)
            for (int v = 0; v < e.y; ++v) {
                const auto& col = q.site->column(u, v);
                for (int z = 0; z < e.z; ++z)
                    out.at(u, v, z) = static_cast<float>(0.5 * patch.at(u, v, z) + 0.1 * u - 0.2 * v + 0.01 * col[0] +
                                                         q.t);
            }
        return out;
    }
    SparseLatent evaluate(const SparseLatent& patch, const FieldQuery&) override { return patch; }
};

class ThrowingField final : public VectorFieldProvider {
public:
    DenseLatent evaluate(const DenseLatent&, const FieldQuery& q) override {
        if (q.site->column(0, 0)[0] > 0) throw std::runtime_error("backend down");
        return DenseLatent({4, 4, 4}, 1);
    }
    SparseLatent evaluate(const SparseLatent& p, const FieldQuery&) override { return p; }
};

class SerialOnlyField final : public VectorFieldProvider {
public:
    DenseLatent evaluate(const DenseLatent& patch, const FieldQuery&) override {
        if (active_.fetch_add(1) != 0) overlapped_ = true;
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
        active_.fetch_sub(1);
        return DenseLatent(patch.extent(), patch.channels());
    }
    SparseLatent evaluate(const SparseLatent& p, const FieldQuery&) override { return p; }
    bool concurrent() const override { return false; }
    bool overlapped() const { return overlapped_; }

private:
    std::atomic<int> active_{0};
    std::atomic<bool> overlapped_{false};
};

}  // namespace

TEST_SUITE("flowcore") {

TEST_CASE("oracle_eval fixed point, endpoint and one-step exactness") {
    std::mt19937_64 rng(1);
    const Extent e{4, 4, 4};
    const DenseLatent target = testing::random_dense(e, 1, rng);
    const DenseLatent eps = testing::random_dense(e, 1, rng);
    const DenseLatent still = oracle_eval(target, target, 0.4);
    for (float v : still.values()) CHECK(v == 0.0f);

    const DenseLatent v1 = oracle_eval(eps, target, 1.0);
    for (std::size_t k = 0; k < v1.size(); ++k)
        CHECK(v1.values()[k] == static_cast<float>(double(eps.values()[k]) - target.values()[k]));

    const DenseLatent z0 = euler_integrate<DenseLatent>(
        eps, Schedule({1.0, 0.0}), [&](const DenseLatent& z, double t, int) { return oracle_eval(z, target, t); });
    CHECK(testing::max_abs_diff(z0.values(), target.values()) <= 1e-6);

    CHECK_THROWS_AS(oracle_eval(eps, target, 0.0), Error);
}

TEST_CASE("OracleField with sigma 0 matches oracle_eval; sigma > 0 stays finite") {
    std::mt19937_64 rng(2);
    const DenseLatent target = testing::random_dense({4, 4, 4}, 2, rng);
    const DenseLatent z = testing::random_dense({4, 4, 4}, 2, rng);
    OracleField exact(target, std::nullopt);
    const FieldQuery q{Stage::sparse_structure, 0.3, nullptr, nullptr};
    CHECK(exact.evaluate(z, q) == oracle_eval(z, target, 0.3));
    CHECK_THROWS_AS(exact.evaluate(z, FieldQuery{Stage::sparse_structure, 0.0, nullptr, nullptr}), ProviderError);

    OracleField biased(target, std::nullopt, 0.5);
    CHECK(biased.evaluate(z, q).all_finite());
    CHECK(biased.evaluate(z, FieldQuery{Stage::sparse_structure, 1.0, nullptr, nullptr}).all_finite());
    CHECK_THROWS_AS(OracleField(target, std::nullopt, -1.0), ConfigError);
}

TEST_CASE("gamma endpoints and monotonicity") {
    CHECK(gamma_weight(1.0, 5.0) == 1.0);
    CHECK(gamma_weight(1.0, 2.0) == 1.0);
    CHECK(gamma_weight(0.0, 5.0) == 0.0);
    CHECK(gamma_weight(0.5, 5.0) == doctest::Approx(0.5).epsilon(1e-15));
    double prev = gamma_weight(0.0, 5.0);
    for (int i = 1; i <= 1000; ++i) {
        const double g = gamma_weight(i * 1e-3, 5.0);
        CHECK(g >= prev);
        prev = g;
    }
}

TEST_CASE("extended_field with consistent oracle equals the global oracle") {
    std::mt19937_64 rng(3);
    for (int d : {1, 2, 4}) {
        const PatchGrid grid(2, 3, 4, d);
        const DenseLatent target = testing::random_dense(grid.extent(), 1, rng);
        const DenseLatent z = testing::random_dense(grid.extent(), 1, rng);
        OracleField oracle(target, std::nullopt);
        FieldContext ctx{&grid, {}, nullptr, &oracle, Stage::sparse_structure, 1};
        const DenseLatent v = extended_field(z, 0.5, ctx);
        CHECK(v == oracle_eval(z, target, 0.5));
        ctx.workers = 4;
        CHECK(extended_field(z, 0.5, ctx) == v);
        CHECK(reference::extended_field(z, 0.5, ctx) == v);
    }
}

TEST_CASE("sparse extended_field with consistent oracle equals the global oracle") {
    std::mt19937_64 rng(4);
    const PatchGrid grid(2, 2, 8, 4);
    const SparseLatent target = testing::random_sparse(grid.extent(), 3, 0.15, rng);
    SparseLatent z = target;
    std::normal_distribution<float> n(0.f, 1.f);
    for (auto& v : z.values()) v = n(rng);
    OracleField oracle(std::nullopt, target);
    const FieldContext ctx{&grid, {}, nullptr, &oracle, Stage::structured_latent, 3};
    CHECK(extended_field(z, 0.7, ctx) == oracle_eval(z, target, provider_time(0.7)));
}

TEST_CASE("single window equals the provider; zero provider gives zero") {
    std::mt19937_64 rng(5);
    const PatchGrid grid(1, 1, 4, 2);
    const DenseLatent z = testing::random_dense(grid.extent(), 1, rng);
    PositionField pos;
    const FieldContext ctx{&grid, {}, nullptr, &pos, Stage::sparse_structure, 1};
    const PatchSite site = PatchSite::from_window(grid[0]);
    CHECK(extended_field(z, 0.25, ctx) == pos.evaluate(z, FieldQuery{Stage::sparse_structure, 0.25, nullptr, &site}));

    ZeroField zero;
    const PatchGrid wide(2, 2, 4, 2);
    const FieldContext zctx{&wide, {}, nullptr, &zero, Stage::sparse_structure, 2};
    CHECK(extended_field(testing::random_dense(wide.extent(), 1, rng), 0.5, zctx) == DenseLatent(wide.extent(), 1));
}

TEST_CASE("mixed field endpoints and convexity") {
    std::mt19937_64 rng(6);
    const PatchGrid grid(2, 2, 4, 2);
    const DenseLatent z = testing::random_dense(grid.extent(), 1, rng);
    const DilatedPartition part = dilated_partition(2, 2, 4, 17);
    PositionField pos;
    const FieldContext ctx{&grid, {}, nullptr, &pos, Stage::sparse_structure, 1};
    CHECK(mixed_field(z, 0.0, ctx, part, 5.0) == extended_field(z, 0.0, ctx));
    CHECK(mixed_field(z, 1.0, ctx, part, 5.0) == dilated_field(z, 1.0, ctx, part));
    CHECK_FALSE(extended_field(z, 0.5, ctx) == dilated_field(z, 0.5, ctx, part));

    const DenseLatent target = testing::random_dense(grid.extent(), 1, rng);
    OracleField oracle(target, std::nullopt);
    const FieldContext octx{&grid, {}, nullptr, &oracle, Stage::sparse_structure, 1};
    const DenseLatent patchwise = extended_field(z, 0.6, octx);
    CHECK(dilated_field(z, 0.6, octx, part) == patchwise);
    CHECK(testing::max_abs_diff(mixed_field(z, 0.6, octx, part, 5.0).values(), patchwise.values()) <= 1e-6);
}

TEST_CASE("euler: oracle exactness, schedule independence, zero field") {
    std::mt19937_64 rng(7);
    const Extent e{4, 4, 4};
    const DenseLatent target = testing::random_dense(e, 1, rng);
    const DenseLatent eps = sample_gaussian(e, 1, 3);
    const FieldFn<DenseLatent> oracle = [&](const DenseLatent& z, double t, int) { return oracle_eval(z, target, t); };
    const DenseLatent two = euler_integrate(eps, Schedule({1.0, 0.5, 0.0}), oracle);
    const DenseLatent fifty = euler_integrate(eps, Schedule::uniform(1.0, 50), oracle);
    for (std::size_t k = 0; k < target.size(); ++k) {
        const double ref = std::max(1.0, std::abs(double(target.values()[k])));
        CHECK(std::abs(two.values()[k] - target.values()[k]) / ref <= 1e-5);
        CHECK(std::abs(fifty.values()[k] - target.values()[k]) / ref <= 1e-5);
        CHECK(std::abs(two.values()[k] - fifty.values()[k]) / ref <= 1e-5);
    }

    const FieldFn<DenseLatent> zero = [](const DenseLatent& z, double, int) {
        return DenseLatent(z.extent(), z.channels());
    };
    CHECK(euler_integrate(eps, Schedule::uniform(0.8, 10), zero) == eps);
}

TEST_CASE("euler hook replaces the field and divergence names the step") {
    const DenseLatent start({2, 2, 2}, 1, 1.0f);
    const FieldFn<DenseLatent> zero = [](const DenseLatent& z, double, int) {
        return DenseLatent(z.extent(), z.channels());
    };
    const StepHook<DenseLatent> push = [](const DenseLatent& z, double, DenseLatent, int) {
        return DenseLatent(z.extent(), z.channels(), -1.0f);
    };
    // Integrating dz/dt = -1 from t = 1 to 0 adds 1.
    const DenseLatent out = euler_integrate(start, Schedule::uniform(1.0, 5), zero, push);
    for (float v : out.values()) CHECK(v == doctest::Approx(2.0f));

    const FieldFn<DenseLatent> blowup = [](const DenseLatent& z, double, int step) {
        return DenseLatent(z.extent(), z.channels(), step == 2 ? INFINITY : 0.0f);
    };
    try {
        euler_integrate(start, Schedule::uniform(1.0, 6), blowup);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step() == 2);
    }
}

TEST_CASE("provider failure carries the patch index") {
    const PatchGrid grid(2, 1, 4, 1);
    ThrowingField bad;
    const FieldContext ctx{&grid, {}, nullptr, &bad, Stage::sparse_structure, 2};
    try {
        extended_field(DenseLatent(grid.extent(), 1), 0.5, ctx);
        FAIL("expected provider error");
    } catch (const ProviderError& e) {
        CHECK(std::string(e.what()).find("patch (1,0)") != std::string::npos);
    }
}

TEST_CASE("non-concurrent providers are called one at a time") {
    const PatchGrid grid(2, 2, 4, 4);
    SerialOnlyField serial;
    const FieldContext ctx{&grid, {}, nullptr, &serial, Stage::sparse_structure, 8};
    extended_field(DenseLatent(grid.extent(), 1), 0.5, ctx);
    CHECK_FALSE(serial.overlapped());
}

}  // TEST_SUITE
