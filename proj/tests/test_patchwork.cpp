#include <random>
#include <set>

#include "doctest.h"
#include "extend3d/patchwork.hpp"
#include "extend3d/reference.hpp"
#include "support.hpp"

using namespace extend3d;

namespace {

// Membership by enumerating window starts directly, independent of PatchGrid's arithmetic.
int brute_coverage(int a, int b, int K, int d, int x, int y) {
    const int s = K / d;
    int n = 0;
    for (int x0 = 0; x0 + K <= a * K; x0 += s)
        for (int y0 = 0; y0 + K <= b * K; y0 += s) n += x >= x0 && x < x0 + K && y >= y0 && y < y0 + K;
    return n;
}

std::vector<DenseLatent> restrict_all(const DenseLatent& z, const PatchGrid& grid) {
    std::vector<DenseLatent> out;
    for (const auto& w : grid.windows()) out.push_back(patch_dense(z, w));
    return out;
}

}  // namespace

TEST_SUITE("patchwork") {

TEST_CASE("window counts") {
    CHECK(PatchGrid(1, 1, 8, 4).size() == 1);
    const PatchGrid g(2, 3, 4, 2);
    CHECK(g.size() == 15);
    CHECK(g.rows() == 3);
    CHECK(g.cols() == 5);
    std::set<int> xs, ys;
    for (const auto& w : g.windows()) {
        xs.insert(w.x0());
        ys.insert(w.y0());
    }
    CHECK(xs == std::set<int>{0, 2, 4});
    CHECK(ys == std::set<int>{0, 2, 4, 6, 8});
    CHECK(PatchGrid(2, 2, 8, 4).size() == 25);
    CHECK(make_patch_grid(Dims{}, 4, 8).size() == 25);
}

TEST_CASE("grid rejects d not dividing K") {
    CHECK_THROWS_AS(PatchGrid(2, 2, 8, 3), ConfigError);
    CHECK_THROWS_AS(make_patch_grid(Dims{}, 4, 16), ConfigError);
}

TEST_CASE("coverage agrees with brute-force membership") {
    for (int a = 1; a <= 3; ++a)
        for (int b = 1; b <= 3; ++b)
            for (int K : {4, 8})
                for (int d : {1, 2, 4}) {
                    const PatchGrid g(a, b, K, d);
                    for (int x = 0; x < a * K; ++x)
                        for (int y = 0; y < b * K; ++y) {
                            const int n = brute_coverage(a, b, K, d, x, y);
                            CHECK(n >= 1);
                            CHECK(g.coverage(x, y) == n);
                            const auto cov = g.covering(x, y);
                            CHECK(static_cast<int>(cov.size()) == n);
                            for (auto w : cov) CHECK(g[w].contains_column(x, y));
                        }
                }
}

TEST_CASE("patch_dense copies the window box") {
    CHECK_THROWS_AS(patch_dense(DenseLatent({8, 8, 4}, 1), Window{0, 0, 8, 1}), BoundsError);
    std::mt19937_64 rng(1);
    const DenseLatent whole = testing::random_dense({4, 4, 4}, 2, rng);
    CHECK(patch_dense(whole, Window{0, 0, 4, 1}) == whole);

    CHECK(patch_dense(DenseLatent({8, 8, 4}, 1, 3.0f), Window{1, 1, 4, 2}) == DenseLatent({4, 4, 4}, 1, 3.0f));

    DenseLatent probe({8, 8, 4}, 1);
    probe.at(2, 4, 0) = 9.0f;
    // Window (1, 2) with K=4, d=2 starts at (2, 4).
    const DenseLatent p = patch_dense(probe, Window{1, 2, 4, 2});
    CHECK(p.at(0, 0, 0) == 9.0f);
}

TEST_CASE("patch_dense and unpatch_dense against a per-cell oracle") {
    std::mt19937_64 rng(2);
    const PatchGrid g(2, 2, 4, 2);
    const DenseLatent z = testing::random_dense(g.extent(), 2, rng);
    DenseLatent count(g.extent(), 1);
    for (const auto& w : g.windows()) {
        const DenseLatent p = patch_dense(z, w);
        const DenseLatent back = unpatch_dense(p, w, g.extent());
        for (int x = 0; x < 8; ++x)
            for (int y = 0; y < 8; ++y)
                for (int k = 0; k < 4; ++k)
                    for (int c = 0; c < 2; ++c) {
                        const bool in = w.contains({x, y, k});
                        CHECK(back.at(x, y, k, c) == (in ? z.at(x, y, k, c) : 0.0f));
                        if (in) CHECK(p.at(x - w.x0(), y - w.y0(), k, c) == z.at(x, y, k, c));
                    }
        const DenseLatent ones = unpatch_dense(DenseLatent({4, 4, 4}, 1, 1.0f), w, g.extent());
        for (std::size_t i = 0; i < count.size(); ++i) count.values()[i] += ones.values()[i];
    }
    CHECK(unpatch_dense(DenseLatent({4, 4, 4}, 1), g[3], g.extent()) == DenseLatent(g.extent(), 1));
    for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y)
            for (int k = 0; k < 4; ++k) CHECK(count.at(x, y, k) == static_cast<float>(brute_coverage(2, 2, 4, 2, x, y)));
}

TEST_CASE("sparse patches translate and straddle") {
    const Extent e{8, 4, 4};
    const PatchGrid g(2, 1, 4, 2);
    const SparseLatent z = SparseLatent::from_entries(e, 1, {{0, 1, 1}, {2, 0, 0}, {3, 3, 3}, {6, 2, 1}},
                                                      {1.f, 2.f, 3.f, 4.f});
    const SparseLatent origin = patch_sparse(z, g[0]);
    CHECK(origin.count() == 3);
    CHECK(origin.coords()[0] == Coord{0, 1, 1});

    const SparseLatent mid = patch_sparse(z, g[1]);  // window starts at x = 2
    REQUIRE(mid.find({0, 0, 0}));
    CHECK(mid.feature(*mid.find({0, 0, 0}))[0] == 2.f);
    // (2,0,0) and (3,3,3) straddle windows 0 and 1.
    CHECK(mid.find({1, 3, 3}));
    CHECK(origin.find({2, 0, 0}));

    for (const auto& w : g.windows()) {
        const SparseLatent p = patch_sparse(z, w);
        for (const auto& c : z.coords()) CHECK(p.find({c.x - w.x0(), c.y - w.y0(), c.z}).has_value() == w.contains(c));
        const SparseLatent back = unpatch_sparse(p, w, z.coords(), e);
        CHECK(back.coords() == z.coords());
        for (std::size_t i = 0; i < z.count(); ++i)
            CHECK(back.feature(i)[0] == (w.contains(z.coords()[i]) ? z.feature(i)[0] : 0.0f));
    }
}

TEST_CASE("merge of constant patches is constant and single patch is identity") {
    const PatchGrid g(2, 2, 4, 4);
    std::vector<DenseLatent> patches(g.size(), DenseLatent({4, 4, 4}, 1, 0.3f));
    const DenseLatent merged = merge_vectors(patches, g);
    for (float v : merged.values()) CHECK(v == 0.3f);

    std::mt19937_64 rng(3);
    const PatchGrid one(1, 1, 4, 2);
    std::vector<DenseLatent> single{testing::random_dense({4, 4, 4}, 2, rng)};
    CHECK(merge_vectors(single, one) == single[0]);
}

TEST_CASE("doubly covered band averages two patches") {
    const PatchGrid g(2, 1, 2, 2);  // 4 x 2 x 2 lattice, windows at x = 0, 1, 2
    REQUIRE(g.size() == 3);
    std::vector<DenseLatent> patches{DenseLatent({2, 2, 2}, 1, 1.0f), DenseLatent({2, 2, 2}, 1, 2.0f),
                                     DenseLatent({2, 2, 2}, 1, 4.0f)};
    const DenseLatent m = merge_vectors(patches, g);
    for (int y = 0; y < 2; ++y)
        for (int z = 0; z < 2; ++z) {
            CHECK(m.at(0, y, z) == 1.0f);
            CHECK(m.at(1, y, z) == 1.5f);
            CHECK(m.at(2, y, z) == 3.0f);
            CHECK(m.at(3, y, z) == 4.0f);
        }
}

TEST_CASE("merge of restrictions reconstructs the global field") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 12; ++trial) {
        const int a = 1 + trial % 2, b = 1 + (trial / 2) % 2;
        for (int d : {1, 2, 4}) {
            const PatchGrid g(a, b, 8, d);
            const DenseLatent z = testing::random_dense(g.extent(), 1 + trial % 3, rng);
            const auto patches = restrict_all(z, g);
            const DenseLatent m = merge_vectors(patches, g);
            CHECK(testing::max_abs_diff(m.values(), z.values()) <= 1e-12);
            CHECK(m == reference::merge_vectors(patches, g));
        }
    }
}

TEST_CASE("sparse merge matches the per-coordinate average and the serial reference") {
    std::mt19937_64 rng(5);
    for (int d : {1, 2, 4}) {
        const PatchGrid g(2, 2, 8, d);
        const SparseLatent z = testing::random_sparse(g.extent(), 3, 0.1, rng);
        std::vector<SparseLatent> patches;
        std::uniform_real_distribution<float> u(-1.f, 1.f);
        for (const auto& w : g.windows()) {
            SparseLatent p = patch_sparse(z, w);
            for (auto& v : p.values()) v = u(rng);
            patches.push_back(std::move(p));
        }
        const SparseLatent m = merge_vectors(patches, g, z.coords(), g.extent());
        CHECK(m == reference::merge_vectors(patches, g, z.coords(), g.extent()));
        for (std::size_t i = 0; i < z.count(); ++i) {
            const Coord c = z.coords()[i];
            for (int k = 0; k < 3; ++k) {
                double sum = 0.0;
                int n = 0;
                for (std::size_t w = 0; w < g.size(); ++w) {
                    if (!g[w].contains(c)) continue;
                    ++n;
                    const auto at = patches[w].find({c.x - g[w].x0(), c.y - g[w].y0(), c.z});
                    sum += patches[w].feature(*at)[k];
                }
                CHECK(m.feature(i)[k] == static_cast<float>(sum / n));
            }
        }
        // Restrictions of the global field merge back to it.
        std::vector<SparseLatent> restr;
        for (const auto& w : g.windows()) restr.push_back(patch_sparse(z, w));
        CHECK(merge_vectors(restr, g, z.coords(), g.extent()) == z);
    }
}

TEST_CASE("dilated partition covers every pillar exactly once") {
    const DilatedPartition one = dilated_partition(1, 1, 4, 9);
    REQUIRE(one.samples.size() == 1);
    CHECK(one.samples[0] == PatchSite::from_window(Window{0, 0, 4, 1}));

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const DilatedPartition p = dilated_partition(2, 2, 4, seed);
        REQUIRE(p.samples.size() == 4);
        std::vector<int> hits(8 * 8, 0);
        for (const auto& s : p.samples) {
            CHECK(s.side == 4);
            for (int u = 0; u < 4; ++u)
                for (int v = 0; v < 4; ++v) {
                    const auto& c = s.column(u, v);
                    CHECK(c[0] / 2 == u);  // block (u, v) of 2 x 2 pillars
                    CHECK(c[1] / 2 == v);
                    ++hits[static_cast<std::size_t>(c[0] * 8 + c[1])];
                }
        }
        for (int h : hits) CHECK(h == 1);

        std::mt19937_64 rng(seed);
        const DenseLatent z = testing::random_dense({8, 8, 4}, 2, rng);
        std::vector<DenseLatent> gathered;
        for (const auto& s : p.samples) gathered.push_back(gather_site(z, s));
        CHECK(scatter_dilated(gathered, p) == z);
    }
    const DilatedPartition p = dilated_partition(2, 2, 4, 1);
    std::vector<DenseLatent> zeros(4, DenseLatent({4, 4, 4}, 1));
    CHECK(scatter_dilated(zeros, p) == DenseLatent({8, 8, 4}, 1));
}

}  // TEST_SUITE
