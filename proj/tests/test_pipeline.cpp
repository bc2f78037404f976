#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "extend3d/fixtures.hpp"
#include "extend3d/pipeline.hpp"
#include "extend3d/tensor_io.hpp"

using namespace extend3d;
namespace fs = std::filesystem;

namespace {

const Dims kSmall{2, 2, 4, 8, 1, 4};

PipelineConfig small_config(const SyntheticScene& scene, std::uint64_t seed) {
    PipelineConfig c;
    c.dims = scene.dims;
    c.d = 2;
    c.k = 10;
    c.ss_adam.steps = 3;
    c.slat_adam.steps = 3;
    c.normalization_box = scene.box;
    c.seed = seed;
    return c;
}

double max_feature_error(const SparseLatent& got, const SparseLatent& want) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.count(); ++i) {
        const auto hit = want.find(got.coords()[i]);
        REQUIRE(hit);
        const auto a = got.feature(i), b = want.feature(*hit);
        for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(double(a[k]) - b[k]));
    }
    return worst;
}

fs::path scratch(const char* tag) {
    const fs::path p = fs::temp_directory_path() / (std::string("extend3d_pipeline_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config parsing is strict") {
    const PipelineConfig c = parse_config(R"({"d": 2, "dims": {"N": 8, "M": 16}, "provider": {"kind": "zero"}, "seed": 7})");
    CHECK(c.d == 2);
    CHECK(c.dims.M == 16);
    CHECK(c.dims.a == 2);
    CHECK(c.seed == 7);
    CHECK(c.provider.kind == "zero");

    CHECK_THROWS_AS(parse_config(R"({"bogus": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"dims": {"Q": 1}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"d": "4"})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"d": 1.5})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"d": 3})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"t_noise": 0.9})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"seed": -1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"provider": {"kind": "magic"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"ss_adam": {"lr": -1}})"), ConfigError);
    CHECK_THROWS_AS(parse_config("{"), ConfigError);
    CHECK_THROWS_AS(parse_config("[]"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config round-trips through JSON") {
    PipelineConfig c;
    c.d = 2;
    c.alpha = 3.5;
    c.seed = 123456789012345ull;
    c.normalization_box = NormalizationBox{{-1, -2, -3}, {4, 5, 6}};
    c.provider.kind = "remote";
    c.provider.endpoint = "unix:/tmp/s";
    c.trace = true;
    const std::string text = config_to_json(c);
    CHECK(config_to_json(parse_config(text)) == text);
    const PipelineConfig back = parse_config(text);
    CHECK(back.seed == c.seed);
    CHECK(back.normalization_box->min.y == -2.0);
}

TEST_CASE("n_iter 0 returns the voxelized prior") {
    const SyntheticScene scene = occluded_cavity_scene(kSmall, 1);
    PipelineConfig c = small_config(scene, 1);
    c.n_iter = 0;
    ZeroField zero;
    const SceneContext ctx = make_scene_context(scene.prior, c);
    const SparseStructureResult r = generate_sparse_structure(ctx, c, zero);
    CHECK(r.occupancy == scene.visible);
    CHECK(r.coords == scene.visible.coords());
}

TEST_CASE("oracle run reconstructs the scene") {
    for (std::uint64_t seed : {1u, 2u}) {
        const SyntheticScene scene = occluded_cavity_scene(kSmall, seed);
        PipelineConfig c = small_config(scene, seed);
        c.slat_optimize = false;
        OracleField oracle(scene.ss_target, scene.slat_target);
        PipelineResult r = run_pipeline(scene.prior, c, oracle);
        CHECK(r.structure.occupancy == scene.target);
        CHECK(r.slat.coords() == r.structure.coords);
        CHECK(max_feature_error(r.slat, scene.slat_target) <= 1e-6);

        // Adam rescales round-off gradients at the optimum to lr-sized
        // steps, so on a 16 x 16 footprint the features drift slightly.
        c.slat_optimize = true;
        r = run_pipeline(scene.prior, c, oracle);
        CHECK(r.structure.occupancy == scene.target);
        CHECK(max_feature_error(r.slat, scene.slat_target) <= 1e-3);
        REQUIRE(r.report.stages.size() == 3);
        CHECK(r.report.stages[0].name == "sparse_structure");
        CHECK(r.report.slat_entries == scene.target.count());
        CHECK(r.sdf.extent == kSmall.occ_extent());
        CHECK(r.ply.find("element vertex " + std::to_string(scene.target.count()) + "\n") != std::string::npos);
    }
}

TEST_CASE("one oracle round is already exact") {
    const SyntheticScene scene = occluded_cavity_scene(kSmall, 4);
    PipelineConfig c = small_config(scene, 4);
    c.n_iter = 1;
    c.ss_optimize = false;
    OracleField oracle(scene.ss_target, scene.slat_target);
    const SceneContext ctx = make_scene_context(scene.prior, c);
    CHECK(generate_sparse_structure(ctx, c, oracle).coords == scene.target.coords());
}

TEST_CASE("zero optimizer steps equal the pure patch-wise flow") {
    const SyntheticScene scene = occluded_cavity_scene(kSmall, 5);
    PipelineConfig on = small_config(scene, 5);
    on.ss_adam.steps = 0;
    on.slat_adam.steps = 0;
    PipelineConfig off = on;
    off.ss_optimize = false;
    off.slat_optimize = false;
    OracleField oracle(scene.ss_target, scene.slat_target, 0.4);
    const PipelineResult a = run_pipeline(scene.prior, on, oracle);
    const PipelineResult b = run_pipeline(scene.prior, off, oracle);
    CHECK(a.structure.occupancy == b.structure.occupancy);
    CHECK(a.slat == b.slat);
}

TEST_CASE("degenerate a = b = 1, d = 1 is the single-patch flow") {
    const Dims one{1, 1, 4, 8, 1, 4};
    const SyntheticScene scene = occluded_cavity_scene(one, 6);
    PipelineConfig c = small_config(scene, 6);
    c.d = 1;
    c.ss_optimize = false;
    OracleField oracle(scene.ss_target, scene.slat_target, 0.3);
    const SceneContext ctx = make_scene_context(scene.prior, c);
    const SparseStructureResult got = generate_sparse_structure(ctx, c, oracle);

    // Plain iterative SDEdit with the provider called once on the whole lattice.
    const ToyCodec codec(one);
    const ConditionEmbedding cond = condition_windows(scene.prior, scene.box, make_patch_grid(one, 1, one.N)).global;
    const PatchSite site = PatchSite::from_window(make_patch_grid(one, 1, one.N)[0]);
    const DenseFieldFn field = [&](const DenseLatent& z, double t, int) {
        return oracle.evaluate(z, {Stage::sparse_structure, provider_time(t), &cond, &site});
    };
    const auto want = iterative_sdedit(voxelize(ctx.points, ctx.box, one.occ_extent()).grid, codec, c.sdedit(),
                                       Schedule::uniform(c.t_start, c.k), field, {}, derive_seed(c.seed, 1));
    CHECK(got.occupancy == want.occupancy);
}

TEST_CASE("runs are deterministic across repeats and worker counts") {
    const SyntheticScene scene = occluded_cavity_scene(kSmall, 7);
    PipelineConfig c = small_config(scene, 7);
    OracleField oracle(scene.ss_target, scene.slat_target, 0.5);
    const PipelineResult a = run_pipeline(scene.prior, c, oracle);
    const PipelineResult b = run_pipeline(scene.prior, c, oracle);
    c.workers = 4;
    const PipelineResult w = run_pipeline(scene.prior, c, oracle);
    CHECK(a.slat == b.slat);
    CHECK(a.ply == b.ply);
    CHECK(a.slat == w.slat);
    CHECK(a.sdf == w.sdf);
    CHECK(a.ply == w.ply);
}

TEST_CASE("trace CSV layout") {
    CHECK(trace_to_csv({}) == "step,t,loss\n");
    const std::string csv = trace_to_csv({{"ss", 0, 3, 1, 0.5, 0.25}});
    CHECK(csv == "step,t,loss\n3,0.5,0.25\n");

    const SyntheticScene scene = occluded_cavity_scene(kSmall, 8);
    PipelineConfig c = small_config(scene, 8);
    c.n_iter = 1;
    OracleField oracle(scene.ss_target, scene.slat_target);
    const PipelineResult r = run_pipeline(scene.prior, c, oracle);
    // (k - 1) Euler steps per stage, steps + 1 evaluations per optimization.
    CHECK(r.trace.size() == 2u * 9u * 4u);
}

TEST_CASE("extend3d writes every output and a partial report on failure") {
    const SyntheticScene scene = occluded_cavity_scene(kSmall, 9);
    const fs::path dir = scratch("ok");
    save_scene_prior((dir / "prior.spr").string(), scene.prior);
    write_xlt((dir / "ss.xlt").string(), to_tensor(scene.ss_target));
    write_xlt((dir / "slat.xlt").string(), to_tensor(scene.slat_target));
    PipelineConfig c = small_config(scene, 9);
    c.provider.ss_target = (dir / "ss.xlt").string();
    c.provider.slat_target = (dir / "slat.xlt").string();
    c.out_dir = (dir / "out").string();
    c.trace = true;
    const RunReport report = extend3d::extend3d((dir / "prior.spr").string(), c);
    for (const char* name : {"scene.ply", "sdf.xlt", "occupancy.xlt", "slat.xlt", "report.json", "trace.csv"})
        CHECK(fs::exists(dir / "out" / name));
    CHECK(report.outputs.size() == 6);
    CHECK(occupancy_from_tensor(read_xlt((dir / "out" / "occupancy.xlt").string())) == scene.target);
    CHECK(slurp(dir / "out" / "trace.csv").rfind("step,t,loss\n", 0) == 0);

    // A provider that cannot serve sparse latents fails in the second stage.
    OracleField dense_only(scene.ss_target, std::nullopt);
    c.out_dir = (dir / "fail").string();
    CHECK_THROWS_AS(extend3d::extend3d((dir / "prior.spr").string(), c, &dense_only), Error);
    const std::string partial = slurp(dir / "fail" / "report.json");
    CHECK(partial.find("sparse_structure") != std::string::npos);
    CHECK(partial.find("structured_latent") != std::string::npos);
    CHECK(partial.find("\"error\"") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("make_provider") {
    PipelineConfig c;
    c.provider.kind = "zero";
    CHECK(make_provider(c) != nullptr);
    c.provider.kind = "oracle";
    CHECK_THROWS_AS(make_provider(c), ConfigError);
    c.provider.kind = "remote";
    CHECK_THROWS_AS(make_provider(c), ConfigError);

    const SyntheticScene scene = occluded_cavity_scene(kSmall, 10);
    const fs::path dir = scratch("provider");
    write_xlt((dir / "ss.xlt").string(), to_tensor(scene.ss_target));
    write_xlt((dir / "slat.xlt").string(), to_tensor(scene.slat_target));
    c.provider.kind = "oracle";
    c.provider.ss_target = (dir / "ss.xlt").string();
    c.provider.slat_target = (dir / "slat.xlt").string();
    c.dims = kSmall;
    c.d = 2;
    CHECK(make_provider(c) != nullptr);
    c.dims.C = 2;
    CHECK_THROWS_AS(make_provider(c), ConfigError);
    fs::remove_all(dir);
}

}  // TEST_SUITE
