// Command-line front end: generate, voxelize, inspect, serve-oracle, oracle-demo.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "extend3d/bridge.hpp"
#include "extend3d/fixtures.hpp"
#include "extend3d/pipeline.hpp"
#include "extend3d/tensor_io.hpp"

using namespace extend3d;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::vector<double> parse_numbers(const std::string& text, std::size_t count, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": bad number '" + item + "'");
        }
    }
    if (out.size() != count) throw ConfigError(std::string(what) + ": expected " + std::to_string(count) + " values");
    return out;
}

Dims parse_dims(const std::string& text) {
    const auto v = parse_numbers(text, 6, "--dims");
    int f[6];
    for (int k = 0; k < 6; ++k) {
        if (v[k] != std::floor(v[k]) || v[k] < 1 || v[k] > 4096) throw ConfigError("--dims: expected positive integers");
        f[k] = static_cast<int>(v[k]);
    }
    Dims d{f[0], f[1], f[2], f[3], f[4], f[5]};
    d.validate();
    return d;
}

int cmd_generate(const std::string& prior, const std::string& config_path, const std::string& out) {
    PipelineConfig config = load_config(config_path);
    if (!out.empty()) config.out_dir = out;
    const RunReport report = extend3d::extend3d(prior, config);
    for (const auto& s : report.stages) std::printf("%-18s %.3f s\n", s.name.c_str(), s.seconds);
    for (const auto& path : report.outputs) std::printf("wrote %s\n", path.c_str());
    return 0;
}

int cmd_voxelize(const std::string& cloud_path, const std::string& dims_text, const std::string& box_text,
                 const std::string& out) {
    const Dims dims = parse_dims(dims_text);
    const PointCloud cloud = read_ply(cloud_path);
    NormalizationBox box;
    if (box_text.empty()) {
        box = auto_normalization_box(cloud.points);
    } else {
        const auto v = parse_numbers(box_text, 6, "--box");
        box = {{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
        box.validate();
    }
    const VoxelizeResult r = voxelize(cloud.points, box, dims.occ_extent());
    write_xlt(out, to_tensor(r.grid));
    std::printf("%zu points -> %zu occupied voxels (%zu clamped) -> %s\n", cloud.points.size(), r.grid.count(),
                r.clamped, out.c_str());
    return 0;
}

int cmd_inspect(const std::string& path) {
    const Tensor t = read_xlt(path);
    std::printf("shape [");
    for (std::size_t k = 0; k < t.shape.size(); ++k) std::printf(k ? ", %u" : "%u", t.shape[k]);
    std::printf("]\nelements %zu\n", t.data.size());
    if (t.data.empty()) return 0;
    double lo = t.data[0], hi = t.data[0], sum = 0.0;
    std::size_t nonzero = 0, nonfinite = 0;
    for (float v : t.data) {
        if (!std::isfinite(v)) {
            ++nonfinite;
            continue;
        }
        lo = std::min<double>(lo, v);
        hi = std::max<double>(hi, v);
        sum += v;
        nonzero += v != 0.0f;
    }
    std::printf("min %.9g\nmax %.9g\nmean %.9g\nnonzero %zu\nnonfinite %zu\n", lo, hi,
                sum / static_cast<double>(t.data.size() - nonfinite), nonzero, nonfinite);
    return 0;
}

int cmd_serve(const std::string& target, const std::string& slat_target, int ratio, const std::string& listen,
              double sigma, int workers) {
    std::optional<DenseLatent> dense;
    std::optional<SparseLatent> sparse;
    if (!target.empty()) dense = dense_from_tensor(read_xlt(target));
    if (!slat_target.empty()) {
        if (!dense) throw ConfigError("serve-oracle: --slat-target needs --target to fix the lattice extent");
        const Extent e = dense->extent();
        sparse = sparse_from_tensor(read_xlt(slat_target), {e.x * ratio, e.y * ratio, e.z * ratio});
    }
    if (!dense && !sparse) throw ConfigError("serve-oracle: no target given");
    OracleField oracle(std::move(dense), std::move(sparse), sigma);
    Server server(oracle, listen, workers);
    std::printf("serving oracle on %s\n", server.start().c_str());
    std::fflush(stdout);
    server.wait();
    return 0;
}

int cmd_oracle_demo(std::uint64_t seed, int workers, const std::string& out) {
    namespace fs = std::filesystem;
    PipelineConfig config;
    const SyntheticScene scene = occluded_cavity_scene(config.dims, seed);
    fs::create_directories(out);
    const std::string prior = (fs::path(out) / "prior.spr").string();
    save_scene_prior(prior, scene.prior);
    config.provider.kind = "oracle";
    config.provider.ss_target = (fs::path(out) / "ss_target.xlt").string();
    config.provider.slat_target = (fs::path(out) / "slat_target.xlt").string();
    write_xlt(config.provider.ss_target, to_tensor(scene.ss_target));
    write_xlt(config.provider.slat_target, to_tensor(scene.slat_target));
    config.normalization_box = scene.box;
    config.seed = seed;
    config.workers = workers;
    config.out_dir = out;
    const RunReport report = extend3d::extend3d(prior, config);

    const OccupancyGrid got = occupancy_from_tensor(read_xlt((fs::path(out) / "occupancy.xlt").string()));
    std::size_t inter = 0, uni = 0;
    const auto a = got.cells(), b = scene.target.cells();
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] && b[i];
        uni += a[i] || b[i];
    }
    std::printf("IoU vs target %.6f (%zu / %zu)\n", uni ? static_cast<double>(inter) / uni : 1.0, inter, uni);
    for (const auto& s : report.stages) std::printf("%-18s %.3f s\n", s.name.c_str(), s.seconds);
    for (const auto& path : report.outputs) std::printf("wrote %s\n", path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Training-free wide-scene 3D generation toolkit"};
    app.require_subcommand(1);

    std::string prior, config_path, out;
    auto* gen = app.add_subcommand("generate", "Run the pipeline on a scene prior");
    gen->add_option("prior", prior, "SPR1 scene prior")->required();
    gen->add_option("--config", config_path, "JSON pipeline config")->required();
    gen->add_option("--out", out, "Output directory (overrides out_dir)");

    std::string cloud, dims_text, box_text, vox_out;
    auto* vox = app.add_subcommand("voxelize", "Voxelize an ASCII PLY point cloud");
    vox->add_option("cloud", cloud, "PLY file")->required();
    vox->add_option("--dims", dims_text, "a,b,N,M,C,l")->required();
    vox->add_option("--box", box_text, "minx,miny,minz,maxx,maxy,maxz (default: auto)");
    vox->add_option("--out", vox_out, "Output XLT1 occupancy grid")->required();

    std::string xlt;
    auto* insp = app.add_subcommand("inspect", "Print the shape and statistics of an XLT1 file");
    insp->add_option("file", xlt, "XLT1 tensor")->required();

    std::string target, slat_target, listen;
    double sigma = 0.0;
    int serve_workers = 4, ratio = 4;
    auto* serve = app.add_subcommand("serve-oracle", "Serve an oracle field over XFP1");
    serve->add_option("--target", target, "Dense SS target (XLT1)");
    serve->add_option("--slat-target", slat_target, "Sparse SLat target (XLT1)");
    serve->add_option("--ratio", ratio, "M / N, used to size the SLat lattice")->check(CLI::PositiveNumber);
    serve->add_option("--listen", listen, "tcp://host:port or unix:/path")->required();
    serve->add_option("--sigma", sigma, "Target spread of the oracle")->check(CLI::NonNegativeNumber);
    serve->add_option("--workers", serve_workers, "Evaluation threads")->check(CLI::PositiveNumber);

    std::uint64_t seed = 0;
    int workers = 1;
    std::string demo_out = "oracle-demo";
    auto* demo = app.add_subcommand("oracle-demo", "End-to-end run on the synthetic occluded-cavity scene");
    demo->add_option("--seed", seed, "Scene and sampling seed");
    demo->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    demo->add_option("--out", demo_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    try {
        if (*gen) return cmd_generate(prior, config_path, out);
        if (*vox) return cmd_voxelize(cloud, dims_text, box_text, vox_out);
        if (*insp) return cmd_inspect(xlt);
        if (*serve) return cmd_serve(target, slat_target, ratio, listen, sigma, serve_workers);
        if (*demo) return cmd_oracle_demo(seed, workers, demo_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitConfig;
}
