#include "extend3d/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>

#include "json.hpp"

#include "extend3d/bridge.hpp"
#include "extend3d/bytes.hpp"
#include "extend3d/tensor_io.hpp"

namespace extend3d {

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kSsStream = 1;
constexpr std::uint64_t kDilatedStream = 2;
constexpr std::uint64_t kSlatStream = 3;

// Typed, strict reader over one JSON object.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ConfigError("");
            } else if constexpr (std::is_integral_v<T>) {
                if (!it->is_number_integer()) throw ConfigError("");
                const auto wide = it->get<std::int64_t>();
                if (wide < std::numeric_limits<T>::min() || wide > std::numeric_limits<T>::max()) {
                    throw ConfigError("");
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!it->is_number()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!it->is_string()) throw ConfigError("");
            }
            out = it->get<T>();
        } catch (const std::exception&) {
            throw ConfigError(where_ + "." + key + ": wrong type");
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError(where_ + ": unknown key '" + item.key() + "'");
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

void read_adam(const json& j, const std::string& where, AdamParams& p) {
    ObjectReader r(j, where);
    r.get("lr", p.lr);
    r.get("beta1", p.beta1);
    r.get("beta2", p.beta2);
    r.get("eps", p.eps);
    r.get("steps", p.steps);
    r.finish();
}

json adam_json(const AdamParams& p) {
    return {{"lr", p.lr}, {"beta1", p.beta1}, {"beta2", p.beta2}, {"eps", p.eps}, {"steps", p.steps}};
}

Vec3 read_vec3(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [x, y, z]");
    Vec3 v;
    double* out[3] = {&v.x, &v.y, &v.z};
    for (std::size_t k = 0; k < 3; ++k) {
        if (!j[k].is_number()) throw ConfigError(where + ": expected numbers");
        *out[k] = j[k].get<double>();
    }
    return v;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

[[noreturn]] void rethrow_in_stage(const std::string& stage) {
    try {
        throw;
    } catch (const ConfigError& e) {
        throw ConfigError(stage + ": " + e.what());
    } catch (const DivergenceError& e) {
        throw DivergenceError(stage + ": " + e.what(), e.step());
    } catch (const std::exception& e) {
        throw Error(stage + ": " + e.what());
    }
}

void record(std::vector<TraceRow>* trace, const char* stage, int round, int step, double t,
            const std::vector<double>& losses) {
    if (!trace) return;
    for (std::size_t s = 0; s < losses.size(); ++s) {
        trace->push_back({stage, round, step, static_cast<int>(s), t, losses[s]});
    }
}

}  // namespace

void PipelineConfig::validate() const {
    dims.validate();
    if (d < 1 || dims.N % d != 0 || dims.M % d != 0) throw ConfigError("config: d must divide both N and M");
    sdedit().validate();
    if (k < 2) throw ConfigError("config: k must be >= 2");
    if (!std::isfinite(alpha) || alpha < 0.0) throw ConfigError("config: alpha must be finite and >= 0");
    ss_adam.validate();
    slat_adam.validate();
    if (!(lambda_l2 >= 0.0) || !(lambda_ssim >= 0.0)) throw ConfigError("config: objective weights must be >= 0");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    if (provider.kind != "oracle" && provider.kind != "remote" && provider.kind != "zero") {
        throw ConfigError("config: provider.kind must be oracle, remote or zero");
    }
    if (!std::isfinite(provider.sigma) || provider.sigma < 0.0) throw ConfigError("config: provider.sigma must be >= 0");
    if (normalization_box) normalization_box->validate();
}

PipelineConfig parse_config(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    PipelineConfig c;
    ObjectReader r(j, "config");
    if (const json* dims = r.child("dims")) {
        ObjectReader dr(*dims, "config.dims");
        dr.get("a", c.dims.a);
        dr.get("b", c.dims.b);
        dr.get("N", c.dims.N);
        dr.get("M", c.dims.M);
        dr.get("C", c.dims.C);
        dr.get("l", c.dims.l);
        dr.finish();
    }
    r.get("d", c.d);
    r.get("t_start", c.t_start);
    r.get("t_noise", c.t_noise);
    r.get("n_iter", c.n_iter);
    r.get("k", c.k);
    r.get("alpha", c.alpha);
    if (const json* a = r.child("ss_adam")) read_adam(*a, "config.ss_adam", c.ss_adam);
    if (const json* a = r.child("slat_adam")) read_adam(*a, "config.slat_adam", c.slat_adam);
    r.get("ss_optimize", c.ss_optimize);
    r.get("slat_optimize", c.slat_optimize);
    r.get("optimize_every_round", c.optimize_every_round);
    r.get("reset_adam_state", c.reset_adam_state);
    r.get("dilated_enabled", c.dilated_enabled);
    if (const json* p = r.child("provider")) {
        ObjectReader pr(*p, "config.provider");
        pr.get("kind", c.provider.kind);
        pr.get("ss_target", c.provider.ss_target);
        pr.get("slat_target", c.provider.slat_target);
        pr.get("sigma", c.provider.sigma);
        pr.get("endpoint", c.provider.endpoint);
        pr.finish();
    }
    r.get("lambda_l2", c.lambda_l2);
    r.get("lambda_ssim", c.lambda_ssim);
    if (const json* s = r.child("seed")) {
        if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<std::int64_t>() >= 0)) {
            throw ConfigError("config.seed: expected a non-negative integer");
        }
        c.seed = s->get<std::uint64_t>();
    }
    r.get("workers", c.workers);
    if (const json* b = r.child("normalization_box"); b && !b->is_null()) {
        ObjectReader br(*b, "config.normalization_box");
        const json* lo = br.child("min");
        const json* hi = br.child("max");
        br.finish();
        if (!lo || !hi) throw ConfigError("config.normalization_box: needs min and max");
        c.normalization_box = NormalizationBox{read_vec3(*lo, "config.normalization_box.min"),
                                               read_vec3(*hi, "config.normalization_box.max")};
    }
    r.get("out_dir", c.out_dir);
    r.get("trace", c.trace);
    r.finish();
    c.validate();
    return c;
}

PipelineConfig load_config(const std::string& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return parse_config({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

std::string config_to_json(const PipelineConfig& c) {
    json j;
    j["dims"] = {{"a", c.dims.a}, {"b", c.dims.b}, {"N", c.dims.N}, {"M", c.dims.M}, {"C", c.dims.C}, {"l", c.dims.l}};
    j["d"] = c.d;
    j["t_start"] = c.t_start;
    j["t_noise"] = c.t_noise;
    j["n_iter"] = c.n_iter;
    j["k"] = c.k;
    j["alpha"] = c.alpha;
    j["ss_adam"] = adam_json(c.ss_adam);
    j["slat_adam"] = adam_json(c.slat_adam);
    j["ss_optimize"] = c.ss_optimize;
    j["slat_optimize"] = c.slat_optimize;
    j["optimize_every_round"] = c.optimize_every_round;
    j["reset_adam_state"] = c.reset_adam_state;
    j["dilated_enabled"] = c.dilated_enabled;
    j["provider"] = {{"kind", c.provider.kind},
                     {"ss_target", c.provider.ss_target},
                     {"slat_target", c.provider.slat_target},
                     {"sigma", c.provider.sigma},
                     {"endpoint", c.provider.endpoint}};
    j["lambda_l2"] = c.lambda_l2;
    j["lambda_ssim"] = c.lambda_ssim;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    if (c.normalization_box) {
        const auto& b = *c.normalization_box;
        j["normalization_box"] = {{"min", {b.min.x, b.min.y, b.min.z}}, {"max", {b.max.x, b.max.y, b.max.z}}};
    } else {
        j["normalization_box"] = nullptr;
    }
    j["out_dir"] = c.out_dir;
    j["trace"] = c.trace;
    return j.dump(2) + "\n";
}

std::string report_to_json(const RunReport& report) {
    json j;
    j["stages"] = json::array();
    for (const auto& s : report.stages) {
        j["stages"].push_back({{"name", s.name}, {"seconds", s.seconds}, {"losses", s.losses}});
    }
    j["occupied_per_round"] = report.occupied_per_round;
    j["slat_entries"] = report.slat_entries;
    j["outputs"] = report.outputs;
    if (!report.error.empty()) j["error"] = report.error;
    return j.dump(2) + "\n";
}

std::string trace_to_csv(const std::vector<TraceRow>& rows) {
    std::string out = "step,t,loss\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", r.step, r.t, r.loss);
        out += buf;
    }
    return out;
}

SceneContext make_scene_context(const ScenePrior& prior, const PipelineConfig& config) {
    prior.validate();
    SceneContext scene;
    scene.prior = &prior;
    scene.points = prior.valid_points();
    scene.box = config.normalization_box ? *config.normalization_box : auto_normalization_box(scene.points);
    return scene;
}

SparseStructureResult generate_sparse_structure(const SceneContext& scene, const PipelineConfig& config,
                                                VectorFieldProvider& provider, std::vector<TraceRow>* trace) {
    config.validate();
    const Dims& dims = config.dims;
    const Extent occ = dims.occ_extent();
    const OccupancyGrid initial = voxelize(scene.points, scene.box, occ).grid;
    const std::vector<Coord> prior_voxels = voxel_coords(scene.points, scene.box, occ);

    const ToyCodec codec(dims);
    const PatchGrid grid = make_patch_grid(dims, config.d, dims.N);
    const WindowConditions conds = condition_windows(*scene.prior, scene.box, grid);
    const FieldContext ctx{&grid, conds.per_window, &conds.global, &provider, Stage::sparse_structure,
                           config.workers};
    const Schedule schedule = Schedule::uniform(config.t_start, config.k);
    const std::uint64_t dilated_seed = derive_seed(config.seed, kDilatedStream);

    int round = 0;
    const DenseFieldFn field = [&](const DenseLatent& z, double t, int step) {
        if (!config.dilated_enabled) return extended_field(z, t, ctx);
        const std::uint64_t s = derive_seed(dilated_seed, (static_cast<std::uint64_t>(round) << 32) | static_cast<std::uint32_t>(step));
        return mixed_field(z, t, ctx, dilated_partition(dims.a, dims.b, dims.N, s), config.alpha);
    };
    const auto hook_for_round = [&](int n) -> DenseHook {
        round = n;
        if (!config.ss_optimize || prior_voxels.empty()) return {};
        if (!config.optimize_every_round && n != config.n_iter - 1) return {};
        auto state = std::make_shared<OptimState>();
        return [&, state, n](const DenseLatent& z, double t, DenseLatent raw, int step) {
            const SsLoss loss(z, t, prior_voxels, codec);
            if (config.reset_adam_state) *state = OptimState();
            const OptimizeResult res = optimize_vector(to_doubles(raw.values()), loss, config.ss_adam, state.get());
            record(trace, "ss", n, step, t, res.trace);
            assign_floats(raw.values(), res.v);
            return raw;
        };
    };

    IterativeSdeditResult r = iterative_sdedit(initial, codec, config.sdedit(), schedule, field, hook_for_round,
                                               derive_seed(config.seed, kSsStream));
    return {std::move(r.coords), std::move(r.occupancy), std::move(r.occupied_per_round)};
}

SparseLatent generate_slat(const std::vector<Coord>& coords, const SceneContext& scene, const PipelineConfig& config,
                           VectorFieldProvider& provider, std::vector<TraceRow>* trace) {
    config.validate();
    if (coords.empty()) throw Error("generate_slat: the sparse structure is empty");
    const Dims& dims = config.dims;
    const PatchGrid grid = make_patch_grid(dims, config.d, dims.M);
    const WindowConditions conds = condition_windows(*scene.prior, scene.box, grid);
    const FieldContext ctx{&grid, conds.per_window, &conds.global, &provider, Stage::structured_latent,
                           config.workers};
    const Schedule schedule = Schedule::uniform(1.0, config.k);

    const FieldFn<SparseLatent> field = [&](const SparseLatent& z, double t, int) { return extended_field(z, t, ctx); };
    StepHook<SparseLatent> hook;
    Image target;
    auto state = std::make_shared<OptimState>();
    if (config.slat_optimize) {
        target = top_view_target(*scene.prior, scene.box, dims.occ_extent());
        hook = [&, state](const SparseLatent& z, double t, SparseLatent raw, int step) {
            const SlatObjective objective(z, t, target, {config.lambda_l2, config.lambda_ssim});
            if (config.reset_adam_state) *state = OptimState();
            const OptimizeResult res = optimize_vector(to_doubles(raw.values()), objective, config.slat_adam, state.get());
            record(trace, "slat", 0, step, t, res.trace);
            assign_floats(raw.values(), res.v);
            return raw;
        };
    }
    SparseLatent z = init_sparse_noise(coords, dims, derive_seed(config.seed, kSlatStream));
    return euler_integrate<SparseLatent>(std::move(z), schedule, field, hook);
}

PipelineResult run_pipeline(const ScenePrior& prior, const PipelineConfig& config, VectorFieldProvider& provider,
                            RunReport* partial) {
    PipelineResult out;
    auto publish = [&] {
        if (partial) *partial = out.report;
    };
    auto stage = [&](const char* name, std::string_view tag, int last_adam_step, auto&& body) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body();
        } catch (const std::exception& e) {
            out.report.error = std::string(name) + ": " + e.what();
            publish();
            rethrow_in_stage(name);
        }
        StageReport s{name, seconds_since(t0), {}};
        for (const auto& row : out.trace)
            if (row.stage == tag && row.adam_step == last_adam_step) s.losses.push_back(row.loss);
        out.report.stages.push_back(std::move(s));
        publish();
    };

    config.validate();
    const SceneContext scene = make_scene_context(prior, config);
    stage("sparse_structure", "ss", config.ss_adam.steps, [&] {
        out.structure = generate_sparse_structure(scene, config, provider, &out.trace);
        out.report.occupied_per_round = out.structure.occupied_per_round;
    });
    stage("structured_latent", "slat", config.slat_adam.steps, [&] {
        out.slat = generate_slat(out.structure.coords, scene, config, provider, &out.trace);
        out.report.slat_entries = out.slat.count();
    });
    stage("decode", "", -1, [&] {
        const PatchGrid grid = make_patch_grid(config.dims, config.d, config.dims.M);
        out.sdf = decode_merged_sdf(out.slat, grid, config.workers);
        out.ply = export_ply(out.slat, config.dims.M, true);
    });
    return out;
}

std::unique_ptr<VectorFieldProvider> make_provider(const PipelineConfig& config) {
    const ProviderSpec& p = config.provider;
    if (p.kind == "zero") return std::make_unique<ZeroField>();
    if (p.kind == "remote") {
        if (p.endpoint.empty()) throw ConfigError("config.provider: remote provider needs an endpoint");
        return std::make_unique<RemoteProvider>(p.endpoint);
    }
    if (p.kind != "oracle") throw ConfigError("config.provider: unknown kind '" + p.kind + "'");
    if (p.ss_target.empty() || p.slat_target.empty()) {
        throw ConfigError("config.provider: oracle needs ss_target and slat_target");
    }
    const Dims& dims = config.dims;
    DenseLatent ss = dense_from_tensor(read_xlt(p.ss_target));
    if (ss.extent() != dims.ss_extent() || ss.channels() != dims.C) {
        throw ConfigError("config.provider: ss_target shape does not match dims");
    }
    SparseLatent slat = sparse_from_tensor(read_xlt(p.slat_target), dims.occ_extent());
    if (slat.width() != dims.l) throw ConfigError("config.provider: slat_target width does not match dims.l");
    return std::make_unique<OracleField>(std::move(ss), std::move(slat), p.sigma);
}

RunReport extend3d(const std::string& prior_path, const PipelineConfig& config, VectorFieldProvider* provider_override) {
    config.validate();
    namespace fs = std::filesystem;
    const fs::path dir(config.out_dir);
    fs::create_directories(dir);
    const std::string report_path = (dir / "report.json").string();
    auto write_report = [&](const RunReport& r) {
        const std::string text = report_to_json(r);
        write_file_bytes(report_path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
    };

    RunReport partial;
    try {
        const ScenePrior prior = load_scene_prior(prior_path);
        std::unique_ptr<VectorFieldProvider> owned;
        VectorFieldProvider* provider = provider_override;
        if (!provider) {
            owned = make_provider(config);
            provider = owned.get();
        }
        PipelineResult res = run_pipeline(prior, config, *provider, &partial);

        auto put = [&](const std::string& name, std::span<const std::uint8_t> bytes) {
            const std::string path = (dir / name).string();
            write_file_bytes(path, bytes);
            res.report.outputs.push_back(path);
        };
        put("scene.ply", {reinterpret_cast<const std::uint8_t*>(res.ply.data()), res.ply.size()});
        put("sdf.xlt", encode_xlt(to_tensor(res.sdf)));
        put("occupancy.xlt", encode_xlt(to_tensor(res.structure.occupancy)));
        put("slat.xlt", encode_xlt(to_tensor(res.slat)));
        if (config.trace) {
            const std::string csv = trace_to_csv(res.trace);
            put("trace.csv", {reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()});
        }
        res.report.outputs.push_back(report_path);
        write_report(res.report);
        return res.report;
    } catch (const std::exception& e) {
        if (partial.error.empty()) partial.error = e.what();
        write_report(partial);
        throw;
    }
}

}  // namespace extend3d
