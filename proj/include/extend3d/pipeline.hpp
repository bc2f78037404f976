#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "extend3d/decode.hpp"
#include "extend3d/flowcore.hpp"
#include "extend3d/optimizer.hpp"
#include "extend3d/priors.hpp"
#include "extend3d/structedit.hpp"

namespace extend3d {

struct ProviderSpec {
    std::string kind = "oracle";  // oracle | remote | zero
    std::string ss_target;        // XLT1 dense SS latent (oracle)
    std::string slat_target;      // XLT1 sparse SLat [count, 3 + l] (oracle)
    double sigma = 0.0;
    std::string endpoint;         // remote
};

struct PipelineConfig {
    Dims dims;
    int d = 4;
    double t_start = 0.8;
    double t_noise = 0.6;
    int n_iter = 2;
    int k = 25;  // schedule length (times per integration)
    double alpha = 5.0;
    AdamParams ss_adam;
    AdamParams slat_adam;
    bool ss_optimize = true;
    bool slat_optimize = true;
    bool optimize_every_round = true;
    bool reset_adam_state = true;
    bool dilated_enabled = true;
    ProviderSpec provider;
    double lambda_l2 = 1.0;
    double lambda_ssim = 1.0;
    std::uint64_t seed = 0;
    int workers = 1;
    std::optional<NormalizationBox> normalization_box;
    std::string out_dir = "out";
    bool trace = false;
    /// Ablation only; not a config-file key.
    bool allow_over_noise = false;

    /// Throws ConfigError on any violated component invariant, or unless d
    /// divides both N and M.
    void validate() const;
    SdeditParams sdedit() const { return {t_start, t_noise, n_iter, allow_over_noise}; }
};

/// Strict JSON: unknown keys, wrong types and invalid values are ConfigErrors.
PipelineConfig parse_config(std::string_view json_text);
PipelineConfig load_config(const std::string& path);
std::string config_to_json(const PipelineConfig& config);

struct TraceRow {
    std::string stage;  // "ss" or "slat"
    int round = 0;
    int step = 0;       // Euler step within the schedule
    int adam_step = 0;
    double t = 0.0;
    double loss = 0.0;
};

struct StageReport {
    std::string name;
    double seconds = 0.0;
    std::vector<double> losses;  // final loss per optimized timestep
};

struct RunReport {
    std::vector<StageReport> stages;
    std::vector<std::size_t> occupied_per_round;
    std::size_t slat_entries = 0;
    std::vector<std::string> outputs;
    std::string error;
};

std::string report_to_json(const RunReport& report);
/// "step,t,loss" header plus one row per Adam evaluation; step is the Euler
/// step within its stage's schedule.
std::string trace_to_csv(const std::vector<TraceRow>& rows);

/// Everything the stages share for one scene.
struct SceneContext {
    const ScenePrior* prior = nullptr;
    NormalizationBox box;
    std::vector<Vec3> points;  // valid prior points
};

SceneContext make_scene_context(const ScenePrior& prior, const PipelineConfig& config);

struct SparseStructureResult {
    std::vector<Coord> coords;
    OccupancyGrid occupancy;
    std::vector<std::size_t> occupied_per_round;
};

SparseStructureResult generate_sparse_structure(const SceneContext& scene, const PipelineConfig& config,
                                                VectorFieldProvider& provider, std::vector<TraceRow>* trace = nullptr);

SparseLatent generate_slat(const std::vector<Coord>& coords, const SceneContext& scene, const PipelineConfig& config,
                           VectorFieldProvider& provider, std::vector<TraceRow>* trace = nullptr);

struct PipelineResult {
    SparseStructureResult structure;
    SparseLatent slat;
    SdfGrid sdf;
    std::string ply;
    RunReport report;
    std::vector<TraceRow> trace;
};

/// In-memory run of both stages plus decoding. Stage failures are rethrown
/// with the stage name prefixed; `partial` (if given) receives the report so far.
PipelineResult run_pipeline(const ScenePrior& prior, const PipelineConfig& config, VectorFieldProvider& provider,
                            RunReport* partial = nullptr);

/// Provider described by config.provider (targets loaded from disk).
std::unique_ptr<VectorFieldProvider> make_provider(const PipelineConfig& config);

/// Loads the prior, runs the pipeline and writes scene.ply, sdf.xlt,
/// occupancy.xlt, slat.xlt, report.json (and trace.csv) into config.out_dir.
/// On failure the partial report is still written before rethrowing.
RunReport extend3d(const std::string& prior_path, const PipelineConfig& config,
                   VectorFieldProvider* provider_override = nullptr);

}  // namespace extend3d
