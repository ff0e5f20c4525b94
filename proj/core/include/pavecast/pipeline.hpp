#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pavecast/baselines.hpp"
#include "pavecast/data.hpp"
#include "pavecast/metrics.hpp"
#include "pavecast/transformer.hpp"
#include "pavecast/windows.hpp"

namespace pavecast {

// Raised when input data fails validation (maps to exit code 1).
struct ValidationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised by run_pipeline with the failing stage's name prefixed.
struct StageError : std::runtime_error {
    std::string stage;
    StageError(std::string stage_, const std::string& what)
        : std::runtime_error("[" + stage_ + "] " + what), stage(std::move(stage_)) {}
};

inline const std::vector<std::string> kAllModels = {
    "transformer", "linear", "ridge", "lasso", "knn", "tree", "forest", "gbt", "mlp"};

std::string model_display_name(const std::string& key);

struct RunConfig {
    std::optional<std::string> data_path;     // exclusive with synthetic
    std::optional<SyntheticConfig> synthetic; // used when data_path is empty
    std::vector<Task> tasks{Task::skid, Task::macrotexture};
    int window_length = 4;
    bool allow_padding = false;
    double split_ratio = 0.8;
    SplitMode split_mode = SplitMode::sections;
    std::vector<std::string> models = kAllModels;
    std::string out_dir = "out";
    std::uint64_t seed = 7;
    bool emit_svg = false;

    // Model hyperparameters (defaults per the toolkit conventions).
    TransformerConfig transformer;
    double ridge_lambda = 1.0;
    double lasso_lambda = 1.0;
    int knn_k = 5;
    TreeConfig tree{8, 2};
    ForestConfig forest;
    GbtConfig gbt;
    MlpConfig mlp;

    void check() const;  // throws ConfigError
};

struct TaskResult {
    Task task;
    EvaluationReport report;
    std::vector<WindowSample> train_windows;  // unscaled
    std::vector<WindowSample> test_windows;   // unscaled
};

struct RunArtifacts {
    std::vector<TaskResult> results;
    std::string manifest_json;
    std::vector<std::string> written_files;  // relative to out_dir
};

// Full pipeline: load/generate -> validate -> build_series -> make_windows
// -> split -> scale -> train every selected model -> compare per task.
// Writes reports, checkpoints, prediction logs, training logs, and a run
// manifest under cfg.out_dir. Fully deterministic for a fixed (cfg, seed).
RunArtifacts run_pipeline(const RunConfig& cfg);

std::string task_name(Task task);

// FNV-1a 64 digest of a byte string, rendered as 16 hex characters.
std::string digest_hex(const std::string& bytes);

}  // namespace pavecast
