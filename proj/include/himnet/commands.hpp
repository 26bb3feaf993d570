#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "himnet/runconfig.hpp"
#include "himnet/training.hpp"

namespace himnet {

// Command implementations behind the CLI. They throw on failure; the CLI
// entry point maps exception classes to exit codes (1 user error, 2 runtime
// failure).

struct TrainArtifacts {
    std::string checkpoint_path;
    std::string history_path;
    std::string report_path;
    std::string config_echo_path;
    EvalReport test_report;
    double best_val_mae = 0.0;
};

TrainArtifacts cmd_train(const RunConfig& rc, std::ostream& log);

struct EvaluateOptions {
    std::string checkpoint_path;
    std::string data_path;
    DatasetFormat format = DatasetFormat::Auto;
    std::array<double, 3> ratios{0.7, 0.1, 0.2};
    MaskMode mask_mode = MaskMode::Auto;
    std::vector<long> horizons;  // 1-based; empty = all
    long batch_size = 16;
};

EvalReport cmd_evaluate(const EvaluateOptions& opts, std::ostream& log);

struct ExportMetaOptions {
    std::string checkpoint_path;
    std::string what;  // temporal | spatial | st_mixed
    std::string out_dir;
    // st_mixed needs input windows:
    std::string data_path;
    DatasetFormat format = DatasetFormat::Auto;
    std::vector<long> sample_ids;
};

std::vector<std::string> cmd_export_meta(const ExportMetaOptions& opts, std::ostream& log);

struct SyntheticArtifacts {
    std::string data_path;
    std::string meta_path;
    std::string oracle_path;
};

SyntheticArtifacts cmd_generate_synthetic(const RunConfig& rc, std::ostream& log);

struct GradCheckOptions {
    double tolerance = 1e-4;
    std::uint64_t seed = 7;
};

// Returns true when every leaf passes.
bool cmd_grad_check(const GradCheckOptions& opts, std::ostream& log);

void print_report(const EvalReport& report, const std::vector<long>& horizons, std::ostream& os);

}  // namespace himnet
