#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "soh/errors.hpp"
#include "soh/eval.hpp"
#include "soh/features.hpp"
#include "soh/sindy.hpp"
#include "soh/types.hpp"

namespace soh {

struct SmoothingConfig {
    double sigma = 3.0;  // cycles
    int radius = 9;
};

struct StlsConfig {
    double threshold = 0.05;
    int max_iter = 20;
    double ridge_eps = 1e-10;
};

// Everything the training pipeline needs. `trained_at` is part of the
// config so that identical inputs always serialize to identical bytes; the
// CLI can stamp wall-clock time explicitly.
struct PipelineConfig {
    ProtocolConfig protocol;
    SmoothingConfig smoothing;
    int library_degree = 3;
    StlsConfig stls;
    double correlation_gate = 0.8;
    std::vector<std::string> holdout;  // cell ids excluded from training
    std::string trained_at = "1970-01-01T00:00:00Z";
};

std::string pipeline_config_to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const std::string& text);

struct TrainedEstimator {
    SparseModel model;
    CorrelationReport report;
    MetricReport train_metrics;
    PipelineConfig config;
};

struct SkippedCycle {
    std::string cell_id;
    int cycle_index = 0;
    std::string reason;
};

// Assembles the canonical 7-column labeled dataset from parsed cycles:
// per-cell capacity labels (coulomb count + smoothing + SOH) joined with
// CV-segment features. Cycles whose CV phase cannot be extracted are
// reported in `skipped` instead of aborting the batch.
struct DatasetBuild {
    LabeledDataset dataset;
    std::vector<SkippedCycle> skipped;
};
DatasetBuild build_dataset(const std::vector<ChargeCycle>& cycles,
                           const ProtocolConfig& protocol,
                           const SmoothingConfig& smoothing);

// Full training flow over one or more charge-log CSV files: parse, drop
// holdout cells, label, extract features, correlation-gate, standardize,
// fit STLS. Throws InsufficientData when fewer than 3 usable training rows
// remain or the gate selects nothing; propagates stage errors.
TrainedEstimator train(const std::vector<std::filesystem::path>& cycle_files,
                       const PipelineConfig& config);

struct EstimateRow {
    std::string cell_id;
    int cycle_index = 0;
    double soh_est_pct = 0.0;
};

struct EstimateResult {
    std::vector<EstimateRow> estimates;  // ordered by (cell_id, cycle_index)
    std::vector<SkippedCycle> skipped;
};

// Runs the trained model over a charge log. Uses exactly the features the
// train-time gate selected; cycles without a usable CV phase are skipped
// per cycle, not fatally.
EstimateResult estimate(const TrainedEstimator& estimator,
                        const std::filesystem::path& cycle_file);

void write_estimates_csv(const EstimateResult& result, const std::filesystem::path& path);

// Estimator file (`.sindy-soh.json`): schema_version, model, pipeline
// config, correlation report and training metrics. Load->save round-trips
// value-identically. Throws IoFailure, SchemaVersionMismatch.
void save_estimator(const TrainedEstimator& estimator, const std::filesystem::path& path);
TrainedEstimator load_estimator(const std::filesystem::path& path);

}  // namespace soh
