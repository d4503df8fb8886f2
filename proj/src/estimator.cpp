#include "soh/estimator.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "csv_util.hpp"
#include "soh/ingest.hpp"

namespace soh {

namespace {

constexpr int kEstimatorSchemaVersion = 1;

nlohmann::json require_field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key))
        throw SchemaVersionMismatch(std::string("estimator file missing field '") + key + "'");
    return j.at(key);
}

nlohmann::json protocol_to_json(const ProtocolConfig& p) {
    nlohmann::json j;
    j["nominal_capacity_Ah"] = p.nominal_capacity_Ah;
    j["nominal_voltage_V"] = p.nominal_voltage_V;
    j["cv_setpoint_V"] = p.cv_setpoint_V;
    j["cc_current_A"] = p.cc_current_A;
    j["cv_cutoff_A"] = p.cv_cutoff_A;
    j["cc_voltage_tolerance_V"] = p.cc_voltage_tolerance_V;
    j["cc_current_tolerance_A"] = p.cc_current_tolerance_A;
    return j;
}

ProtocolConfig protocol_from_json(const nlohmann::json& j) {
    ProtocolConfig p;
    p.nominal_capacity_Ah = require_field(j, "nominal_capacity_Ah").get<double>();
    p.nominal_voltage_V = require_field(j, "nominal_voltage_V").get<double>();
    p.cv_setpoint_V = require_field(j, "cv_setpoint_V").get<double>();
    p.cc_current_A = require_field(j, "cc_current_A").get<double>();
    p.cv_cutoff_A = require_field(j, "cv_cutoff_A").get<double>();
    p.cc_voltage_tolerance_V = require_field(j, "cc_voltage_tolerance_V").get<double>();
    p.cc_current_tolerance_A = require_field(j, "cc_current_tolerance_A").get<double>();
    return p;
}

nlohmann::json config_to_json_object(const PipelineConfig& config) {
    nlohmann::json j;
    j["protocol"] = protocol_to_json(config.protocol);
    j["smoothing"] = {{"sigma", config.smoothing.sigma}, {"radius", config.smoothing.radius}};
    j["library_degree"] = config.library_degree;
    j["stls"] = {{"threshold", config.stls.threshold},
                 {"max_iter", config.stls.max_iter},
                 {"ridge_eps", config.stls.ridge_eps}};
    j["correlation_gate"] = config.correlation_gate;
    j["holdout"] = config.holdout;
    j["trained_at"] = config.trained_at;
    return j;
}

PipelineConfig config_from_json_object(const nlohmann::json& j) {
    PipelineConfig config;
    config.protocol = protocol_from_json(require_field(j, "protocol"));
    const nlohmann::json smoothing = require_field(j, "smoothing");
    config.smoothing.sigma = require_field(smoothing, "sigma").get<double>();
    config.smoothing.radius = require_field(smoothing, "radius").get<int>();
    config.library_degree = require_field(j, "library_degree").get<int>();
    const nlohmann::json stls_json = require_field(j, "stls");
    config.stls.threshold = require_field(stls_json, "threshold").get<double>();
    config.stls.max_iter = require_field(stls_json, "max_iter").get<int>();
    config.stls.ridge_eps = require_field(stls_json, "ridge_eps").get<double>();
    config.correlation_gate = require_field(j, "correlation_gate").get<double>();
    config.holdout = require_field(j, "holdout").get<std::vector<std::string>>();
    config.trained_at = require_field(j, "trained_at").get<std::string>();
    if (config.library_degree < 1)
        throw SchemaVersionMismatch("pipeline config needs library_degree >= 1");
    if (config.correlation_gate < 0.0 || config.correlation_gate > 1.0)
        throw SchemaVersionMismatch("pipeline config needs correlation_gate in [0, 1]");
    return config;
}

// Column indices (into the canonical feature order) for the gate-selected
// names.
std::vector<int> selected_indices(const std::vector<std::string>& selected,
                                  const std::vector<std::string>& all_names) {
    std::vector<int> indices;
    indices.reserve(selected.size());
    for (const std::string& name : selected) {
        const auto it = std::find(all_names.begin(), all_names.end(), name);
        if (it == all_names.end())
            throw ShapeMismatch("selected feature '" + name + "' is not a known feature");
        indices.push_back(static_cast<int>(it - all_names.begin()));
    }
    return indices;
}

}  // namespace

std::string pipeline_config_to_json(const PipelineConfig& config) {
    return config_to_json_object(config).dump(2) + "\n";
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaVersionMismatch(std::string("pipeline config is not valid JSON: ") + e.what());
    }
    try {
        return config_from_json_object(j);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaVersionMismatch(std::string("pipeline config field has wrong type: ") +
                                    e.what());
    }
}

DatasetBuild build_dataset(const std::vector<ChargeCycle>& cycles,
                           const ProtocolConfig& protocol,
                           const SmoothingConfig& smoothing) {
    const std::vector<CapacityLabel> labels =
        label_cycles(cycles, protocol, smoothing.sigma, smoothing.radius);
    std::map<std::pair<std::string, int>, double> soh_by_cycle;
    for (const CapacityLabel& label : labels)
        soh_by_cycle[{label.cell_id, label.cycle_index}] = label.soh_pct;

    DatasetBuild build;
    std::vector<FeatureVector> rows;
    std::vector<double> targets;
    for (const ChargeCycle& cycle : cycles) {
        try {
            const CcCvSplit split = split_cc_cv(cycle, protocol);
            const FeatureVector features = extract_features(split.cv, protocol);
            const auto it = soh_by_cycle.find({cycle.cell_id, cycle.cycle_index});
            if (it == soh_by_cycle.end())
                throw DataError("no capacity label for this cycle");
            rows.push_back(features);
            targets.push_back(it->second);
            build.dataset.provenance.push_back(RowOrigin{cycle.cell_id, cycle.cycle_index});
        } catch (const DataError& e) {
            build.skipped.push_back(SkippedCycle{cycle.cell_id, cycle.cycle_index, e.what()});
        }
    }

    build.dataset.features.resize(static_cast<Eigen::Index>(rows.size()), 7);
    build.dataset.labels.resize(static_cast<Eigen::Index>(targets.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::array<double, 7> values = rows[r].to_array();
        for (int c = 0; c < 7; ++c) build.dataset.features(static_cast<Eigen::Index>(r), c) = values[static_cast<std::size_t>(c)];
        build.dataset.labels(static_cast<Eigen::Index>(r)) = targets[r];
    }
    build.dataset.feature_names.assign(kFeatureNames.begin(), kFeatureNames.end());
    return build;
}

TrainedEstimator train(const std::vector<std::filesystem::path>& cycle_files,
                       const PipelineConfig& config) {
    if (cycle_files.empty()) throw InsufficientData("no training files given");

    std::vector<ChargeCycle> cycles;
    for (const std::filesystem::path& file : cycle_files) {
        std::vector<ChargeCycle> parsed = parse_cycles(file, config.protocol);
        for (ChargeCycle& cycle : parsed) {
            if (std::find(config.holdout.begin(), config.holdout.end(), cycle.cell_id) !=
                config.holdout.end())
                continue;  // holdout cells contribute nothing to training
            cycles.push_back(std::move(cycle));
        }
    }
    if (cycles.empty()) throw InsufficientData("all cycles belong to holdout cells");

    DatasetBuild build = build_dataset(cycles, config.protocol, config.smoothing);
    if (build.dataset.rows() < 3)
        throw InsufficientData("training needs at least 3 usable cycles, got " +
                               std::to_string(build.dataset.rows()));

    TrainedEstimator estimator;
    estimator.config = config;
    estimator.report = correlation_gate(build.dataset, config.correlation_gate);
    if (estimator.report.selected.empty())
        throw InsufficientData("correlation gate rejected every feature");

    const std::vector<int> keep =
        selected_indices(estimator.report.selected, build.dataset.feature_names);
    LabeledDataset gated;
    gated.features.resize(build.dataset.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
        gated.features.col(static_cast<Eigen::Index>(c)) = build.dataset.features.col(keep[c]);
    gated.labels = build.dataset.labels;
    gated.provenance = build.dataset.provenance;
    gated.feature_names = estimator.report.selected;

    estimator.model = fit_regression(gated, config.library_degree, config.stls.threshold,
                                     config.stls.max_iter, config.stls.ridge_eps);
    estimator.model.trained_at = config.trained_at;
    estimator.train_metrics = metrics(predict(estimator.model, gated.features), gated.labels);
    return estimator;
}

EstimateResult estimate(const TrainedEstimator& estimator,
                        const std::filesystem::path& cycle_file) {
    const std::vector<ChargeCycle> cycles = parse_cycles(cycle_file, estimator.config.protocol);
    const std::vector<std::string> all_names(kFeatureNames.begin(), kFeatureNames.end());
    const std::vector<int> keep = selected_indices(estimator.model.feature_names, all_names);

    EstimateResult result;
    std::vector<double> row(keep.size());
    for (const ChargeCycle& cycle : cycles) {
        try {
            const CcCvSplit split = split_cc_cv(cycle, estimator.config.protocol);
            const FeatureVector features = extract_features(split.cv, estimator.config.protocol);
            const std::array<double, 7> values = features.to_array();
            for (std::size_t c = 0; c < keep.size(); ++c)
                row[c] = values[static_cast<std::size_t>(keep[c])];
            result.estimates.push_back(
                EstimateRow{cycle.cell_id, cycle.cycle_index, predict(estimator.model, row)});
        } catch (const DataError& e) {
            result.skipped.push_back(SkippedCycle{cycle.cell_id, cycle.cycle_index, e.what()});
        }
    }
    return result;
}

void write_estimates_csv(const EstimateResult& result, const std::filesystem::path& path) {
    std::string out = "cell_id,cycle_index,soh_est_pct\n";
    for (const EstimateRow& row : result.estimates) {
        out += row.cell_id;
        out += ',';
        out += std::to_string(row.cycle_index);
        out += ',';
        detail::append_double(out, row.soh_est_pct);
        out += '\n';
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoFailure("cannot write " + path.string());
    file << out;
    if (!file) throw IoFailure("failed writing " + path.string());
}

void save_estimator(const TrainedEstimator& estimator, const std::filesystem::path& path) {
    nlohmann::json j;
    j["schema_version"] = kEstimatorSchemaVersion;
    j["model"] = nlohmann::json::parse(model_to_json(estimator.model));
    j["pipeline"] = config_to_json_object(estimator.config);
    j["correlation"] = {{"rho", estimator.report.rho}, {"selected", estimator.report.selected}};
    j["train_metrics"] = {{"mae", estimator.train_metrics.mae},
                          {"rmse", estimator.train_metrics.rmse},
                          {"max_err", estimator.train_metrics.max_err},
                          {"n", estimator.train_metrics.n}};

    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoFailure("cannot write " + path.string());
    file << j.dump(2) << "\n";
    if (!file) throw IoFailure("failed writing " + path.string());
}

TrainedEstimator load_estimator(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoFailure("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << file.rdbuf();

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buffer.str());
    } catch (const nlohmann::json::exception& e) {
        throw SchemaVersionMismatch(std::string("estimator file is not valid JSON: ") + e.what());
    }
    try {
        const int version = require_field(j, "schema_version").get<int>();
        if (version != kEstimatorSchemaVersion)
            throw SchemaVersionMismatch("estimator file has schema_version " +
                                        std::to_string(version) + ", this build reads " +
                                        std::to_string(kEstimatorSchemaVersion));
        TrainedEstimator estimator;
        estimator.model = model_from_json(require_field(j, "model").dump());
        estimator.config = config_from_json_object(require_field(j, "pipeline"));
        const nlohmann::json correlation = require_field(j, "correlation");
        estimator.report.rho = require_field(correlation, "rho")
                                   .get<std::vector<std::pair<std::string, double>>>();
        estimator.report.selected =
            require_field(correlation, "selected").get<std::vector<std::string>>();
        const nlohmann::json metrics_json = require_field(j, "train_metrics");
        estimator.train_metrics.mae = require_field(metrics_json, "mae").get<double>();
        estimator.train_metrics.rmse = require_field(metrics_json, "rmse").get<double>();
        estimator.train_metrics.max_err = require_field(metrics_json, "max_err").get<double>();
        estimator.train_metrics.n = require_field(metrics_json, "n").get<int>();
        return estimator;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaVersionMismatch(std::string("estimator file field has wrong type: ") +
                                    e.what());
    }
}

}  // namespace soh
