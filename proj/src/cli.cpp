#include "soh/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "csv_util.hpp"
#include "soh/errors.hpp"
#include "soh/estimator.hpp"
#include "soh/eval.hpp"
#include "soh/features.hpp"
#include "soh/ingest.hpp"
#include "soh/simulate.hpp"

namespace soh::cli {

namespace {

constexpr const char* kUsage =
    "usage: sindy-soh <simulate|ingest|features|correlate|train|estimate|evaluate|bench>"
    " [options]\n       sindy-soh <subcommand> --help for details\n";

// A --data argument may be a single CSV or a directory of them;
// ground_truth.csv is the simulator's answer key, never input data.
std::vector<std::filesystem::path> collect_csvs(const std::filesystem::path& data) {
    if (!std::filesystem::exists(data)) throw IoFailure("no such path: " + data.string());
    if (!std::filesystem::is_directory(data)) return {data};
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(data)) {
        if (!entry.is_regular_file()) continue;
        const std::filesystem::path& path = entry.path();
        if (path.extension() != ".csv" || path.filename() == "ground_truth.csv") continue;
        files.push_back(path);
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw EmptyFile("no cycle CSVs under " + data.string());
    return files;
}

std::vector<ChargeCycle> parse_all(const std::vector<std::filesystem::path>& files,
                                   const ProtocolConfig& protocol) {
    std::vector<ChargeCycle> cycles;
    for (const std::filesystem::path& file : files) {
        std::vector<ChargeCycle> parsed = parse_cycles(file, protocol);
        std::move(parsed.begin(), parsed.end(), std::back_inserter(cycles));
    }
    return cycles;
}

void report_skipped(const std::vector<SkippedCycle>& skipped) {
    for (const SkippedCycle& s : skipped)
        std::cerr << "skipped " << s.cell_id << " cycle " << s.cycle_index << ": " << s.reason
                  << "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoFailure("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << file.rdbuf();
    return buffer.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoFailure("cannot write " + path.string());
    file << text;
    if (!file) throw IoFailure("failed writing " + path.string());
}

// --- subcommand option blocks -------------------------------------------

struct SimulateArgs {
    SimConfig config;
    std::string out;
};

struct DataArgs {
    std::string data;
    std::string out;
    SmoothingConfig smoothing;
};

struct CorrelateArgs {
    std::string data;
    std::string out;
    SmoothingConfig smoothing;
    double gate = 0.8;
};

struct TrainArgs {
    std::string data;
    std::string config_file;
    std::string out = "model.sindy-soh.json";
    PipelineConfig config;
};

struct EstimateArgs {
    std::string model;
    std::string data;
    std::string out = "estimates.csv";
};

struct EvaluateArgs {
    std::string estimates;
    std::string truth;
    std::string name = "model";
    std::string json_out;
};

struct BenchArgs {
    int train_rows = 500;
    int test_rows = 100;
    std::uint64_t seed = 1;
    double noise_sd = 0.01;
    int repetitions = 5;
    double threshold = 0.1;
    int degree = 3;
    double alpha = 1e-6;
    double lengthscale = 2.0;
    double kernel_noise = 0.1;
    std::string json_out;
};

void run_simulate(const SimulateArgs& args) {
    const Fleet fleet = simulate_fleet(args.config);
    export_fleet(fleet.cycles, fleet.truth, args.out);
    std::size_t samples = 0;
    for (const ChargeCycle& cycle : fleet.cycles) samples += cycle.samples.size();
    std::cout << "wrote " << args.config.num_cells << " cells x " << args.config.cycles_per_cell
              << " cycles (" << samples << " samples) to " << args.out << "\n";
}

void run_ingest(const DataArgs& args) {
    const std::vector<ChargeCycle> cycles =
        parse_all(collect_csvs(args.data), ProtocolConfig{});
    const std::vector<CapacityLabel> labels =
        label_cycles(cycles, ProtocolConfig{}, args.smoothing.sigma, args.smoothing.radius);
    write_labels_csv(labels, args.out);
    std::cout << "labeled " << labels.size() << " of " << cycles.size() << " cycles into "
              << args.out << "\n";
}

void run_features(const DataArgs& args) {
    const std::vector<ChargeCycle> cycles =
        parse_all(collect_csvs(args.data), ProtocolConfig{});
    const DatasetBuild build = build_dataset(cycles, ProtocolConfig{}, args.smoothing);
    report_skipped(build.skipped);
    write_features_csv(build.dataset, args.out);
    std::cout << "extracted " << build.dataset.rows() << " feature rows into " << args.out
              << " (" << build.skipped.size() << " cycles skipped)\n";
}

void run_correlate(const CorrelateArgs& args) {
    const std::vector<ChargeCycle> cycles =
        parse_all(collect_csvs(args.data), ProtocolConfig{});
    const DatasetBuild build = build_dataset(cycles, ProtocolConfig{}, args.smoothing);
    report_skipped(build.skipped);
    const CorrelationReport report = correlation_gate(build.dataset, args.gate);
    const std::string json = correlation_report_to_json(report);
    std::cout << json;
    if (!args.out.empty()) write_text_file(args.out, json);
}

void run_train(const TrainArgs& args) {
    const TrainedEstimator estimator = train(collect_csvs(args.data), args.config);
    save_estimator(estimator, args.out);

    std::cout << "selected features:";
    for (const std::string& name : estimator.report.selected) std::cout << ' ' << name;
    std::cout << "\nmodel terms: " << estimator.model.nnz() << " of "
              << estimator.model.library.size() << " (threshold " << args.config.stls.threshold
              << ", " << estimator.model.iterations_used << " iterations)\n";
    char line[128];
    std::snprintf(line, sizeof line, "train metrics: MAE %.4f  RMSE %.4f  MAX %.4f over %d cycles\n",
                  estimator.train_metrics.mae, estimator.train_metrics.rmse,
                  estimator.train_metrics.max_err, estimator.train_metrics.n);
    std::cout << line << "saved " << args.out << "\n";
}

void run_estimate(const EstimateArgs& args) {
    const TrainedEstimator estimator = load_estimator(args.model);
    const EstimateResult result = estimate(estimator, args.data);
    report_skipped(result.skipped);
    write_estimates_csv(result, args.out);
    std::cout << "wrote " << result.estimates.size() << " estimates to " << args.out << " ("
              << result.skipped.size() << " cycles skipped)\n";
}

// Reads an estimates CSV back for evaluation.
std::vector<EstimateRow> load_estimates(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path.string());
    std::vector<EstimateRow> rows;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = detail::strip_cr(line);
        if (text.empty()) continue;
        if (!saw_header) {
            if (text != "cell_id,cycle_index,soh_est_pct")
                throw MalformedRow(line_no, "unexpected estimates header");
            saw_header = true;
            continue;
        }
        const auto fields = detail::split_fields(text);
        if (fields.size() != 3)
            throw MalformedRow(line_no, "expected 3 fields, got " + std::to_string(fields.size()));
        const auto cycle = detail::parse_int(fields[1]);
        const auto soh = detail::parse_double(fields[2]);
        if (fields[0].empty() || !cycle || !soh)
            throw MalformedRow(line_no, "unparseable estimate row");
        rows.push_back(EstimateRow{std::string(fields[0]), static_cast<int>(*cycle), *soh});
    }
    if (rows.empty()) throw EmptyFile("no estimate rows in " + path.string());
    return rows;
}

void run_evaluate(const EvaluateArgs& args) {
    const std::vector<EstimateRow> estimates = load_estimates(args.estimates);
    const GroundTruth truth = load_ground_truth(args.truth);

    std::map<std::pair<std::string, int>, double> truth_by_cycle;
    for (const GroundTruthRow& row : truth.rows)
        truth_by_cycle[{row.cell_id, row.cycle_index}] = row.true_soh_pct;

    std::vector<double> predicted, actual;
    for (const EstimateRow& row : estimates) {
        const auto it = truth_by_cycle.find({row.cell_id, row.cycle_index});
        if (it == truth_by_cycle.end()) continue;
        predicted.push_back(row.soh_est_pct);
        actual.push_back(it->second);
    }
    if (predicted.empty())
        throw LengthMismatch("no (cell, cycle) overlap between estimates and ground truth");

    const MetricReport report = metrics(predicted, actual);
    std::cout << format_metric_table({{args.name, report}});
    if (!args.json_out.empty()) {
        nlohmann::json j;
        j[args.name] = {{"mae", report.mae},
                        {"rmse", report.rmse},
                        {"max_err", report.max_err},
                        {"n", report.n}};
        write_text_file(args.json_out, j.dump(2) + "\n");
    }
}

void run_bench(const BenchArgs& args) {
    const LabeledDataset train_set =
        synthetic_regression_dataset(args.train_rows, args.seed, args.noise_sd);
    const LabeledDataset test_set =
        synthetic_regression_dataset(args.test_rows, args.seed + 1, args.noise_sd);

    std::vector<BenchMethod> methods;
    methods.push_back(make_sindy_method(args.threshold, args.degree));
    methods.push_back(make_ridge_method(args.alpha, args.degree));
    methods.push_back(make_kernel_method(args.lengthscale, args.kernel_noise));

    std::vector<TimingReport> timings;
    std::vector<std::pair<std::string, MetricReport>> metric_rows;
    std::vector<double> row(static_cast<std::size_t>(test_set.cols()));
    for (const BenchMethod& method : methods) {
        timings.push_back(bench(method, train_set, test_set, args.repetitions));
        Eigen::VectorXd predicted(test_set.rows());
        for (Eigen::Index r = 0; r < test_set.rows(); ++r) {
            for (Eigen::Index c = 0; c < test_set.cols(); ++c)
                row[static_cast<std::size_t>(c)] = test_set.features(r, c);
            predicted(r) = method.predict(row);
        }
        metric_rows.emplace_back(method.name, metrics(predicted, test_set.labels));
    }

    std::cout << format_metric_table(metric_rows) << "\n" << format_timing_table(timings);
    if (!args.json_out.empty()) {
        nlohmann::json j = nlohmann::json::array();
        for (std::size_t k = 0; k < methods.size(); ++k) {
            nlohmann::json entry;
            entry["method"] = timings[k].method_name;
            entry["train_time_s"] = timings[k].train_time_s;
            entry["test_time_per_sample_ms"] = timings[k].test_time_per_sample_ms;
            entry["nnz"] = timings[k].nnz;
            entry["library_size"] = timings[k].library_size;
            entry["mae"] = metric_rows[k].second.mae;
            entry["rmse"] = metric_rows[k].second.rmse;
            entry["max_err"] = metric_rows[k].second.max_err;
            j.push_back(entry);
        }
        write_text_file(args.json_out, j.dump(2) + "\n");
    }
}

void add_smoothing_flags(CLI::App* sub, SmoothingConfig& smoothing) {
    sub->add_option("--sigma", smoothing.sigma, "capacity smoothing sigma, cycles")
        ->check(CLI::PositiveNumber);
    sub->add_option("--radius", smoothing.radius, "capacity smoothing half-width, cycles")
        ->check(CLI::PositiveNumber);
}

int run_impl(std::vector<std::string> args) {
    CLI::App app{"SOH identification toolkit: sparse polynomial models over CV-phase features"};
    app.name("sindy-soh");
    app.require_subcommand(1);

    SimulateArgs simulate_args;
    CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic aging fleet");
    sim->add_option("--cells", simulate_args.config.num_cells, "number of cells")
        ->check(CLI::PositiveNumber);
    sim->add_option("--cycles", simulate_args.config.cycles_per_cell, "cycles per cell")
        ->check(CLI::Range(2, 1 << 20));
    sim->add_option("--seed", simulate_args.config.seed, "fleet seed");
    sim->add_option("--fade-rate", simulate_args.config.fade_rate, "capacity fraction lost per cycle");
    sim->add_option("--fade-noise-sd", simulate_args.config.fade_noise_sd,
                    "capacity noise, SOH percent");
    sim->add_option("--resistance-growth", simulate_args.config.resistance_growth,
                    "per-cycle CV time-constant growth");
    sim->add_option("--tau0", simulate_args.config.cv_tau0_s, "initial CV time constant, s");
    sim->add_option("--dt", simulate_args.config.sample_dt_s, "sample period, s");
    sim->add_option("--out", simulate_args.out, "output directory")->required();

    DataArgs ingest_args;
    CLI::App* ingest = app.add_subcommand("ingest", "coulomb-count and label charge logs");
    ingest->add_option("--data", ingest_args.data, "cycle CSV file or directory")->required();
    ingest->add_option("--out", ingest_args.out, "labels CSV path")->required();
    add_smoothing_flags(ingest, ingest_args.smoothing);

    DataArgs features_args;
    CLI::App* features = app.add_subcommand("features", "extract CV features per cycle");
    features->add_option("--data", features_args.data, "cycle CSV file or directory")->required();
    features->add_option("--out", features_args.out, "features CSV path")->required();
    add_smoothing_flags(features, features_args.smoothing);

    CorrelateArgs correlate_args;
    CLI::App* correlate = app.add_subcommand("correlate", "rank features against SOH");
    correlate->add_option("--data", correlate_args.data, "cycle CSV file or directory")->required();
    correlate->add_option("--gate", correlate_args.gate, "|rho| selection gate")
        ->check(CLI::Range(0.0, 1.0));
    correlate->add_option("--out", correlate_args.out, "also write the JSON report here");
    add_smoothing_flags(correlate, correlate_args.smoothing);

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "fit a sparse SOH model");
    train_cmd->add_option("--data", train_args.data, "cycle CSV file or directory")->required();
    train_cmd->add_option("--config", train_args.config_file, "pipeline config JSON file");
    train_cmd->add_option("--holdout", train_args.config.holdout, "cell ids to exclude");
    train_cmd->add_option("--out", train_args.out, "estimator output path");
    CLI::Option* opt_threshold =
        train_cmd->add_option("--threshold", train_args.config.stls.threshold, "STLS hard threshold");
    CLI::Option* opt_max_iter =
        train_cmd->add_option("--max-iter", train_args.config.stls.max_iter, "STLS iteration cap");
    CLI::Option* opt_ridge =
        train_cmd->add_option("--ridge-eps", train_args.config.stls.ridge_eps, "normal-equation ridge");
    CLI::Option* opt_degree =
        train_cmd->add_option("--degree", train_args.config.library_degree, "library degree");
    CLI::Option* opt_gate =
        train_cmd->add_option("--gate", train_args.config.correlation_gate, "|rho| selection gate");
    CLI::Option* opt_sigma =
        train_cmd->add_option("--sigma", train_args.config.smoothing.sigma, "capacity smoothing sigma");
    CLI::Option* opt_radius =
        train_cmd->add_option("--radius", train_args.config.smoothing.radius, "smoothing half-width");
    CLI::Option* opt_stamp = train_cmd->add_option("--trained-at", train_args.config.trained_at,
                                                   "timestamp stored in the model (fixed default "
                                                   "keeps builds reproducible)");

    EstimateArgs estimate_args;
    CLI::App* estimate_cmd = app.add_subcommand("estimate", "estimate SOH for a charge log");
    estimate_cmd->add_option("--model", estimate_args.model, "trained estimator file")->required();
    estimate_cmd->add_option("--data", estimate_args.data, "cycle CSV file")->required();
    estimate_cmd->add_option("--out", estimate_args.out, "estimates CSV path");

    EvaluateArgs evaluate_args;
    CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "score estimates against ground truth");
    evaluate_cmd->add_option("--estimates", evaluate_args.estimates, "estimates CSV")->required();
    evaluate_cmd->add_option("--truth", evaluate_args.truth, "ground_truth.csv")->required();
    evaluate_cmd->add_option("--name", evaluate_args.name, "column label for the table");
    evaluate_cmd->add_option("--json", evaluate_args.json_out, "also write metrics JSON here");

    BenchArgs bench_args;
    CLI::App* bench_cmd = app.add_subcommand("bench", "time sparse vs dense vs kernel methods");
    bench_cmd->add_option("--train-rows", bench_args.train_rows, "synthetic training rows")
        ->check(CLI::PositiveNumber);
    bench_cmd->add_option("--test-rows", bench_args.test_rows, "synthetic test rows")
        ->check(CLI::PositiveNumber);
    bench_cmd->add_option("--seed", bench_args.seed, "dataset seed");
    bench_cmd->add_option("--noise", bench_args.noise_sd, "label noise sd");
    bench_cmd->add_option("--repetitions", bench_args.repetitions, "timing repetitions (>= 3)");
    bench_cmd->add_option("--threshold", bench_args.threshold, "STLS hard threshold");
    bench_cmd->add_option("--degree", bench_args.degree, "library degree");
    bench_cmd->add_option("--alpha", bench_args.alpha, "ridge strength");
    bench_cmd->add_option("--lengthscale", bench_args.lengthscale, "kernel lengthscale");
    bench_cmd->add_option("--kernel-noise", bench_args.kernel_noise, "kernel noise sd");
    bench_cmd->add_option("--json", bench_args.json_out, "also write the timing JSON here");

    try {
        std::reverse(args.begin(), args.end());  // CLI11 consumes back to front
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n" << kUsage;
        return kExitUsage;
    }

    try {
        if (sim->parsed()) {
            run_simulate(simulate_args);
        } else if (ingest->parsed()) {
            run_ingest(ingest_args);
        } else if (features->parsed()) {
            run_features(features_args);
        } else if (correlate->parsed()) {
            run_correlate(correlate_args);
        } else if (train_cmd->parsed()) {
            // A config file provides the base; explicit flags override it.
            if (!train_args.config_file.empty()) {
                PipelineConfig base =
                    pipeline_config_from_json(read_text_file(train_args.config_file));
                if (opt_threshold->count() == 0) train_args.config.stls.threshold = base.stls.threshold;
                if (opt_max_iter->count() == 0) train_args.config.stls.max_iter = base.stls.max_iter;
                if (opt_ridge->count() == 0) train_args.config.stls.ridge_eps = base.stls.ridge_eps;
                if (opt_degree->count() == 0) train_args.config.library_degree = base.library_degree;
                if (opt_gate->count() == 0) train_args.config.correlation_gate = base.correlation_gate;
                if (opt_sigma->count() == 0) train_args.config.smoothing.sigma = base.smoothing.sigma;
                if (opt_radius->count() == 0) train_args.config.smoothing.radius = base.smoothing.radius;
                if (opt_stamp->count() == 0) train_args.config.trained_at = base.trained_at;
                if (train_cmd->count("--holdout") == 0) train_args.config.holdout = base.holdout;
                train_args.config.protocol = base.protocol;
            }
            run_train(train_args);
        } else if (estimate_cmd->parsed()) {
            run_estimate(estimate_args);
        } else if (evaluate_cmd->parsed()) {
            run_evaluate(evaluate_args);
        } else if (bench_cmd->parsed()) {
            run_bench(bench_args);
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumericError;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitNumericError;
    }
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    args.reserve(argc > 0 ? static_cast<std::size_t>(argc - 1) : 0);
    for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
    return run_impl(std::move(args));
}

int run(const std::vector<std::string>& args) { return run_impl(args); }

}  // namespace soh::cli
