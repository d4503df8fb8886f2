#include "soh/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>

#include "soh/rng.hpp"

namespace soh {

MetricReport metrics(std::span<const double> predicted, std::span<const double> actual) {
    if (predicted.size() != actual.size())
        throw LengthMismatch("metric inputs differ: " + std::to_string(predicted.size()) +
                             " vs " + std::to_string(actual.size()));
    if (predicted.empty()) throw Empty("metrics need at least one pair");

    MetricReport report;
    report.n = static_cast<int>(predicted.size());
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    for (std::size_t k = 0; k < predicted.size(); ++k) {
        const double e = predicted[k] - actual[k];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        report.max_err = std::max(report.max_err, std::abs(e));
    }
    report.mae = abs_sum / static_cast<double>(report.n);
    report.rmse = std::sqrt(sq_sum / static_cast<double>(report.n));
    return report;
}

MetricReport metrics(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual) {
    return metrics(std::span<const double>(predicted.data(), static_cast<std::size_t>(predicted.size())),
                   std::span<const double>(actual.data(), static_cast<std::size_t>(actual.size())));
}

SparseModel fit_ridge(const LabeledDataset& dataset, double alpha, int degree) {
    if (dataset.rows() < 1) throw InsufficientData("ridge needs at least 1 row");
    if (alpha < 0.0) throw InvalidConfig("ridge alpha must be non-negative");

    SparseModel model;
    model.standardizer = fit_standardizer(dataset.features);
    model.library = build_library(static_cast<int>(dataset.cols()), degree);
    model.threshold = 0.0;  // dense by construction
    model.ridge_eps = alpha;
    if (dataset.feature_names.size() == static_cast<std::size_t>(dataset.cols())) {
        model.feature_names = dataset.feature_names;
    } else {
        for (Eigen::Index i = 0; i < dataset.cols(); ++i)
            model.feature_names.push_back("x" + std::to_string(i + 1));
    }

    const Eigen::MatrixXd design =
        evaluate_library(model.library, apply_standardizer(model.standardizer, dataset.features));
    Eigen::MatrixXd gram = design.transpose() * design;
    gram.diagonal().array() += alpha;
    const Eigen::VectorXd rhs = design.transpose() * dataset.labels;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success)
        throw NumericalFailure("ridge normal equations could not be factorized");
    model.coefficients = ldlt.solve(rhs);
    if (!model.coefficients.allFinite())
        throw NumericalFailure("ridge solve produced non-finite coefficients");
    model.iterations_used = 1;
    return model;
}

namespace {

double squared_distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    return (a - b).squaredNorm();
}

}  // namespace

KernelModel fit_kernel_baseline(const LabeledDataset& dataset, double lengthscale,
                                double noise_sd) {
    if (dataset.rows() < 2) throw InsufficientData("kernel baseline needs at least 2 rows");
    if (!(lengthscale > 0.0)) throw InvalidConfig("lengthscale must be positive");
    if (noise_sd < 0.0) throw InvalidConfig("noise_sd must be non-negative");

    KernelModel model;
    model.lengthscale = lengthscale;
    model.noise_sd = noise_sd;
    model.standardizer = fit_standardizer(dataset.features);
    model.train_features = apply_standardizer(model.standardizer, dataset.features);

    const Eigen::Index p = dataset.rows();
    const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
    Eigen::MatrixXd gram(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        gram(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < p; ++j) {
            const double k = std::exp(
                -squared_distance(model.train_features.row(i), model.train_features.row(j)) * inv);
            gram(i, j) = k;
            gram(j, i) = k;
        }
    }
    gram.diagonal().array() += noise_sd * noise_sd;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success)
        throw NumericalFailure("kernel Gram matrix could not be factorized");
    model.weights = ldlt.solve(dataset.labels);
    if (!model.weights.allFinite())
        throw NumericalFailure("kernel solve produced non-finite weights");
    return model;
}

double kernel_predict(const KernelModel& model, std::span<const double> features) {
    const Eigen::Index m = model.train_features.cols();
    if (static_cast<Eigen::Index>(features.size()) != m)
        throw ShapeMismatch("kernel model expects " + std::to_string(m) + " features, got " +
                            std::to_string(features.size()));
    const double inv = 1.0 / (2.0 * model.lengthscale * model.lengthscale);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < model.train_features.rows(); ++i) {
        double d2 = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            const std::size_t uj = static_cast<std::size_t>(j);
            const double z =
                (features[uj] - model.standardizer.means[uj]) / model.standardizer.scales[uj];
            const double diff = z - model.train_features(i, j);
            d2 += diff * diff;
        }
        acc += model.weights(i) * std::exp(-d2 * inv);
    }
    return acc;
}

Eigen::VectorXd kernel_predict(const KernelModel& model, const Eigen::MatrixXd& features) {
    if (features.cols() != model.train_features.cols())
        throw ShapeMismatch("kernel model expects " + std::to_string(model.train_features.cols()) +
                            " features, got " + std::to_string(features.cols()) + " columns");
    Eigen::VectorXd out(features.rows());
    std::vector<double> row(static_cast<std::size_t>(features.cols()));
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        for (Eigen::Index c = 0; c < features.cols(); ++c)
            row[static_cast<std::size_t>(c)] = features(r, c);
        out(r) = kernel_predict(model, row);
    }
    return out;
}

BenchMethod make_sindy_method(double threshold, int degree, int max_iter, double ridge_eps) {
    auto model = std::make_shared<SparseModel>();
    BenchMethod method;
    method.name = "sindy";
    method.fit = [=](const LabeledDataset& data) {
        *model = fit_regression(data, degree, threshold, max_iter, ridge_eps);
    };
    method.predict = [=](std::span<const double> x) { return predict(*model, x); };
    method.sparsity = [=]() { return std::pair<int, int>{model->nnz(), model->library.size()}; };
    return method;
}

BenchMethod make_ridge_method(double alpha, int degree) {
    auto model = std::make_shared<SparseModel>();
    BenchMethod method;
    method.name = "ridge";
    method.fit = [=](const LabeledDataset& data) { *model = fit_ridge(data, alpha, degree); };
    method.predict = [=](std::span<const double> x) { return predict(*model, x); };
    method.sparsity = [=]() { return std::pair<int, int>{model->nnz(), model->library.size()}; };
    return method;
}

BenchMethod make_kernel_method(double lengthscale, double noise_sd) {
    auto model = std::make_shared<KernelModel>();
    BenchMethod method;
    method.name = "kernel";
    method.fit = [=](const LabeledDataset& data) {
        *model = fit_kernel_baseline(data, lengthscale, noise_sd);
    };
    method.predict = [=](std::span<const double> x) { return kernel_predict(*model, x); };
    method.sparsity = [=]() {
        return std::pair<int, int>{static_cast<int>(model->weights.size()),
                                   static_cast<int>(model->weights.size())};
    };
    return method;
}

namespace {

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

TimingReport bench(const BenchMethod& method, const LabeledDataset& train,
                   const LabeledDataset& test, int repetitions) {
    if (repetitions < 3) throw InvalidConfig("bench needs at least 3 repetitions");
    if (train.rows() < 1 || test.rows() < 1) throw Empty("bench needs non-empty datasets");

    // Materialize test rows up front so timing covers only predict calls.
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(test.rows()));
    for (Eigen::Index r = 0; r < test.rows(); ++r) {
        rows[static_cast<std::size_t>(r)].resize(static_cast<std::size_t>(test.cols()));
        for (Eigen::Index c = 0; c < test.cols(); ++c)
            rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = test.features(r, c);
    }

    using clock = std::chrono::steady_clock;
    double sink = 0.0;

    // Warm-up pass (caches, allocator), discarded.
    method.fit(train);
    for (const auto& row : rows) sink += method.predict(row);

    std::vector<double> fit_times, predict_times;
    for (int rep = 0; rep < repetitions; ++rep) {
        const auto t0 = clock::now();
        method.fit(train);
        const auto t1 = clock::now();
        for (const auto& row : rows) sink += method.predict(row);
        const auto t2 = clock::now();
        fit_times.push_back(std::chrono::duration<double>(t1 - t0).count());
        predict_times.push_back(std::chrono::duration<double>(t2 - t1).count());
    }
    if (!std::isfinite(sink)) throw NumericalFailure("benchmark predictions were non-finite");

    TimingReport report;
    report.method_name = method.name;
    report.train_time_s = median(fit_times);
    report.test_time_per_sample_ms =
        median(predict_times) / static_cast<double>(test.rows()) * 1000.0;
    const auto [nnz, library_size] = method.sparsity();
    report.nnz = nnz;
    report.library_size = library_size;
    return report;
}

LabeledDataset synthetic_regression_dataset(int rows, std::uint64_t seed, double noise_sd) {
    if (rows < 1) throw InvalidConfig("synthetic dataset needs at least 1 row");
    if (noise_sd < 0.0) throw InvalidConfig("noise_sd must be non-negative");

    Rng rng(seed);
    LabeledDataset dataset;
    dataset.features.resize(rows, 7);
    dataset.labels.resize(rows);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < 7; ++c) dataset.features(r, c) = rng.normal();
        const double z1 = dataset.features(r, 0);
        const double z2 = dataset.features(r, 1);
        const double z3 = dataset.features(r, 2);
        dataset.labels(r) =
            90.0 + 1.5 * z1 + 0.3 * z2 * z2 - 1.0 * z3 * z3 * z3 + noise_sd * rng.normal();
        dataset.provenance.push_back(RowOrigin{"synthetic", r});
    }
    for (int c = 1; c <= 7; ++c) dataset.feature_names.push_back("z" + std::to_string(c));
    return dataset;
}

std::string format_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
    std::string out;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-8s", "Metric");
    out += buf;
    for (const auto& [name, report] : rows) {
        std::snprintf(buf, sizeof buf, "  %12s", name.c_str());
        out += buf;
    }
    out += '\n';
    const char* metric_names[3] = {"MAE", "MAX", "RMSE"};
    for (int m = 0; m < 3; ++m) {
        std::snprintf(buf, sizeof buf, "%-8s", metric_names[m]);
        out += buf;
        for (const auto& [name, report] : rows) {
            const double value = m == 0 ? report.mae : (m == 1 ? report.max_err : report.rmse);
            std::snprintf(buf, sizeof buf, "  %12.4f", value);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

std::string format_timing_table(const std::vector<TimingReport>& rows) {
    std::string out;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-8s  %12s  %18s  %10s\n", "Method", "Train (s)",
                  "Test (ms/sample)", "Terms");
    out += buf;
    for (const TimingReport& row : rows) {
        std::snprintf(buf, sizeof buf, "%-8s  %12.4f  %18.4f  %6d/%d\n", row.method_name.c_str(),
                      row.train_time_s, row.test_time_per_sample_ms, row.nnz, row.library_size);
        out += buf;
    }
    return out;
}

}  // namespace soh
