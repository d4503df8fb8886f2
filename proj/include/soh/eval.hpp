#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "soh/errors.hpp"
#include "soh/sindy.hpp"
#include "soh/types.hpp"

namespace soh {

// Error metrics in SOH percentage points. mae <= rmse <= max_err.
struct MetricReport {
    double mae = 0.0;
    double rmse = 0.0;
    double max_err = 0.0;
    int n = 0;
};

// Throws LengthMismatch, Empty.
MetricReport metrics(std::span<const double> predicted, std::span<const double> actual);
MetricReport metrics(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual);

// Dense linear baseline: ridge regression over the same polynomial library
// (every coefficient penalized, none thresholded). Feature standardization
// matches the sparse path. Throws NumericalFailure.
SparseModel fit_ridge(const LabeledDataset& dataset, double alpha, int degree = 3);

// Squared-exponential kernel ridge regressor. Stores every training row, so
// prediction cost grows linearly with the training size.
struct KernelModel {
    Eigen::MatrixXd train_features;  // standardized, p x m
    Eigen::VectorXd weights;         // p
    double lengthscale = 1.0;
    double noise_sd = 0.0;
    Standardizer standardizer;
};

// Throws NumericalFailure when the Gram factorization breaks down.
KernelModel fit_kernel_baseline(const LabeledDataset& dataset, double lengthscale,
                                double noise_sd);

double kernel_predict(const KernelModel& model, std::span<const double> features);
Eigen::VectorXd kernel_predict(const KernelModel& model, const Eigen::MatrixXd& features);

// A method under benchmark: fit mutates captured state, predict evaluates a
// single row, sparsity reports (nnz, library size) after fit.
struct BenchMethod {
    std::string name;
    std::function<void(const LabeledDataset&)> fit;
    std::function<double(std::span<const double>)> predict;
    std::function<std::pair<int, int>()> sparsity;  // nnz, library size
};

BenchMethod make_sindy_method(double threshold, int degree, int max_iter = 20,
                              double ridge_eps = 1e-10);
BenchMethod make_ridge_method(double alpha, int degree);
BenchMethod make_kernel_method(double lengthscale, double noise_sd);

struct TimingReport {
    std::string method_name;
    double train_time_s = 0.0;
    double test_time_per_sample_ms = 0.0;
    int nnz = 0;
    int library_size = 0;
};

// Median-of-repetitions wall-clock timing with one discarded warm-up run.
// Inputs are not mutated. Requires repetitions >= 3 (InvalidConfig).
TimingReport bench(const BenchMethod& method, const LabeledDataset& train,
                   const LabeledDataset& test, int repetitions);

// Synthetic regression rows for benchmarks and solver tests: seven standard
// normal features and SOH = 90 + 1.5 z1 + 0.3 z2^2 - 1.0 z3^3 + noise.
LabeledDataset synthetic_regression_dataset(int rows, std::uint64_t seed,
                                            double noise_sd = 0.01);

// Aligned text tables in the report layout: metric rows MAE/MAX/RMSE and
// timing rows, one column per method.
std::string format_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows);
std::string format_timing_table(const std::vector<TimingReport>& rows);

}  // namespace soh
