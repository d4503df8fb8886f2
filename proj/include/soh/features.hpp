#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "soh/errors.hpp"
#include "soh/types.hpp"

namespace soh {

struct SampleStats {
    double mu = 0.0;
    double sigma = 0.0;  // sample standard deviation, (n-1) divisor
};

// Mean and sample standard deviation. Throws TooShort for n < 3.
SampleStats sample_stats(std::span<const double> series);

// Skew = 1/(n-1) * sum(((x_i - mu)/sigma)^3).
// Note the 1/(n-1) normalization; it is part of the model contract and
// intentionally differs from the textbook estimator.
// Throws TooShort, ZeroVariance.
double skewness(std::span<const double> series);

// Kur = n/((n-1)(n-2)) * sum(((x_i - mu)/sigma)^4) - 3  (excess form).
// Same caveat as skewness: the prefactor is the model contract.
// Throws TooShort, ZeroVariance.
double kurtosis(std::span<const double> series);

// The seven CV-segment features: current distribution stats plus current
// drop (first minus last), CV charge and CV duration.
// Throws TooShort (< 3 samples), ZeroVariance (constant current).
FeatureVector extract_features(const CvSegment& segment, const ProtocolConfig& config);

// Pearson product-moment correlation. Throws LengthMismatch, TooShort
// (n < 3) and ZeroVariance.
double pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationReport {
    // Feature name -> correlation with SOH, in canonical feature order.
    // Constant features carry rho = 0 and are never selected.
    std::vector<std::pair<std::string, double>> rho;
    std::vector<std::string> selected;
};

// Correlates every feature column against the SOH labels and keeps those
// with |rho| >= gate, preserving canonical feature order.
// Throws ConstantLabel if the labels have zero variance, TooShort for
// fewer than 3 rows.
CorrelationReport correlation_gate(const LabeledDataset& dataset, double gate = 0.8);

// JSON rendering of the report: {"rho": {...}, "selected": [...]}.
std::string correlation_report_to_json(const CorrelationReport& report);

// Writes rows as
// `cell_id,cycle_index,mu,sigma,skew,kur,delta_i,c_cv,t_dur,soh_pct`.
// Expects a dataset with the canonical seven feature columns.
void write_features_csv(const LabeledDataset& dataset, const std::filesystem::path& path);

}  // namespace soh
