#include "soh/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "csv_util.hpp"
#include "soh/ingest.hpp"

namespace soh {

SampleStats sample_stats(std::span<const double> series) {
    const std::size_t n = series.size();
    if (n < 3) throw TooShort("statistics need at least 3 samples, got " + std::to_string(n));
    double mean = 0.0;
    for (double x : series) mean += x;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double x : series) ss += (x - mean) * (x - mean);
    return SampleStats{mean, std::sqrt(ss / static_cast<double>(n - 1))};
}

namespace {

// Shared core for the standardized-moment sums. `power` is 3 or 4.
double standardized_moment_sum(std::span<const double> series, int power) {
    const SampleStats stats = sample_stats(series);
    if (!(stats.sigma > 0.0)) throw ZeroVariance("constant series has no defined shape moments");
    double acc = 0.0;
    for (double x : series) {
        const double z = (x - stats.mu) / stats.sigma;
        double zp = z * z * z;
        if (power == 4) zp *= z;
        acc += zp;
    }
    return acc;
}

}  // namespace

double skewness(std::span<const double> series) {
    const double n = static_cast<double>(series.size());
    return standardized_moment_sum(series, 3) / (n - 1.0);
}

double kurtosis(std::span<const double> series) {
    const double n = static_cast<double>(series.size());
    return n / ((n - 1.0) * (n - 2.0)) * standardized_moment_sum(series, 4) - 3.0;
}

FeatureVector extract_features(const CvSegment& segment, const ProtocolConfig& /*config*/) {
    const std::size_t n = segment.samples.size();
    if (n < 3) throw TooShort("CV segment needs at least 3 samples, got " + std::to_string(n));

    std::vector<double> current;
    current.reserve(n);
    for (const Sample& s : segment.samples) current.push_back(s.current_A);

    FeatureVector f;
    const SampleStats stats = sample_stats(current);
    if (!(stats.sigma > 0.0)) throw ZeroVariance("constant CV current");
    f.mu = stats.mu;
    f.sigma = stats.sigma;
    f.skew = skewness(current);
    f.kur = kurtosis(current);
    f.delta_i = current.front() - current.back();
    f.c_cv = coulomb_count(segment.samples);
    f.t_dur = segment.samples.back().time_s - segment.samples.front().time_s;
    return f;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw LengthMismatch("pearson inputs differ: " + std::to_string(x.size()) + " vs " +
                             std::to_string(y.size()));
    const std::size_t n = x.size();
    if (n < 3) throw TooShort("pearson needs at least 3 pairs, got " + std::to_string(n));

    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);

    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = x[k] - mx;
        const double dy = y[k] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw ZeroVariance("pearson input has zero variance");
    // Exactly collinear inputs can land an ulp outside [-1, 1]; clamp so the
    // documented range holds.
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

// A column whose spread is pure floating-point noise (smoothing and CSV
// round trips perturb the last couple of ulps) has no usable correlation;
// treat anything below a 1e-9 relative spread as constant.
bool effectively_constant(const Eigen::VectorXd& values) {
    const double mean = values.mean();
    const double sd = std::sqrt((values.array() - mean).square().sum() /
                                std::max<double>(1.0, static_cast<double>(values.size() - 1)));
    return sd <= 1e-9 * std::max(1.0, std::abs(mean));
}

}  // namespace

CorrelationReport correlation_gate(const LabeledDataset& dataset, double gate) {
    const auto p = dataset.rows();
    if (p < 3) throw TooShort("correlation gate needs at least 3 rows");

    if (effectively_constant(dataset.labels))
        throw ConstantLabel("labels are constant; correlations undefined");

    std::vector<double> y(dataset.labels.data(), dataset.labels.data() + p);
    CorrelationReport report;
    for (Eigen::Index j = 0; j < dataset.cols(); ++j) {
        const Eigen::VectorXd col = dataset.features.col(j);
        const std::string& name = dataset.feature_names[static_cast<std::size_t>(j)];
        double rho = 0.0;  // constant features stay at 0 and are never kept
        const bool flat = effectively_constant(col);
        if (!flat) rho = pearson({col.data(), static_cast<std::size_t>(p)}, y);
        report.rho.emplace_back(name, rho);
        if (!flat && std::abs(rho) >= gate) report.selected.push_back(name);
    }
    return report;
}

std::string correlation_report_to_json(const CorrelationReport& report) {
    nlohmann::json j;
    j["rho"] = nlohmann::json::object();
    for (const auto& [name, rho] : report.rho) j["rho"][name] = rho;
    j["selected"] = report.selected;
    return j.dump(2) + "\n";
}

void write_features_csv(const LabeledDataset& dataset, const std::filesystem::path& path) {
    if (dataset.cols() != 7)
        throw ShapeMismatch("features CSV expects the canonical 7 columns, got " +
                            std::to_string(dataset.cols()));
    std::string out = "cell_id,cycle_index,mu,sigma,skew,kur,delta_i,c_cv,t_dur,soh_pct\n";
    for (Eigen::Index r = 0; r < dataset.rows(); ++r) {
        const RowOrigin& origin = dataset.provenance[static_cast<std::size_t>(r)];
        out += origin.cell_id;
        out += ',';
        out += std::to_string(origin.cycle_index);
        for (Eigen::Index c = 0; c < 7; ++c) {
            out += ',';
            detail::append_double(out, dataset.features(r, c));
        }
        out += ',';
        detail::append_double(out, dataset.labels(r));
        out += '\n';
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoFailure("cannot write " + path.string());
    file << out;
    if (!file) throw IoFailure("failed writing " + path.string());
}

}  // namespace soh
