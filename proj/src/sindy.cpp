#include "soh/sindy.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace soh {

namespace {

// x^e by sequential multiplication; exact for e = 0, cheap for the small
// exponents a degree-3 library produces.
double ipow(double base, int exponent) {
    double r = 1.0;
    for (int k = 0; k < exponent; ++k) r *= base;
    return r;
}

void enumerate_degree(int var, int num_vars, int remaining, std::vector<int>& current,
                      std::vector<std::vector<int>>& out) {
    if (var == num_vars - 1) {
        current[static_cast<std::size_t>(var)] = remaining;
        out.push_back(current);
        return;
    }
    // Earlier variables take the higher exponents first, giving the graded
    // lexicographic order 1, x1, x2, x1^2, x1*x2, x2^2, ...
    for (int e = remaining; e >= 0; --e) {
        current[static_cast<std::size_t>(var)] = e;
        enumerate_degree(var + 1, num_vars, remaining - e, current, out);
    }
    current[static_cast<std::size_t>(var)] = 0;
}

}  // namespace

CandidateLibrary build_library(int num_vars, int max_degree) {
    if (num_vars < 1) throw InvalidConfig("library needs at least 1 variable");
    if (max_degree < 0) throw InvalidConfig("library degree must be non-negative");

    CandidateLibrary library;
    library.num_vars = num_vars;
    library.max_degree = max_degree;
    std::vector<int> current(static_cast<std::size_t>(num_vars), 0);
    for (int degree = 0; degree <= max_degree; ++degree)
        enumerate_degree(0, num_vars, degree, current, library.terms);
    return library;
}

std::string term_name(const std::vector<int>& exponents,
                      const std::vector<std::string>& variable_names) {
    if (exponents.size() != variable_names.size())
        throw ShapeMismatch("term has " + std::to_string(exponents.size()) + " exponents but " +
                            std::to_string(variable_names.size()) + " names given");
    std::string name;
    for (std::size_t i = 0; i < exponents.size(); ++i) {
        if (exponents[i] == 0) continue;
        if (!name.empty()) name += '*';
        name += variable_names[i];
        if (exponents[i] > 1) {
            name += '^';
            name += std::to_string(exponents[i]);
        }
    }
    return name.empty() ? "1" : name;
}

Eigen::MatrixXd evaluate_library(const CandidateLibrary& library,
                                 const Eigen::MatrixXd& features) {
    if (features.cols() != library.num_vars)
        throw ShapeMismatch("library over " + std::to_string(library.num_vars) +
                            " variables given " + std::to_string(features.cols()) + " columns");
    Eigen::MatrixXd design(features.rows(), library.size());
    for (int j = 0; j < library.size(); ++j) {
        const std::vector<int>& term = library.terms[static_cast<std::size_t>(j)];
        for (Eigen::Index r = 0; r < features.rows(); ++r) {
            double prod = 1.0;
            for (int i = 0; i < library.num_vars; ++i)
                prod *= ipow(features(r, i), term[static_cast<std::size_t>(i)]);
            design(r, j) = prod;
        }
    }
    return design;
}

Standardizer Standardizer::identity(int num_vars) {
    Standardizer s;
    s.means.assign(static_cast<std::size_t>(num_vars), 0.0);
    s.scales.assign(static_cast<std::size_t>(num_vars), 1.0);
    return s;
}

Standardizer fit_standardizer(const Eigen::MatrixXd& features) {
    const Eigen::Index p = features.rows();
    Standardizer s;
    s.means.resize(static_cast<std::size_t>(features.cols()));
    s.scales.resize(static_cast<std::size_t>(features.cols()));
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
        const double mean = features.col(j).mean();
        double scale = 1.0;
        if (p > 1) {
            const double var =
                (features.col(j).array() - mean).square().sum() / static_cast<double>(p - 1);
            if (var > 0.0) scale = std::sqrt(var);
        }
        s.means[static_cast<std::size_t>(j)] = mean;
        s.scales[static_cast<std::size_t>(j)] = scale;
    }
    return s;
}

Eigen::MatrixXd apply_standardizer(const Standardizer& standardizer,
                                   const Eigen::MatrixXd& features) {
    if (static_cast<std::size_t>(features.cols()) != standardizer.means.size())
        throw ShapeMismatch("standardizer arity " + std::to_string(standardizer.means.size()) +
                            " vs " + std::to_string(features.cols()) + " columns");
    Eigen::MatrixXd out = features;
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        const std::size_t uj = static_cast<std::size_t>(j);
        out.col(j) = (out.col(j).array() - standardizer.means[uj]) / standardizer.scales[uj];
    }
    return out;
}

int SparseModel::nnz() const {
    int count = 0;
    for (Eigen::Index k = 0; k < coefficients.size(); ++k)
        if (coefficients(k) != 0.0) ++count;
    return count;
}

namespace {

// Least squares restricted to the active columns. Normal equations with a
// ridge_eps diagonal first (fast, and adequate once features are
// standardized), column-pivoted QR on failure.
Eigen::VectorXd active_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& targets,
                                     const std::vector<int>& active, double ridge_eps) {
    const auto k = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd sub(design.rows(), k);
    for (Eigen::Index j = 0; j < k; ++j)
        sub.col(j) = design.col(active[static_cast<std::size_t>(j)]);

    Eigen::MatrixXd gram = sub.transpose() * sub;
    gram.diagonal().array() += ridge_eps;
    const Eigen::VectorXd rhs = sub.transpose() * targets;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() == Eigen::Success) {
        Eigen::VectorXd sol = ldlt.solve(rhs);
        if (sol.allFinite()) return sol;
    }
    Eigen::VectorXd sol = sub.colPivHouseholderQr().solve(targets);
    if (!sol.allFinite())
        throw NumericalFailure("least-squares solve produced non-finite coefficients");
    return sol;
}

}  // namespace

StlsResult stls(const Eigen::MatrixXd& design, const Eigen::VectorXd& targets,
                double threshold, int max_iter, double ridge_eps) {
    if (design.rows() != targets.size())
        throw ShapeMismatch("design has " + std::to_string(design.rows()) + " rows, targets " +
                            std::to_string(targets.size()));
    if (design.rows() < 1 || design.cols() < 1)
        throw InvalidConfig("stls needs a non-empty design matrix");
    if (threshold < 0.0) throw InvalidConfig("stls threshold must be non-negative");
    if (max_iter < 1) throw InvalidConfig("stls needs max_iter >= 1");

    std::vector<int> active(static_cast<std::size_t>(design.cols()));
    for (std::size_t j = 0; j < active.size(); ++j) active[j] = static_cast<int>(j);

    StlsResult result;
    result.coefficients = Eigen::VectorXd::Zero(design.cols());
    for (int iter = 0; iter < max_iter; ++iter) {
        const Eigen::VectorXd sol = active_least_squares(design, targets, active, ridge_eps);
        result.coefficients.setZero();
        std::vector<int> survivors;
        survivors.reserve(active.size());
        for (std::size_t j = 0; j < active.size(); ++j) {
            if (std::abs(sol(static_cast<Eigen::Index>(j))) >= threshold) {
                result.coefficients(active[j]) = sol(static_cast<Eigen::Index>(j));
                survivors.push_back(active[j]);
            }
        }
        result.iterations_used = iter + 1;
        if (survivors.empty())
            throw NoActiveTerms("threshold " + std::to_string(threshold) +
                                " eliminated every candidate term");
        if (survivors.size() == active.size()) return result;  // fixed point
        active = std::move(survivors);
    }
    // max_iter exhausted: keep the magnitude guarantee by dropping any
    // still-subthreshold coefficients without a refit.
    for (Eigen::Index j = 0; j < result.coefficients.size(); ++j)
        if (std::abs(result.coefficients(j)) < threshold) result.coefficients(j) = 0.0;
    if (result.coefficients.isZero())
        throw NoActiveTerms("threshold eliminated every candidate term");
    return result;
}

Eigen::MatrixXd finite_difference(const Eigen::MatrixXd& states, double dt) {
    if (states.rows() < 2)
        throw TooFewSnapshots("finite differences need at least 2 snapshots, got " +
                              std::to_string(states.rows()));
    if (!(dt > 0.0)) throw InvalidConfig("dt must be positive");

    const Eigen::Index p = states.rows();
    Eigen::MatrixXd derivative(p, states.cols());
    derivative.topRows(p - 1) = (states.bottomRows(p - 1) - states.topRows(p - 1)) / dt;
    derivative.row(p - 1) = (states.row(p - 1) - states.row(p - 2)) / dt;
    return derivative;
}

std::vector<SparseModel> fit_dynamics(const Eigen::MatrixXd& states, double dt,
                                      int library_degree, double threshold,
                                      int max_iter, double ridge_eps) {
    const Eigen::MatrixXd derivative = finite_difference(states, dt);
    const int m = static_cast<int>(states.cols());
    const CandidateLibrary library = build_library(m, library_degree);
    const Eigen::MatrixXd design = evaluate_library(library, states);

    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) names.push_back("x" + std::to_string(i + 1));

    std::vector<SparseModel> models;
    models.reserve(static_cast<std::size_t>(m));
    for (int dim = 0; dim < m; ++dim) {
        SparseModel model;
        model.library = library;
        model.threshold = threshold;
        model.ridge_eps = ridge_eps;
        model.standardizer = Standardizer::identity(m);
        model.feature_names = names;
        try {
            StlsResult fit = stls(design, derivative.col(dim), threshold, max_iter, ridge_eps);
            model.coefficients = std::move(fit.coefficients);
            model.iterations_used = fit.iterations_used;
        } catch (const NoActiveTerms&) {
            model.coefficients = Eigen::VectorXd::Zero(library.size());
        }
        models.push_back(std::move(model));
    }
    return models;
}

SparseModel fit_regression(const LabeledDataset& dataset, int library_degree,
                           double threshold, int max_iter, double ridge_eps) {
    if (dataset.rows() < 1) throw InsufficientData("regression needs at least 1 row");
    if (dataset.labels.size() != dataset.rows())
        throw ShapeMismatch("label count differs from feature rows");

    SparseModel model;
    model.standardizer = fit_standardizer(dataset.features);
    model.library = build_library(static_cast<int>(dataset.cols()), library_degree);
    model.threshold = threshold;
    model.ridge_eps = ridge_eps;
    if (dataset.feature_names.size() == static_cast<std::size_t>(dataset.cols())) {
        model.feature_names = dataset.feature_names;
    } else {
        for (Eigen::Index i = 0; i < dataset.cols(); ++i)
            model.feature_names.push_back("x" + std::to_string(i + 1));
    }

    const Eigen::MatrixXd design =
        evaluate_library(model.library, apply_standardizer(model.standardizer, dataset.features));
    StlsResult fit = stls(design, dataset.labels, threshold, max_iter, ridge_eps);
    model.coefficients = std::move(fit.coefficients);
    model.iterations_used = fit.iterations_used;
    return model;
}

double predict(const SparseModel& model, std::span<const double> features) {
    const int m = model.library.num_vars;
    if (static_cast<int>(features.size()) != m)
        throw ShapeMismatch("model expects " + std::to_string(m) + " features, got " +
                            std::to_string(features.size()));
    double acc = 0.0;
    for (int j = 0; j < model.library.size(); ++j) {
        const double c = model.coefficients(j);
        if (c == 0.0) continue;  // sparsity is the speed contract
        const std::vector<int>& term = model.library.terms[static_cast<std::size_t>(j)];
        double prod = 1.0;
        for (int i = 0; i < m; ++i) {
            const int e = term[static_cast<std::size_t>(i)];
            if (e == 0) continue;
            const std::size_t ui = static_cast<std::size_t>(i);
            const double z =
                (features[ui] - model.standardizer.means[ui]) / model.standardizer.scales[ui];
            prod *= ipow(z, e);
        }
        acc += c * prod;
    }
    return acc;
}

Eigen::VectorXd predict(const SparseModel& model, const Eigen::MatrixXd& features) {
    if (features.cols() != model.library.num_vars)
        throw ShapeMismatch("model expects " + std::to_string(model.library.num_vars) +
                            " features, got " + std::to_string(features.cols()) + " columns");
    Eigen::VectorXd out(features.rows());
    std::vector<double> row(static_cast<std::size_t>(features.cols()));
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
        for (Eigen::Index c = 0; c < features.cols(); ++c)
            row[static_cast<std::size_t>(c)] = features(r, c);
        out(r) = predict(model, row);
    }
    return out;
}

namespace {

nlohmann::json require_field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key))
        throw SchemaVersionMismatch(std::string("model file missing field '") + key + "'");
    return j.at(key);
}

}  // namespace

std::string model_to_json(const SparseModel& model) {
    nlohmann::json j;
    j["num_vars"] = model.library.num_vars;
    j["max_degree"] = model.library.max_degree;
    j["terms"] = model.library.terms;
    j["coefficients"] = std::vector<double>(
        model.coefficients.data(), model.coefficients.data() + model.coefficients.size());
    j["threshold"] = model.threshold;
    j["ridge_eps"] = model.ridge_eps;
    j["standardizer"] = {{"means", model.standardizer.means}, {"scales", model.standardizer.scales}};
    j["feature_names"] = model.feature_names;
    j["trained_at"] = model.trained_at;
    return j.dump(2) + "\n";
}

SparseModel model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaVersionMismatch(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        SparseModel model;
        model.library.num_vars = require_field(j, "num_vars").get<int>();
        model.library.max_degree = require_field(j, "max_degree").get<int>();
        model.library.terms = require_field(j, "terms").get<std::vector<std::vector<int>>>();
        const auto coeffs = require_field(j, "coefficients").get<std::vector<double>>();
        model.coefficients =
            Eigen::Map<const Eigen::VectorXd>(coeffs.data(), static_cast<Eigen::Index>(coeffs.size()));
        model.threshold = require_field(j, "threshold").get<double>();
        model.ridge_eps = require_field(j, "ridge_eps").get<double>();
        const nlohmann::json std_json = require_field(j, "standardizer");
        model.standardizer.means = require_field(std_json, "means").get<std::vector<double>>();
        model.standardizer.scales = require_field(std_json, "scales").get<std::vector<double>>();
        model.feature_names = require_field(j, "feature_names").get<std::vector<std::string>>();
        model.trained_at = require_field(j, "trained_at").get<std::string>();

        const std::size_t m = static_cast<std::size_t>(model.library.num_vars);
        if (model.library.num_vars < 1 || model.library.max_degree < 0)
            throw SchemaVersionMismatch("model file has invalid library dimensions");
        for (const std::vector<int>& term : model.library.terms)
            if (term.size() != m)
                throw SchemaVersionMismatch("model file term arity differs from num_vars");
        if (static_cast<std::size_t>(model.coefficients.size()) != model.library.terms.size())
            throw SchemaVersionMismatch("model file coefficient count differs from term count");
        if (model.standardizer.means.size() != m || model.standardizer.scales.size() != m)
            throw SchemaVersionMismatch("model file standardizer arity differs from num_vars");
        if (model.feature_names.size() != m)
            throw SchemaVersionMismatch("model file feature name count differs from num_vars");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaVersionMismatch(std::string("model file field has wrong type: ") + e.what());
    }
}

void save_model(const SparseModel& model, const std::filesystem::path& path) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoFailure("cannot write " + path.string());
    file << model_to_json(model);
    if (!file) throw IoFailure("failed writing " + path.string());
}

SparseModel load_model(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw IoFailure("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << file.rdbuf();
    return model_from_json(buffer.str());
}

}  // namespace soh
