#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "soh/errors.hpp"
#include "soh/types.hpp"

namespace soh {

// Polynomial candidate library: every monomial exponent tuple over
// `num_vars` variables with total degree <= `max_degree`, in graded
// lexicographic order (degree first, then earlier variables carry the
// higher exponents), constant term first. Term count is C(m + d, d).
struct CandidateLibrary {
    int num_vars = 0;
    int max_degree = 0;
    std::vector<std::vector<int>> terms;

    int size() const { return static_cast<int>(terms.size()); }
};

CandidateLibrary build_library(int num_vars, int max_degree);

// Human-readable monomial name, e.g. "1", "mu", "mu^2*t_dur".
std::string term_name(const std::vector<int>& exponents,
                      const std::vector<std::string>& variable_names);

// Evaluates the library on p feature snapshots, producing the p x K design
// matrix whose column j is the monomial j of each row.
// Throws ShapeMismatch if the column count differs from library.num_vars.
Eigen::MatrixXd evaluate_library(const CandidateLibrary& library,
                                 const Eigen::MatrixXd& features);

// Per-feature affine normalization applied before library evaluation.
// means/scales have one entry per model variable.
struct Standardizer {
    std::vector<double> means;
    std::vector<double> scales;

    static Standardizer identity(int num_vars);
};

// Column means and sample standard deviations ((n-1) divisor) of a feature
// matrix. Zero-variance columns get scale 1 so they standardize to plain 0.
Standardizer fit_standardizer(const Eigen::MatrixXd& features);

// (features - means) / scales, column-wise. Throws ShapeMismatch.
Eigen::MatrixXd apply_standardizer(const Standardizer& standardizer,
                                   const Eigen::MatrixXd& features);

// Sparse polynomial regression model. Every nonzero coefficient has
// magnitude >= threshold once fitting converged. Immutable after fit;
// safe to share across threads.
struct SparseModel {
    CandidateLibrary library;
    Eigen::VectorXd coefficients;
    double threshold = 0.0;
    double ridge_eps = 0.0;
    Standardizer standardizer;
    std::vector<std::string> feature_names;
    std::string trained_at = "1970-01-01T00:00:00Z";
    int iterations_used = 0;

    int nnz() const;
};

struct StlsResult {
    Eigen::VectorXd coefficients;
    int iterations_used = 0;
};

// Sequential thresholded least squares: alternately solve least squares on
// the active columns (normal equations stabilized with ridge_eps, QR
// fallback) and deactivate coefficients below `threshold`, until the active
// set is stable or max_iter is reached. Deactivated columns stay zero.
//
// Throws NoActiveTerms when thresholding removes every column,
// NumericalFailure when the solve breaks down even with stabilization.
StlsResult stls(const Eigen::MatrixXd& design, const Eigen::VectorXd& targets,
                double threshold, int max_iter = 20, double ridge_eps = 1e-10);

// Forward differences (x_{k+1} - x_k)/dt, with a backward difference in the
// last row so the output shape matches the input. Uniform sampling assumed.
// Throws TooFewSnapshots for fewer than 2 rows.
Eigen::MatrixXd finite_difference(const Eigen::MatrixXd& states, double dt);

// Continuous-time identification: finite-difference derivatives regressed
// per state dimension onto a shared polynomial design matrix. Returns one
// model per dimension (coefficients are in raw state units; the stored
// standardizer is the identity). A dimension whose thresholding eliminates
// every term yields the all-zero model instead of an error — a constant
// state legitimately has that derivative.
std::vector<SparseModel> fit_dynamics(const Eigen::MatrixXd& states, double dt,
                                      int library_degree, double threshold,
                                      int max_iter = 20, double ridge_eps = 1e-10);

// Static label regression: z-score the dataset's features (statistics
// fitted on the data and stored in the model), evaluate the polynomial
// library, run STLS against the labels.
SparseModel fit_regression(const LabeledDataset& dataset, int library_degree,
                           double threshold, int max_iter = 20, double ridge_eps = 1e-10);

// Model evaluation: standardize, evaluate the library, dot with the
// coefficients. The single-vector path works term by term and performs no
// heap allocation. Throws ShapeMismatch.
double predict(const SparseModel& model, std::span<const double> features);
Eigen::VectorXd predict(const SparseModel& model, const Eigen::MatrixXd& features);

// Model file schema: num_vars, max_degree, terms, coefficients, threshold,
// ridge_eps, standardizer {means, scales}, feature_names, trained_at.
// Load->save round-trips value-identically.
// Throws SchemaVersionMismatch on missing/invalid fields, IoFailure on I/O.
std::string model_to_json(const SparseModel& model);
SparseModel model_from_json(const std::string& text);
void save_model(const SparseModel& model, const std::filesystem::path& path);
SparseModel load_model(const std::filesystem::path& path);

}  // namespace soh
