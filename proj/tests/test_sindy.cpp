#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "soh/rng.hpp"
#include "soh/sindy.hpp"
#include "temp_dir.hpp"

using namespace soh;

namespace {

// Independent count of exponent tuples with total degree <= d: odometer
// over [0..d]^m.
int brute_term_count(int m, int d) {
    std::vector<int> e(static_cast<std::size_t>(m), 0);
    int count = 0;
    while (true) {
        int total = 0;
        for (int v : e) total += v;
        if (total <= d) ++count;
        int pos = 0;
        while (pos < m && ++e[static_cast<std::size_t>(pos)] > d) {
            e[static_cast<std::size_t>(pos)] = 0;
            ++pos;
        }
        if (pos == m) break;
    }
    return count;
}

int find_term(const CandidateLibrary& library, const std::vector<int>& exponents) {
    for (int i = 0; i < library.size(); ++i)
        if (library.terms[static_cast<std::size_t>(i)] == exponents) return i;
    FAIL("term not in library");
    return -1;
}

// Standard normal feature matrix.
Eigen::MatrixXd normal_matrix(int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
    return m;
}

// Reference RK4 integration of the damped oscillator
//   dx1/dt = -0.1 x1 + 2 x2,  dx2/dt = -2 x1 - 0.1 x2
// from (2, 0), used as the trajectory oracle for fit_dynamics.
Eigen::MatrixXd rk4_oscillator(double dt, int steps) {
    const auto f = [](const Eigen::Vector2d& x) {
        return Eigen::Vector2d(-0.1 * x(0) + 2.0 * x(1), -2.0 * x(0) - 0.1 * x(1));
    };
    Eigen::MatrixXd out(steps + 1, 2);
    Eigen::Vector2d x(2.0, 0.0);
    out.row(0) = x;
    for (int k = 0; k < steps; ++k) {
        const Eigen::Vector2d k1 = f(x);
        const Eigen::Vector2d k2 = f(x + 0.5 * dt * k1);
        const Eigen::Vector2d k3 = f(x + 0.5 * dt * k2);
        const Eigen::Vector2d k4 = f(x + dt * k3);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.row(k + 1) = x;
    }
    return out;
}

}  // namespace

TEST_CASE("build_library enumerates monomials in graded-lex order") {
    const CandidateLibrary lib1 = build_library(1, 2);
    CHECK(lib1.terms == std::vector<std::vector<int>>{{0}, {1}, {2}});

    const CandidateLibrary lib2 = build_library(2, 2);
    CHECK(lib2.terms ==
          std::vector<std::vector<int>>{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}});

    CHECK(build_library(2, 0).terms == std::vector<std::vector<int>>{{0, 0}});
    CHECK(build_library(7, 3).size() == 120);
    CHECK(build_library(6, 3).size() == 84);
}

TEST_CASE("build_library term count is C(m + d, d)") {
    for (int m = 1; m <= 5; ++m) {
        for (int d = 0; d <= 4; ++d) {
            const int expected = brute_term_count(m, d);
            CHECK(build_library(m, d).size() == expected);
            // Closed form, for good measure.
            double binom = 1.0;
            for (int i = 1; i <= d; ++i) binom = binom * (m + i) / i;
            CHECK(expected == static_cast<int>(std::lround(binom)));
        }
    }
    CHECK_THROWS_AS(build_library(0, 2), InvalidConfig);
    CHECK_THROWS_AS(build_library(3, -1), InvalidConfig);
}

TEST_CASE("term_name renders monomials") {
    const std::vector<std::string> names = {"mu", "sigma", "t_dur"};
    CHECK(term_name({0, 0, 0}, names) == "1");
    CHECK(term_name({1, 0, 0}, names) == "mu");
    CHECK(term_name({2, 0, 1}, names) == "mu^2*t_dur");
    CHECK(term_name({0, 1, 3}, names) == "sigma*t_dur^3");
    CHECK_THROWS_AS(term_name({1, 0}, names), ShapeMismatch);
}

TEST_CASE("evaluate_library on hand-checked rows") {
    const CandidateLibrary lib = build_library(1, 3);
    Eigen::MatrixXd x(1, 1);
    x << 2.0;
    const Eigen::MatrixXd design = evaluate_library(lib, x);
    REQUIRE(design.cols() == 4);
    CHECK(design(0, 0) == 1.0);
    CHECK(design(0, 1) == 2.0);
    CHECK(design(0, 2) == 4.0);
    CHECK(design(0, 3) == 8.0);

    // All-zero input activates only the constant column.
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 1);
    const Eigen::MatrixXd zrow = evaluate_library(lib, zero);
    CHECK(zrow(0, 0) == 1.0);
    CHECK(zrow(0, 1) == 0.0);
    CHECK(zrow(0, 2) == 0.0);
    CHECK(zrow(0, 3) == 0.0);
}

TEST_CASE("evaluate_library matches per-term products") {
    const CandidateLibrary lib = build_library(3, 2);
    const Eigen::MatrixXd features = normal_matrix(5, 3, 17);
    const Eigen::MatrixXd design = evaluate_library(lib, features);
    REQUIRE(design.rows() == 5);
    REQUIRE(design.cols() == lib.size());
    for (int r = 0; r < 5; ++r) {
        for (int t = 0; t < lib.size(); ++t) {
            double product = 1.0;
            for (int v = 0; v < 3; ++v)
                for (int e = 0; e < lib.terms[static_cast<std::size_t>(t)][static_cast<std::size_t>(v)]; ++e)
                    product *= features(r, v);
            CHECK(design(r, t) == doctest::Approx(product).epsilon(1e-12));
        }
    }
    // Degree-one columns are the raw features.
    for (int v = 0; v < 3; ++v) {
        std::vector<int> unit(3, 0);
        unit[static_cast<std::size_t>(v)] = 1;
        CHECK(design.col(find_term(lib, unit)) == features.col(v));
    }

    CHECK_THROWS_AS(evaluate_library(lib, normal_matrix(5, 2, 17)), ShapeMismatch);
}

TEST_CASE("stls zeroes the inactive columns of a single-term target") {
    const CandidateLibrary lib = build_library(2, 1);  // [1, x1, x2]
    const Eigen::MatrixXd features = normal_matrix(50, 2, 23);
    const Eigen::MatrixXd design = evaluate_library(lib, features);
    const Eigen::VectorXd targets = 2.0 * features.col(0);

    const StlsResult result = stls(design, targets, 0.5);
    REQUIRE(result.coefficients.size() == 3);
    CHECK(result.coefficients(0) == 0.0);
    CHECK(result.coefficients(1) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(result.coefficients(2) == 0.0);
}

TEST_CASE("stls with zero threshold is plain least squares") {
    const Eigen::MatrixXd design = evaluate_library(build_library(2, 2), normal_matrix(80, 2, 5));
    Rng rng(6);
    Eigen::VectorXd targets(80);
    for (int r = 0; r < 80; ++r)
        targets(r) = 1.0 + 0.5 * design(r, 1) - 0.25 * design(r, 4) + 0.1 * rng.normal();

    const StlsResult result = stls(design, targets, 0.0);
    const Eigen::VectorXd ls = design.colPivHouseholderQr().solve(targets);
    for (int i = 0; i < design.cols(); ++i)
        CHECK(result.coefficients(i) == doctest::Approx(ls(i)).epsilon(1e-8));
}

TEST_CASE("stls recovers a three-term polynomial from noisy samples") {
    const CandidateLibrary lib = build_library(2, 3);
    const Eigen::MatrixXd features = normal_matrix(200, 2, 41);
    const Eigen::MatrixXd design = evaluate_library(lib, features);
    Rng rng(42);
    Eigen::VectorXd targets(200);
    for (int r = 0; r < 200; ++r) {
        const double x1 = features(r, 0), x2 = features(r, 1);
        targets(r) = 1.5 + 0.3 * x2 * x2 - 1.0 * x1 * x1 * x1 + 0.01 * rng.normal();
    }

    const StlsResult result = stls(design, targets, 0.1);
    const int i_const = find_term(lib, {0, 0});
    const int i_x2sq = find_term(lib, {0, 2});
    const int i_x1cu = find_term(lib, {3, 0});
    CHECK(result.coefficients(i_const) == doctest::Approx(1.5).epsilon(0.05));
    CHECK(result.coefficients(i_x2sq) == doctest::Approx(0.3).epsilon(0.05));
    CHECK(result.coefficients(i_x1cu) == doctest::Approx(-1.0).epsilon(0.05));
    for (int i = 0; i < lib.size(); ++i)
        if (i != i_const && i != i_x2sq && i != i_x1cu) CHECK(result.coefficients(i) == 0.0);
}

TEST_CASE("stls reaches a thresholding fixed point") {
    const CandidateLibrary lib = build_library(2, 3);
    const Eigen::MatrixXd features = normal_matrix(150, 2, 77);
    const Eigen::MatrixXd design = evaluate_library(lib, features);
    Rng rng(78);
    Eigen::VectorXd targets(150);
    for (int r = 0; r < 150; ++r)
        targets(r) = 0.8 * design(r, 1) - 0.4 * design(r, 5) + 0.05 * rng.normal();

    const double threshold = 0.1, ridge = 1e-10;
    const StlsResult result = stls(design, targets, threshold, 20, ridge);

    // Every surviving coefficient clears the threshold...
    std::vector<int> active;
    for (int i = 0; i < design.cols(); ++i) {
        if (result.coefficients(i) != 0.0) {
            CHECK(std::abs(result.coefficients(i)) >= threshold);
            active.push_back(i);
        }
    }
    REQUIRE(!active.empty());

    // ...and one more iteration (ridge-stabilized normal equations on the
    // active set, then threshold) changes nothing.
    Eigen::MatrixXd sub(design.rows(), static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k)
        sub.col(static_cast<Eigen::Index>(k)) = design.col(active[k]);
    Eigen::MatrixXd gram = sub.transpose() * sub;
    gram.diagonal().array() += ridge;
    const Eigen::VectorXd refit = gram.ldlt().solve(sub.transpose() * targets);
    for (std::size_t k = 0; k < active.size(); ++k) {
        CHECK(std::abs(refit(static_cast<Eigen::Index>(k))) >= threshold);
        CHECK(refit(static_cast<Eigen::Index>(k)) ==
              doctest::Approx(result.coefficients(active[k])).epsilon(1e-12));
    }
}

TEST_CASE("stls sparsity is monotone in the threshold") {
    const Eigen::MatrixXd design = evaluate_library(build_library(3, 2), normal_matrix(120, 3, 9));
    Rng rng(10);
    Eigen::VectorXd targets(120);
    for (int r = 0; r < 120; ++r)
        targets(r) = 0.9 * design(r, 1) + 0.3 * design(r, 2) - 0.08 * design(r, 7) +
                     0.02 * rng.normal();

    int previous = design.cols();
    for (const double threshold : {0.0, 0.05, 0.2, 0.5, 2.0}) {
        int nnz = 0;
        try {
            const StlsResult result = stls(design, targets, threshold);
            for (int i = 0; i < design.cols(); ++i)
                if (result.coefficients(i) != 0.0) ++nnz;
        } catch (const NoActiveTerms&) {
            nnz = 0;
        }
        CHECK(nnz <= previous);
        previous = nnz;
    }
}

TEST_CASE("stls error paths") {
    const Eigen::MatrixXd design = evaluate_library(build_library(2, 1), normal_matrix(30, 2, 3));
    Eigen::VectorXd targets = Eigen::VectorXd::Constant(30, 1e-3);
    CHECK_THROWS_AS(stls(design, targets, 10.0), NoActiveTerms);

    Eigen::VectorXd short_targets(10);
    CHECK_THROWS_AS(stls(design, short_targets, 0.1), ShapeMismatch);
    CHECK_THROWS_AS(stls(design, targets, -1.0), InvalidConfig);
    CHECK_THROWS_AS(stls(design, targets, 0.1, 0), InvalidConfig);

    Eigen::MatrixXd poisoned = design;
    poisoned(5, 1) = std::nan("");
    CHECK_THROWS_AS(stls(poisoned, targets, 0.1), NumericalFailure);
}

TEST_CASE("stls with exact derivatives recovers generating coefficients") {
    // Noise-free targets from 1 + 2 x - 3 x^2; recovery should be sharp.
    const CandidateLibrary lib = build_library(1, 3);
    Eigen::MatrixXd x(40, 1);
    for (int r = 0; r < 40; ++r) x(r, 0) = -2.0 + 4.0 * r / 39.0;
    const Eigen::MatrixXd design = evaluate_library(lib, x);
    Eigen::VectorXd targets(40);
    for (int r = 0; r < 40; ++r) targets(r) = 1.0 + 2.0 * x(r, 0) - 3.0 * x(r, 0) * x(r, 0);

    const StlsResult result = stls(design, targets, 0.5);
    CHECK(result.coefficients(0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(result.coefficients(1) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(result.coefficients(2) == doctest::Approx(-3.0).epsilon(1e-8));
    CHECK(result.coefficients(3) == 0.0);
}

TEST_CASE("finite_difference on hand-checked signals") {
    Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(20, 2, 3.5);
    CHECK(finite_difference(constant, 0.1).isZero(0.0));

    // Linear ramp, power-of-two step so the quotient is exact.
    const double dt = 0.25;
    Eigen::MatrixXd ramp(21, 1);
    for (int k = 0; k <= 20; ++k) ramp(k, 0) = 3.0 * k * dt;
    const Eigen::MatrixXd d = finite_difference(ramp, dt);
    for (int k = 0; k <= 20; ++k) CHECK(d(k, 0) == 3.0);

    CHECK_THROWS_AS(finite_difference(Eigen::MatrixXd::Zero(1, 2), 0.1), TooFewSnapshots);
    CHECK_THROWS_AS(finite_difference(ramp, 0.0), InvalidConfig);
}

TEST_CASE("finite_difference of sin tracks cos") {
    const double dt = 1e-3;
    const int n = 1001;
    Eigen::MatrixXd states(n, 1);
    for (int k = 0; k < n; ++k) states(k, 0) = std::sin(k * dt);
    const Eigen::MatrixXd d = finite_difference(states, dt);
    double worst = 0.0;
    for (int k = 0; k < n; ++k) worst = std::max(worst, std::abs(d(k, 0) - std::cos(k * dt)));
    CHECK(worst < 1e-2);

    // Final row falls back to a backward difference.
    CHECK(d(n - 1, 0) == (states(n - 1, 0) - states(n - 2, 0)) / dt);
}

TEST_CASE("fit_dynamics recovers the damped oscillator") {
    const double dt = 1e-3;
    const Eigen::MatrixXd states = rk4_oscillator(dt, 10000);  // 10 s
    const auto models = fit_dynamics(states, dt, 2, 0.05);
    REQUIRE(models.size() == 2);

    const CandidateLibrary& lib = models[0].library;
    const int i_x1 = find_term(lib, {1, 0});
    const int i_x2 = find_term(lib, {0, 1});
    // True Jacobian of the generating system; everything else is spurious
    // and must be thresholded to exact zero.
    const double expected[2][2] = {{-0.1, 2.0}, {-2.0, -0.1}};
    for (std::size_t dim = 0; dim < 2; ++dim) {
        const Eigen::VectorXd& c = models[dim].coefficients;
        CHECK(std::abs(c(i_x1) - expected[dim][0]) < 1e-2);
        CHECK(std::abs(c(i_x2) - expected[dim][1]) < 1e-2);
        for (int i = 0; i < lib.size(); ++i)
            if (i != i_x1 && i != i_x2) CHECK(c(i) == 0.0);
    }
}

TEST_CASE("fit_dynamics on a constant trajectory yields the zero model") {
    Eigen::MatrixXd states = Eigen::MatrixXd::Constant(100, 2, 1.5);
    const auto models = fit_dynamics(states, 0.01, 2, 0.05);
    REQUIRE(models.size() == 2);
    for (const SparseModel& model : models) {
        CHECK(model.nnz() == 0);
        CHECK(model.coefficients.isZero(0.0));
    }
}

TEST_CASE("fit_dynamics identifies simple exponential decay") {
    const double dt = 1e-3;
    Eigen::MatrixXd states(5001, 1);
    for (int k = 0; k <= 5000; ++k) states(k, 0) = std::exp(-k * dt);
    const auto models = fit_dynamics(states, dt, 2, 0.05);
    REQUIRE(models.size() == 1);
    const int i_x = find_term(models[0].library, {1});
    CHECK(models[0].coefficients(i_x) == doctest::Approx(-1.0).epsilon(1e-2));
}

TEST_CASE("predict with zero coefficients is zero") {
    SparseModel model;
    model.library = build_library(3, 2);
    model.coefficients = Eigen::VectorXd::Zero(model.library.size());
    model.standardizer = Standardizer::identity(3);
    const std::vector<double> row = {1.7, -2.4, 0.9};
    CHECK(predict(model, row) == 0.0);
}

TEST_CASE("fit_regression interpolates an exact linear target") {
    LabeledDataset ds;
    ds.features = normal_matrix(60, 2, 13);
    ds.labels = 2.0 * ds.features.col(0);
    ds.feature_names = {"x1", "x2"};
    const SparseModel model = fit_regression(ds, 2, 0.05);
    const Eigen::VectorXd fitted = predict(model, ds.features);
    for (int r = 0; r < 60; ++r)
        CHECK(fitted(r) == doctest::Approx(ds.labels(r)).epsilon(1e-9));
}

TEST_CASE("predict batch equals per-row prediction bitwise") {
    LabeledDataset ds;
    ds.features = normal_matrix(50, 3, 21);
    ds.labels = ds.features.col(0).array().square().matrix() + ds.features.col(2);
    const SparseModel model = fit_regression(ds, 3, 0.01);

    const Eigen::MatrixXd probe = normal_matrix(20, 3, 22);
    const Eigen::VectorXd batch = predict(model, probe);
    for (int r = 0; r < 20; ++r) {
        const std::vector<double> row = {probe(r, 0), probe(r, 1), probe(r, 2)};
        CHECK(predict(model, row) == batch(r));
    }

    const std::vector<double> wrong = {1.0, 2.0};
    CHECK_THROWS_AS(predict(model, wrong), ShapeMismatch);
}

TEST_CASE("predict is positively homogeneous in the coefficients") {
    LabeledDataset ds;
    ds.features = normal_matrix(50, 2, 33);
    ds.labels = ds.features.col(0) - 0.5 * ds.features.col(1);
    SparseModel model = fit_regression(ds, 2, 0.01);

    const std::vector<double> row = {0.3, -1.2};
    const double base = predict(model, row);
    model.coefficients *= 4.0;
    CHECK(predict(model, row) == doctest::Approx(4.0 * base).epsilon(1e-12));
}

TEST_CASE("fit_standardizer matches column statistics") {
    Eigen::MatrixXd features = normal_matrix(40, 3, 55);
    features.col(1).setConstant(7.25);  // degenerate column
    const Standardizer st = fit_standardizer(features);
    REQUIRE(st.means.size() == 3);
    REQUIRE(st.scales.size() == 3);

    for (int c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (int r = 0; r < 40; ++r) mean += features(r, c);
        mean /= 40.0;
        double ss = 0.0;
        for (int r = 0; r < 40; ++r) ss += (features(r, c) - mean) * (features(r, c) - mean);
        const double sd = std::sqrt(ss / 39.0);
        CHECK(st.means[static_cast<std::size_t>(c)] == doctest::Approx(mean).epsilon(1e-12));
        if (c == 1)
            CHECK(st.scales[1] == 1.0);  // zero variance keeps scale one
        else
            CHECK(st.scales[static_cast<std::size_t>(c)] == doctest::Approx(sd).epsilon(1e-12));
    }

    const Eigen::MatrixXd z = apply_standardizer(st, features);
    CHECK(std::abs(z.col(0).mean()) < 1e-12);
    CHECK(z.col(1).isZero(0.0));
    CHECK_THROWS_AS(apply_standardizer(st, normal_matrix(5, 2, 1)), ShapeMismatch);

    const Standardizer id = Standardizer::identity(2);
    CHECK(id.means == std::vector<double>{0.0, 0.0});
    CHECK(id.scales == std::vector<double>{1.0, 1.0});
}

TEST_CASE("model json round trip preserves every field") {
    LabeledDataset ds;
    ds.features = normal_matrix(80, 2, 61);
    ds.labels = 3.0 * ds.features.col(1).array().square().matrix();
    ds.feature_names = {"sigma", "t_dur"};
    const SparseModel model = fit_regression(ds, 3, 0.05);

    const std::string text = model_to_json(model);
    const SparseModel back = model_from_json(text);
    CHECK(back.library.num_vars == model.library.num_vars);
    CHECK(back.library.max_degree == model.library.max_degree);
    CHECK(back.library.terms == model.library.terms);
    CHECK(back.coefficients == model.coefficients);  // doubles survive exactly
    CHECK(back.threshold == model.threshold);
    CHECK(back.ridge_eps == model.ridge_eps);
    CHECK(back.standardizer.means == model.standardizer.means);
    CHECK(back.standardizer.scales == model.standardizer.scales);
    CHECK(back.feature_names == model.feature_names);
    CHECK(back.trained_at == model.trained_at);

    // Load -> save is byte-stable.
    CHECK(model_to_json(back) == text);

    TempDir dir;
    save_model(model, dir.file("model.json"));
    const SparseModel from_file = load_model(dir.file("model.json"));
    CHECK(from_file.coefficients == model.coefficients);
}

TEST_CASE("model deserialization rejects broken input") {
    LabeledDataset ds;
    ds.features = normal_matrix(30, 1, 71);
    ds.labels = ds.features.col(0) * 1.5;
    const SparseModel model = fit_regression(ds, 2, 0.05);

    auto j = nlohmann::json::parse(model_to_json(model));
    j.erase("coefficients");
    CHECK_THROWS_AS(model_from_json(j.dump()), SchemaVersionMismatch);

    CHECK_THROWS_AS(model_from_json("not json at all"), SchemaVersionMismatch);
    CHECK_THROWS_AS(load_model("/nonexistent/model.json"), IoFailure);
}
