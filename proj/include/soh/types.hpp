#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace soh {

// One (time, voltage, current) measurement of a charge log.
struct Sample {
    double time_s = 0.0;
    double voltage_V = 0.0;
    double current_A = 0.0;
};

// CC-CV protocol constants (lab defaults: 2 Ah / 3.7 V cell, 1.25 A charge
// to 4.2 V, constant-voltage hold to a 125 mA cutoff). The tolerance pair
// controls CC/CV boundary detection.
struct ProtocolConfig {
    double nominal_capacity_Ah = 2.0;
    double nominal_voltage_V = 3.7;
    double cv_setpoint_V = 4.2;
    double cc_current_A = 1.25;
    double cv_cutoff_A = 0.125;
    double cc_voltage_tolerance_V = 0.01;  // epsilon_V
    double cc_current_tolerance_A = 0.05;  // epsilon_I
};

// One charge event. Samples are ordered by strictly increasing time;
// voltages must lie in (0, 6) V and currents in [0, 10] A.
struct ChargeCycle {
    std::string cell_id;
    int cycle_index = 0;
    std::vector<Sample> samples;
};

// Constant-voltage portion of a charge, time re-zeroed at segment start.
struct CvSegment {
    int parent_cycle = 0;
    std::vector<Sample> samples;
};

// Per-cycle capacity label derived by coulomb counting, with its smoothed
// value and the resulting SOH percentage.
struct CapacityLabel {
    std::string cell_id;
    int cycle_index = 0;
    double capacity_Ah = 0.0;
    double smoothed_capacity_Ah = 0.0;
    double soh_pct = 0.0;
};

// The seven CV-segment statistics used as model state, in canonical order:
// mean, standard deviation, skewness, excess kurtosis, current drop,
// CV charge and CV duration.
struct FeatureVector {
    double mu = 0.0;       // A
    double sigma = 0.0;    // A
    double skew = 0.0;
    double kur = 0.0;
    double delta_i = 0.0;  // A
    double c_cv = 0.0;     // Ah
    double t_dur = 0.0;    // s

    std::array<double, 7> to_array() const { return {mu, sigma, skew, kur, delta_i, c_cv, t_dur}; }
};

inline constexpr std::array<const char*, 7> kFeatureNames = {
    "mu", "sigma", "skew", "kur", "delta_i", "c_cv", "t_dur"};

// Identifies which (cell, cycle) produced a dataset row.
struct RowOrigin {
    std::string cell_id;
    int cycle_index = 0;
};

// Feature snapshots paired with SOH labels. One row per charge cycle.
struct LabeledDataset {
    Eigen::MatrixXd features;  // p x m
    Eigen::VectorXd labels;    // p
    std::vector<RowOrigin> provenance;
    std::vector<std::string> feature_names;  // m column names

    Eigen::Index rows() const { return features.rows(); }
    Eigen::Index cols() const { return features.cols(); }
};

}  // namespace soh
