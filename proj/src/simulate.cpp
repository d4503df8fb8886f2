#include "soh/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "csv_util.hpp"
#include "soh/rng.hpp"

namespace soh {

namespace {

// Fixed shape constants of the two-branch CV relaxation. The slow branch
// relaxes kSlowBranchRatio times slower than tau_k; its weight starts at
// kSlowWeight0 and grows with resistance_growth * cycle (capped), which is
// what drags the whole current distribution — mean, spread, shape moments —
// along the aging axis instead of merely stretching the time scale.
constexpr double kSlowBranchRatio = 6.0;
constexpr double kSlowWeight0 = 0.05;
constexpr double kSlowWeightGain = 0.5;
constexpr double kSlowWeightMax = 0.45;

// CC phase bookkeeping: terminal voltage ramps from here to the set-point,
// and the constant-current part of the log is decimated to every
// kCcStridePeriods-th sample period (the current is constant, so the
// trapezoid stays exact and nothing downstream looks at CC voltage).
constexpr double kCcStartVoltage = 3.2;
constexpr int kCcStridePeriods = 30;

struct CvShape {
    double tau_s = 0.0;
    double slow_weight = 0.0;
};

CvShape cv_shape(const SimConfig& config, int cycle_index) {
    CvShape shape;
    shape.tau_s = config.cv_tau0_s * (1.0 + config.resistance_growth * cycle_index);
    shape.slow_weight = std::min(
        kSlowWeight0 + kSlowWeightGain * config.resistance_growth * cycle_index, kSlowWeightMax);
    return shape;
}

// I(t)/I0 for the two-branch relaxation.
double cv_current_fraction(const CvShape& shape, double t_s) {
    return (1.0 - shape.slow_weight) * std::exp(-t_s / shape.tau_s) +
           shape.slow_weight * std::exp(-t_s / (kSlowBranchRatio * shape.tau_s));
}

void validate(const SimConfig& config) {
    const ProtocolConfig& p = config.protocol;
    if (config.num_cells < 1) throw InvalidConfig("num_cells must be >= 1");
    if (config.cycles_per_cell < 2) throw InvalidConfig("cycles_per_cell must be >= 2");
    if (!(config.sample_dt_s > 0.0)) throw InvalidConfig("sample_dt_s must be positive");
    if (config.fade_rate < 0.0 || config.fade_noise_sd < 0.0 || config.resistance_growth < 0.0)
        throw InvalidConfig("rates must be non-negative");
    if (!(config.cv_tau0_s > 0.0)) throw InvalidConfig("cv_tau0_s must be positive");
    if (!(p.nominal_capacity_Ah > 0.0)) throw InvalidConfig("nominal capacity must be positive");
    if (!(p.cc_current_A > 0.0)) throw InvalidConfig("cc current must be positive");
    if (!(p.cv_cutoff_A > 0.0) || p.cv_cutoff_A >= p.cc_current_A)
        throw InvalidConfig("cv cutoff must lie in (0, cc current)");
}

}  // namespace

namespace {

// Time at which I(t)/I0 first reaches `frac`, by bisection; the fraction is
// strictly decreasing and bounded above by the slow branch alone, so the
// crossing lies in [0, beta*tau*ln(1/frac)].
double cv_fraction_crossing(const CvShape& shape, double frac) {
    if (frac >= 1.0) return 0.0;
    double lo = 0.0;
    double hi = kSlowBranchRatio * shape.tau_s * std::log(1.0 / frac);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (cv_current_fraction(shape, mid) > frac)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Integral of I0 * fraction over [0, t], in Ah.
double cv_charge_Ah(const CvShape& shape, double i0, double t_s) {
    const double beta_tau = kSlowBranchRatio * shape.tau_s;
    const double ampere_seconds =
        i0 * ((1.0 - shape.slow_weight) * shape.tau_s * (1.0 - std::exp(-t_s / shape.tau_s)) +
              shape.slow_weight * beta_tau * (1.0 - std::exp(-t_s / beta_tau)));
    return ampere_seconds / 3600.0;
}

}  // namespace

CvPhaseTruth cv_phase_truth(const SimConfig& config, int cycle_index) {
    validate(config);
    const CvShape shape = cv_shape(config, cycle_index);
    const double i0 = config.protocol.cc_current_A;

    CvPhaseTruth truth;
    truth.duration_s = cv_fraction_crossing(shape, config.protocol.cv_cutoff_A / i0);
    truth.charge_Ah = cv_charge_Ah(shape, i0, truth.duration_s);

    // The detector keeps samples only once the current falls below the CC
    // band, so its window starts at that later crossing.
    const double gate_A = i0 - config.protocol.cc_current_tolerance_A;
    const double t_gate = (gate_A <= config.protocol.cv_cutoff_A)
                              ? truth.duration_s
                              : cv_fraction_crossing(shape, gate_A / i0);
    truth.detected_duration_s = truth.duration_s - t_gate;
    truth.detected_charge_Ah = truth.charge_Ah - cv_charge_Ah(shape, i0, t_gate);
    return truth;
}

Fleet simulate_fleet(const SimConfig& config) {
    validate(config);
    const ProtocolConfig& p = config.protocol;
    const double stride_s = kCcStridePeriods * config.sample_dt_s;

    Fleet fleet;
    fleet.cycles.reserve(static_cast<std::size_t>(config.num_cells) *
                         static_cast<std::size_t>(config.cycles_per_cell));
    for (int cell = 1; cell <= config.num_cells; ++cell) {
        // Independent per-cell noise stream; the 1-based index keeps cell 1
        // distinct from the fleet seed itself.
        Rng rng(config.seed ^ static_cast<std::uint64_t>(cell));
        const std::string cell_id = "cell" + std::to_string(cell);

        for (int k = 0; k < config.cycles_per_cell; ++k) {
            const CvPhaseTruth cv = cv_phase_truth(config, k);
            const CvShape shape = cv_shape(config, k);

            double capacity = p.nominal_capacity_Ah * (1.0 - config.fade_rate * k) +
                              rng.normal() * (config.fade_noise_sd / 100.0) * p.nominal_capacity_Ah;
            capacity = std::min(capacity, p.nominal_capacity_Ah);

            const double cc_charge_Ah = capacity - cv.charge_Ah;
            const double t_cc_s = cc_charge_Ah * 3600.0 / p.cc_current_A;
            if (!(t_cc_s > stride_s))
                throw InvalidConfig("cycle " + std::to_string(k) +
                                    ": capacity fade leaves no constant-current phase");

            ChargeCycle cycle;
            cycle.cell_id = cell_id;
            cycle.cycle_index = k;

            for (long j = 0; static_cast<double>(j) * stride_s < t_cc_s; ++j) {
                const double t = static_cast<double>(j) * stride_s;
                const double q = p.cc_current_A * t / 3600.0;
                const double v =
                    kCcStartVoltage + (p.cv_setpoint_V - kCcStartVoltage) * (q / cc_charge_Ah);
                cycle.samples.push_back(Sample{t, v, p.cc_current_A});
            }
            for (long j = 0;; ++j) {
                const double t = static_cast<double>(j) * config.sample_dt_s;
                const double current = p.cc_current_A * cv_current_fraction(shape, t);
                if (current < p.cv_cutoff_A) break;
                cycle.samples.push_back(Sample{t_cc_s + t, p.cv_setpoint_V, current});
            }
            fleet.cycles.push_back(std::move(cycle));

            GroundTruthRow row;
            row.cell_id = cell_id;
            row.cycle_index = k;
            row.true_capacity_Ah = capacity;
            row.true_soh_pct = capacity / p.nominal_capacity_Ah * 100.0;
            row.cv_tau_s = shape.tau_s;
            fleet.truth.rows.push_back(std::move(row));
        }
    }
    return fleet;
}

void export_fleet(const std::vector<ChargeCycle>& cycles, const GroundTruth& truth,
                  const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoFailure("cannot create directory " + dir.string() + ": " + ec.message());

    // One log per cell, cycles in input order.
    std::map<std::string, std::vector<const ChargeCycle*>> per_cell;
    for (const ChargeCycle& cycle : cycles) per_cell[cycle.cell_id].push_back(&cycle);

    for (const auto& [cell_id, cell_cycles] : per_cell) {
        const std::filesystem::path path = dir / (cell_id + ".csv");
        std::ofstream file(path, std::ios::binary);
        if (!file) throw IoFailure("cannot write " + path.string());
        file << "cell_id,cycle_index,time_s,voltage_V,current_A\n";
        std::string buffer;
        for (const ChargeCycle* cycle : cell_cycles) {
            buffer.clear();
            for (const Sample& s : cycle->samples) {
                buffer += cycle->cell_id;
                buffer += ',';
                buffer += std::to_string(cycle->cycle_index);
                buffer += ',';
                detail::append_double(buffer, s.time_s);
                buffer += ',';
                detail::append_double(buffer, s.voltage_V);
                buffer += ',';
                detail::append_double(buffer, s.current_A);
                buffer += '\n';
            }
            file << buffer;
        }
        if (!file) throw IoFailure("failed writing " + path.string());
    }

    const std::filesystem::path truth_path = dir / "ground_truth.csv";
    std::ofstream file(truth_path, std::ios::binary);
    if (!file) throw IoFailure("cannot write " + truth_path.string());
    file << "cell_id,cycle_index,true_capacity_Ah,true_soh_pct\n";
    for (const GroundTruthRow& row : truth.rows) {
        std::string line = row.cell_id;
        line += ',';
        line += std::to_string(row.cycle_index);
        line += ',';
        detail::append_double(line, row.true_capacity_Ah);
        line += ',';
        detail::append_double(line, row.true_soh_pct);
        line += '\n';
        file << line;
    }
    if (!file) throw IoFailure("failed writing " + truth_path.string());
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path.string());

    GroundTruth truth;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = detail::strip_cr(line);
        if (text.empty()) continue;
        if (!saw_header) {
            if (text != "cell_id,cycle_index,true_capacity_Ah,true_soh_pct")
                throw MalformedRow(line_no, "unexpected ground-truth header");
            saw_header = true;
            continue;
        }
        const auto fields = detail::split_fields(text);
        if (fields.size() != 4)
            throw MalformedRow(line_no, "expected 4 fields, got " + std::to_string(fields.size()));
        const auto cycle = detail::parse_int(fields[1]);
        const auto capacity = detail::parse_double(fields[2]);
        const auto soh = detail::parse_double(fields[3]);
        if (fields[0].empty() || !cycle || !capacity || !soh)
            throw MalformedRow(line_no, "unparseable ground-truth row");
        GroundTruthRow row;
        row.cell_id = std::string(fields[0]);
        row.cycle_index = static_cast<int>(*cycle);
        row.true_capacity_Ah = *capacity;
        row.true_soh_pct = *soh;
        truth.rows.push_back(std::move(row));
    }
    if (truth.rows.empty()) throw EmptyFile("no ground-truth rows in " + path.string());
    return truth;
}

}  // namespace soh
