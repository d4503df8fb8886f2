#include "soh/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include "csv_util.hpp"

namespace soh {

namespace {

constexpr std::string_view kCycleHeader = "cell_id,cycle_index,time_s,voltage_V,current_A";

void check_sample_bounds(const Sample& s, std::size_t line) {
    if (!(std::isfinite(s.time_s) && std::isfinite(s.voltage_V) && std::isfinite(s.current_A)))
        throw MalformedRow(line, "non-finite value");
    if (s.voltage_V <= 0.0 || s.voltage_V >= 6.0)
        throw MalformedRow(line, "voltage outside (0, 6) V");
    if (s.current_A < 0.0 || s.current_A > 10.0)
        throw MalformedRow(line, "current outside [0, 10] A");
}

}  // namespace

std::vector<ChargeCycle> parse_cycles(const std::filesystem::path& path,
                                      const ProtocolConfig& /*config*/) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path.string());

    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    std::map<std::pair<std::string, int>, std::vector<Sample>> groups;

    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = detail::strip_cr(line);
        if (text.empty()) continue;
        if (!saw_header) {
            if (text != kCycleHeader)
                throw MalformedRow(line_no, "expected header '" + std::string(kCycleHeader) + "'");
            saw_header = true;
            continue;
        }
        const auto fields = detail::split_fields(text);
        if (fields.size() != 5)
            throw MalformedRow(line_no, "expected 5 fields, got " + std::to_string(fields.size()));
        if (fields[0].empty()) throw MalformedRow(line_no, "empty cell_id");
        const auto cycle = detail::parse_int(fields[1]);
        if (!cycle || *cycle < 0) throw MalformedRow(line_no, "bad cycle_index '" + std::string(fields[1]) + "'");
        const auto t = detail::parse_double(fields[2]);
        if (!t) throw MalformedRow(line_no, "bad time_s '" + std::string(fields[2]) + "'");
        const auto v = detail::parse_double(fields[3]);
        if (!v) throw MalformedRow(line_no, "bad voltage_V '" + std::string(fields[3]) + "'");
        const auto i = detail::parse_double(fields[4]);
        if (!i) throw MalformedRow(line_no, "bad current_A '" + std::string(fields[4]) + "'");

        Sample s{*t, *v, *i};
        check_sample_bounds(s, line_no);
        groups[{std::string(fields[0]), static_cast<int>(*cycle)}].push_back(s);
    }
    if (!saw_header || groups.empty()) throw EmptyFile("no data rows in " + path.string());

    std::vector<ChargeCycle> cycles;
    cycles.reserve(groups.size());
    for (auto& [key, samples] : groups) {
        std::stable_sort(samples.begin(), samples.end(),
                         [](const Sample& a, const Sample& b) { return a.time_s < b.time_s; });
        for (std::size_t k = 1; k < samples.size(); ++k) {
            if (!(samples[k].time_s > samples[k - 1].time_s))
                throw NonMonotonicTime("duplicate timestamp in cell " + key.first + " cycle " +
                                       std::to_string(key.second));
        }
        cycles.push_back(ChargeCycle{key.first, key.second, std::move(samples)});
    }
    return cycles;
}

CcCvSplit split_cc_cv(const ChargeCycle& cycle, const ProtocolConfig& config) {
    const double v_gate = config.cv_setpoint_V - config.cc_voltage_tolerance_V;
    const double i_gate = config.cc_current_A - config.cc_current_tolerance_A;

    std::size_t start = cycle.samples.size();
    for (std::size_t k = 0; k < cycle.samples.size(); ++k) {
        const Sample& s = cycle.samples[k];
        if (s.voltage_V >= v_gate && s.current_A < i_gate) {
            start = k;
            break;
        }
    }
    if (start == cycle.samples.size())
        throw NoCvPhase("cell " + cycle.cell_id + " cycle " + std::to_string(cycle.cycle_index) +
                        " never enters constant-voltage hold");
    if (cycle.samples.size() - start < 3)
        throw DegenerateCv("cell " + cycle.cell_id + " cycle " + std::to_string(cycle.cycle_index) +
                           " has fewer than 3 CV samples");

    CcCvSplit split;
    split.cc.assign(cycle.samples.begin(), cycle.samples.begin() + static_cast<long>(start));
    split.cv.parent_cycle = cycle.cycle_index;
    split.cv.samples.reserve(cycle.samples.size() - start);
    const double t0 = cycle.samples[start].time_s;
    for (std::size_t k = start; k < cycle.samples.size(); ++k) {
        Sample s = cycle.samples[k];
        s.time_s -= t0;
        split.cv.samples.push_back(s);
    }
    return split;
}

double coulomb_count(std::span<const Sample> samples) {
    if (samples.size() < 2)
        throw InsufficientSamples("coulomb count needs at least 2 samples, got " +
                                  std::to_string(samples.size()));
    double ampere_seconds = 0.0;
    for (std::size_t k = 1; k < samples.size(); ++k) {
        const double dt = samples[k].time_s - samples[k - 1].time_s;
        if (!(dt > 0.0)) throw NonMonotonicTime("time must strictly increase");
        if (samples[k].current_A < 0.0 || samples[k - 1].current_A < 0.0)
            throw DataError("negative current in coulomb count");
        ampere_seconds += 0.5 * (samples[k].current_A + samples[k - 1].current_A) * dt;
    }
    return ampere_seconds / 3600.0;
}

std::vector<double> gaussian_smooth(std::span<const double> values, double sigma, int radius) {
    if (!(sigma > 0.0) || radius < 1)
        throw InvalidKernel("gaussian_smooth needs sigma > 0 and radius >= 1");
    if (values.empty()) return {};

    std::vector<double> kernel(static_cast<std::size_t>(radius) + 1);
    for (int j = 0; j <= radius; ++j)
        kernel[static_cast<std::size_t>(j)] = std::exp(-0.5 * (j * j) / (sigma * sigma));

    const int n = static_cast<int>(values.size());
    std::vector<double> out(values.size());
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        double weight = 0.0;
        const int lo = std::max(-radius, -i);
        const int hi = std::min(radius, n - 1 - i);
        for (int j = lo; j <= hi; ++j) {
            const double w = kernel[static_cast<std::size_t>(std::abs(j))];
            acc += w * values[static_cast<std::size_t>(i + j)];
            weight += w;
        }
        out[static_cast<std::size_t>(i)] = acc / weight;
    }
    return out;
}

double to_soh(double capacity_Ah, double nominal_capacity_Ah) {
    if (!(nominal_capacity_Ah > 0.0))
        throw NonPositiveNominal("nominal capacity must be positive");
    return capacity_Ah / nominal_capacity_Ah * 100.0;
}

double to_soc(double chargeable_Ah, double discharged_Ah) {
    if (!(chargeable_Ah > 0.0)) throw DataError("chargeable capacity must be positive");
    if (discharged_Ah < 0.0 || discharged_Ah > chargeable_Ah)
        throw InvalidDischarge("discharged must lie in [0, chargeable]");
    return (chargeable_Ah - discharged_Ah) / chargeable_Ah * 100.0;
}

std::vector<CapacityLabel> label_cycles(const std::vector<ChargeCycle>& cycles,
                                        const ProtocolConfig& config,
                                        double smoothing_sigma, int smoothing_radius) {
    // Group usable cycles per cell, ordered by cycle index.
    std::map<std::string, std::vector<std::pair<int, double>>> per_cell;
    for (const ChargeCycle& cycle : cycles) {
        try {
            (void)split_cc_cv(cycle, config);
        } catch (const DataError&) {
            continue;  // partial charge; capacity label would be wrong
        }
        per_cell[cycle.cell_id].emplace_back(cycle.cycle_index,
                                             coulomb_count(cycle.samples));
    }

    std::vector<CapacityLabel> labels;
    for (auto& [cell_id, entries] : per_cell) {
        std::sort(entries.begin(), entries.end());
        std::vector<double> capacities;
        capacities.reserve(entries.size());
        for (const auto& [idx, cap] : entries) capacities.push_back(cap);
        const std::vector<double> smoothed =
            gaussian_smooth(capacities, smoothing_sigma, smoothing_radius);
        for (std::size_t k = 0; k < entries.size(); ++k) {
            CapacityLabel label;
            label.cell_id = cell_id;
            label.cycle_index = entries[k].first;
            label.capacity_Ah = capacities[k];
            label.smoothed_capacity_Ah = smoothed[k];
            label.soh_pct = to_soh(smoothed[k], config.nominal_capacity_Ah);
            labels.push_back(std::move(label));
        }
    }
    return labels;
}

void write_labels_csv(const std::vector<CapacityLabel>& labels,
                      const std::filesystem::path& path) {
    std::string out = "cell_id,cycle_index,capacity_Ah,smoothed_capacity_Ah,soh_pct\n";
    for (const CapacityLabel& label : labels) {
        out += label.cell_id;
        out += ',';
        out += std::to_string(label.cycle_index);
        out += ',';
        detail::append_double(out, label.capacity_Ah);
        out += ',';
        detail::append_double(out, label.smoothed_capacity_Ah);
        out += ',';
        detail::append_double(out, label.soh_pct);
        out += '\n';
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw IoFailure("cannot write " + path.string());
    file << out;
    if (!file) throw IoFailure("failed writing " + path.string());
}

}  // namespace soh
