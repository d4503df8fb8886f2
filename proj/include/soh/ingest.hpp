#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "soh/errors.hpp"
#include "soh/types.hpp"

namespace soh {

// Parses a charge-log CSV with header
//   cell_id,cycle_index,time_s,voltage_V,current_A
// into one ChargeCycle per distinct (cell_id, cycle_index), each sorted by
// time. Cycles are returned ordered by (cell_id, cycle_index).
//
// Throws EmptyFile, MalformedRow (with the offending line number) and
// NonMonotonicTime (duplicate timestamps inside a cycle).
std::vector<ChargeCycle> parse_cycles(const std::filesystem::path& path,
                                      const ProtocolConfig& config);

struct CcCvSplit {
    std::vector<Sample> cc;
    CvSegment cv;
};

// Splits a charge into its CC and CV phases. The CV segment starts at the
// first sample with voltage >= cv_setpoint_V - epsilon_V and current below
// cc_current_A - epsilon_I; everything before belongs to CC. CV time is
// re-zeroed at the segment start.
//
// Throws NoCvPhase if the set-point is never reached under decaying current,
// DegenerateCv if fewer than 3 CV samples remain.
CcCvSplit split_cc_cv(const ChargeCycle& cycle, const ProtocolConfig& config);

// Trapezoidal integral of current over time, in ampere-hours. Exact for
// piecewise-linear current profiles and additive over any split of the
// interval. Voltage entries are ignored.
//
// Throws InsufficientSamples for fewer than 2 samples, NonMonotonicTime if
// time fails to strictly increase, DataError for negative currents.
double coulomb_count(std::span<const Sample> samples);

// Discrete Gaussian filter of half-width `radius`; near the edges the kernel
// is truncated to the available samples and renormalized, so a constant
// input passes through unchanged. Output length equals input length.
//
// Throws InvalidKernel for sigma <= 0 or radius < 1.
std::vector<double> gaussian_smooth(std::span<const double> values, double sigma, int radius);

// SOH(%) = capacity / nominal * 100. Throws NonPositiveNominal.
double to_soh(double capacity_Ah, double nominal_capacity_Ah);

// SOC(%) = (chargeable - discharged) / chargeable * 100.
// Throws InvalidDischarge when discharged lies outside [0, chargeable],
// DataError when chargeable is not positive.
double to_soc(double chargeable_Ah, double discharged_Ah);

// Label pipeline for a set of parsed cycles: per cell (cycles ordered by
// index) coulomb-count each usable charge, smooth the capacity sequence and
// convert to SOH. Cycles that fail CC/CV extraction carry no trustworthy
// capacity and are left out.
std::vector<CapacityLabel> label_cycles(const std::vector<ChargeCycle>& cycles,
                                        const ProtocolConfig& config,
                                        double smoothing_sigma,
                                        int smoothing_radius);

// Writes labels as `cell_id,cycle_index,capacity_Ah,smoothed_capacity_Ah,soh_pct`.
void write_labels_csv(const std::vector<CapacityLabel>& labels,
                      const std::filesystem::path& path);

}  // namespace soh
