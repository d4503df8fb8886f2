#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "soh/errors.hpp"
#include "soh/types.hpp"

namespace soh {

// Synthetic battery-aging fleet generator.
//
// Aging model, per cycle k of each cell:
//   * true capacity   C_k = C_nom * (1 - fade_rate * k) + noise, clamped to
//     (0, C_nom]; noise is Gaussian with sd fade_noise_sd percent of C_nom.
//   * CC phase: constant cc_current_A, terminal voltage affine in delivered
//     charge from 3.2 V up to the CV set-point, duration chosen so the whole
//     charge integrates to C_k.
//   * CV phase: two-branch RC current relaxation
//       I(t) = I0 * ((1 - w_k) * exp(-t / tau_k) + w_k * exp(-t / (beta * tau_k)))
//     truncated at the cutoff current, with tau_k = cv_tau0_s *
//     (1 + resistance_growth * k) and a slow-branch share w_k that grows with
//     the same resistance_growth knob. resistance_growth = 0 freezes the CV
//     shape entirely.
//
// Cells share the deterministic trajectory; only their capacity-noise
// streams differ (sub-seed = seed XOR 1-based cell index).
struct SimConfig {
    ProtocolConfig protocol;
    int num_cells = 8;
    int cycles_per_cell = 300;
    double fade_rate = 8e-4;        // capacity fraction lost per cycle
    double fade_noise_sd = 0.15;    // SOH percent
    double resistance_growth = 2e-3;  // per-cycle growth of the CV time constant
    double cv_tau0_s = 180.0;
    double sample_dt_s = 1.0;
    std::uint64_t seed = 7;
};

struct GroundTruthRow {
    std::string cell_id;
    int cycle_index = 0;
    double true_capacity_Ah = 0.0;
    double true_soh_pct = 0.0;
    double cv_tau_s = 0.0;
};

struct GroundTruth {
    std::vector<GroundTruthRow> rows;
};

struct Fleet {
    std::vector<ChargeCycle> cycles;
    GroundTruth truth;
};

// Deterministic for a fixed config (seed included). Throws InvalidConfig.
Fleet simulate_fleet(const SimConfig& config);

// Closed-form CV-phase quantities for a given cycle index, used as oracles
// by callers. duration_s/charge_Ah run from the voltage clamp to the
// cutoff crossing; the detected_* pair instead starts where the current
// first drops below cc_current_A - cc_current_tolerance_A, which is the
// window split_cc_cv recovers from sampled data.
struct CvPhaseTruth {
    double duration_s = 0.0;
    double charge_Ah = 0.0;
    double detected_duration_s = 0.0;
    double detected_charge_Ah = 0.0;
};
CvPhaseTruth cv_phase_truth(const SimConfig& config, int cycle_index);

// Writes one `<cell_id>.csv` charge log per cell (ingest schema) plus
// `ground_truth.csv` with header
// `cell_id,cycle_index,true_capacity_Ah,true_soh_pct`.
// Throws IoFailure.
void export_fleet(const std::vector<ChargeCycle>& cycles, const GroundTruth& truth,
                  const std::filesystem::path& dir);

// Reads a ground_truth.csv back. Throws IoFailure, MalformedRow, EmptyFile.
GroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace soh
