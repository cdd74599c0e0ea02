#pragma once

#include "twinbeam/emulation.hpp"
#include "twinbeam/pipeline.hpp"
#include "twinbeam/sim.hpp"
#include "twinbeam/stats.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace twinbeam {

/// Inter-frame interval of kinetic readout: shift time of `rows` rows plus the exposure.
double frame_interval(double shift_ns_per_row, int rows, double exposure_us);

struct PhotonFlux {
    double flux = 0.0;             // counts per second
    double correlated_flux = 0.0;  // counts per second belonging to pairs
};

/// flux = counts / pulse width; correlated part flux (G - 1) / G.
PhotonFlux photon_flux(double total_counts, double pulse_width_us, double gain);

enum class ExperimentKind {
    coherent_calibration,
    gain_sweep,
    background_study,
    delay_sweep,
    interval_sweep,
    noise_emulation,
    coherence_measurement,
};

std::string kind_name(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& text);

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::coherent_calibration;
    SimConfig sim;
    PipelineConfig pipeline;
    std::size_t shots = 100;
    std::vector<std::size_t> bin_sizes{1, 2, 4, 5, 8, 10, 16, 20, 40};
    std::filesystem::path output_dir = "twinbeam_output";
    std::size_t workers = 1;

    double probe_counts = 0.0;  // > 0: seed photons set so the probe region holds this many counts
    double interval_us = 63.0;
    std::vector<double> gains{2.0, 4.0, 8.0};
    std::vector<double> qes{1.0, 0.7, 0.5};
    std::vector<double> signal_levels{7.5e7, 2.7e7, 9.4e6, 6.2e6};
    std::vector<double> delays_us{0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0};
    std::vector<double> intervals_us{63.0, 114.0, 352.0, 862.0};
    double pixel_fraction = 0.07;
    std::vector<double> convolved_fractions{0.21, 0.28, 0.32};
    std::size_t kernel_size = 40;
    std::size_t summary_bin = 20;

    // Real-data mode: sequence directories analysed instead of simulated shots.
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> background_inputs;

    /// ConfigError for shots < 10 (2 in real-data mode), bins outside the analysis crop, etc.
    void validate() const;

    /// Sections [experiment], [sim] and [pipeline].
    static ExperimentSpec from_document(const KeyValueDocument& doc);
    void to_document(KeyValueDocument& doc) const;
    /// TWINBEAM_OUTPUT_DIR and TWINBEAM_WORKERS override the file values.
    void apply_environment();
};

/// One simulated (or loaded) data set analysed with one configuration.
struct Condition {
    std::string name;
    std::vector<std::pair<std::string, std::string>> parameters;
    SimConfig sim;
    double interval_us = 63.0;
    bool background_correction = false;
};

struct ShotRecord {
    double probe_rescale = 1.0;
    double conjugate_rescale = 1.0;
    std::pair<int, int> probe_shift{0, 0};
    std::pair<int, int> conjugate_shift{0, 0};
    std::pair<int, int> probe_crop{0, 0};      // top-left (row, col) of the fine crop in frame i
    std::pair<int, int> conjugate_crop{0, 0};
    double clip_fraction = 0.0;
};

struct ConditionResult {
    Condition condition;
    bool ok = false;
    std::string error;
    NoiseRatioCurve curve;                     // raw estimator
    std::optional<NoiseRatioCurve> corrected;  // background-subtracted estimator
    std::vector<NoiseRatioCurve> shot_curves;
    std::vector<ShotRecord> shots;
    std::vector<AlignedPair> pairs;            // kept only on request
};

/// Runs fn(0..n-1) on up to `workers` threads. Callers write results into
/// pre-sized slots so reductions stay in index order.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// The conditions a simulation sweep of this kind visits, in output order.
std::vector<Condition> conditions(const ExperimentSpec& spec);

/// Simulates spec.shots shots (or loads spec.inputs), aligns each frame pair and
/// aggregates the curves. Module errors are captured into `error`.
ConditionResult run_condition(const ExperimentSpec& spec, const Condition& condition, bool keep_pairs = false);

struct EmulationStudy {
    ConditionResult baseline;
    std::vector<std::pair<EmulationSpec, EmulationResult>> results;
    std::vector<std::string> errors;  // one entry per failed emulation spec
};

EmulationStudy run_emulation(const ExperimentSpec& spec);

struct CoherenceStudy {
    bool ok = false;
    std::string error;
    CoherenceEstimate estimate;
    std::size_t shots = 0;
};

/// Cross-correlation maps of the aligned fluctuation images averaged over
/// shots, then reduced to a peak and FWHM.
CoherenceStudy run_coherence(const ExperimentSpec& spec);

struct RunReport {
    std::vector<std::filesystem::path> files;  // everything written, manifest last
    std::size_t failed_conditions = 0;
};

/// Runs the experiment and writes curve csv files, SVG plots and manifest.ini
/// into spec.output_dir.
RunReport run(const ExperimentSpec& spec);

}  // namespace twinbeam
