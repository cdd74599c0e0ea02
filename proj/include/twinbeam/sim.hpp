#pragma once

#include "twinbeam/frame.hpp"
#include "twinbeam/keyvalue.hpp"
#include "twinbeam/rng.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace twinbeam {

enum class SourceMode {
    twin_beam,  // seeded four-wave-mixing pairs
    coherent,   // independent Poisson beams with mirrored equal means
};

enum class BackgroundProfile { gaussian, uniform };

struct BeamGeometry {
    int frame_rows = 170;
    int frame_cols = 512;
    // Beam centres; probe_row + conjugate_row and probe_col + conjugate_col must be integers.
    double probe_row = 85.5;
    double probe_col = 128.5;
    double conjugate_row = 85.5;
    double conjugate_col = 383.5;
    double probe_fwhm = 40.0;
    int analysis_size = 80;  // region used to normalize the background rate

    Region probe_region(int size) const { return Region::centred(probe_row, probe_col, size); }
    Region conjugate_region(int size) const { return Region::centred(conjugate_row, conjugate_col, size); }
};

/// Multiplicative Ornstein-Uhlenbeck intensity noise on the source. Each frame's
/// field is a box-smoothed white field with interior standard deviation `amplitude`.
struct TechNoise {
    double amplitude = 0.0;
    double tau_us = 300.0;
    int correlation_px = 40;
};

struct SimConfig {
    SourceMode source = SourceMode::twin_beam;
    double gain = 4.0;              // saturated gain G
    double seed_photons = 2.7e7;    // expected seed photons per pulse over the whole beam
    double qe = 0.7;
    double excess_loss = 0.0;       // extra effective loss on top of qe
    double coherence_sigma = 3.0;   // per-photon spread (px); pair separation std is sqrt(2) times this
    BeamGeometry geometry;
    double background_rate = 4e5;   // expected counts per beam analysis region per frame
    double background_fano = 1.0;   // variance / mean of background counts
    BackgroundProfile background_profile = BackgroundProfile::gaussian;
    double background_fwhm = 160.0;
    TechNoise tech;
    double seed_drift = 1.0 / 1.003;  // per-frame multiplicative seed factor
    bool em_excess_noise = false;
    double transient_kappa = 1.0;
    PulseTiming timing;
    double exposure_us = 12.0;
    std::uint64_t rng_seed = 1;

    /// Throws ConfigError for out-of-range or inconsistent values.
    void validate() const;
    double effective_qe() const noexcept { return qe * (1.0 - excess_loss); }

    /// Reads keys of section [sim] (missing keys keep their defaults).
    static SimConfig from_document(const KeyValueDocument& doc);
    static SimConfig from_document(const KeyValueDocument& doc, const SimConfig& defaults);
    void to_document(KeyValueDocument& doc) const;
};

struct TransientGain {
    double gain = 1.0;
    double excess_noise = 0.0;  // extra variance fraction on uncorrelated light
};

/// G(A) = 1 + (G_sat - 1) s((A - 1) / 5) with a clamped smoothstep s; excess = kappa (1 - s).
TransientGain transient_gain(double delay_us, const SimConfig& cfg);

struct ClipTally {
    std::uint64_t pairs = 0;
    std::uint64_t clipped = 0;

    double fraction() const noexcept { return pairs ? static_cast<double>(clipped) / static_cast<double>(pairs) : 0.0; }
    bool warning() const noexcept { return fraction() > 0.01; }
    ClipTally& operator+=(const ClipTally& o) noexcept
    {
        pairs += o.pairs;
        clipped += o.clipped;
        return *this;
    }
};

struct PulsePair {
    Frame probe;      // full camera frame holding only probe light
    Frame conjugate;  // full camera frame holding only conjugate light
    ClipTally clip;
};

struct SimulatedShot {
    FrameSequence signal;      // camera frames: probe + conjugate + background (+ EM noise)
    FrameSequence background;  // seed-off frames from the same shot
    ClipTally clip;
};

/// Precomputed profiles and sampling tables for one configuration.
class TwinBeamSimulator {
public:
    explicit TwinBeamSimulator(SimConfig cfg);

    const SimConfig& config() const noexcept { return cfg_; }

    /// Detected probe and conjugate light of one pulse. `scale` multiplies the seed;
    /// `modulation` (frame-sized, may be empty) multiplies the source as (1 + modulation).
    PulsePair pulse_pair(std::uint64_t shot, std::uint64_t frame, double scale = 1.0,
                         const Matrix& modulation = {}) const;

    /// Seed-off background of each beam (full-frame images, before EM noise).
    std::pair<Frame, Frame> background(std::uint64_t shot, std::uint64_t frame, bool signal_frame) const;

    /// Technical-noise fields for frames 0..n-1 spaced t apart (empty matrices when off).
    std::vector<Matrix> technical_noise(std::uint64_t shot, std::size_t n_frames, double t_us) const;

    SimulatedShot sequence(std::uint64_t shot, std::size_t n_frames, double t_us, bool with_background) const;

    /// Expected probe counts inside the probe analysis region for unit seed scale.
    double expected_probe_counts() const;

    const Matrix& probe_profile() const noexcept { return profile_; }

private:
    Matrix apply_em(const Matrix& counts, std::uint64_t shot, std::uint64_t frame, std::uint64_t lane) const;

    SimConfig cfg_;
    TransientGain transient_;
    Matrix profile_;  // normalized probe intensity profile
    Matrix probe_bg_profile_;
    Matrix conjugate_bg_profile_;
    std::vector<double> kernel_;
    AliasTable offsets_;
    int kernel_radius_ = 0;
    int mirror_row_sum_ = 0;
    int mirror_col_sum_ = 0;
};

PulsePair generate_pulse_pair(const SimConfig& cfg, std::uint64_t shot, std::uint64_t frame);
SimulatedShot generate_sequence(const SimConfig& cfg, std::size_t n_frames, double t_us, std::uint64_t shot,
                                bool with_background = true);
std::pair<Frame, Frame> generate_background(const SimConfig& cfg, std::uint64_t shot, std::uint64_t frame);

/// Seed photons giving `probe_counts` expected probe counts in the analysis region.
double seed_for_probe_counts(const SimConfig& cfg, double probe_counts);

/// Pair-separation standard deviation for a target cross-correlation FWHM.
double coherence_sigma_for_fwhm(double fwhm_px);

/// Large-bin noise ratio of the sampling model: 1 - eta + eta / (2G - 1).
double expected_twin_sigma(double gain, double qe);

}  // namespace twinbeam
