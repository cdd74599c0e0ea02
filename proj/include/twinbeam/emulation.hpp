#pragma once

#include "twinbeam/pipeline.hpp"
#include "twinbeam/rng.hpp"
#include "twinbeam/stats.hpp"

#include <cstdint>
#include <vector>

namespace twinbeam {

enum class SpatialMode { pixel, convolved };

struct EmulationSpec {
    double fraction = 0.07;  // noise peak-to-peak over baseline fluctuation peak-to-peak
    SpatialMode spatial_mode = SpatialMode::pixel;
    std::size_t kernel_size = 40;  // convolved mode only

    /// ConfigError unless 0 < fraction <= 1 and kernel_size >= 1.
    void validate() const;
};

/// I.i.d. uniform noise on [-r, r] with its sample mean subtracted (exactly zero mean).
Matrix gen_noise(std::size_t rows, std::size_t cols, double r, Engine& rng);

/// k x k unit-sum box filter; the kernel is cropped and renormalized at the edges.
Matrix running_average(const Matrix& noise, std::size_t k);

/// One noise matrix for an image whose fluctuation peak-to-peak is `baseline_ptp`:
/// drawn, optionally smoothed, then scaled so its own peak-to-peak is
/// fraction * baseline_ptp.
Matrix emulation_noise(std::size_t rows, std::size_t cols, double baseline_ptp, const EmulationSpec& spec,
                       Engine& rng);

struct EmulationResult {
    NoiseRatioCurve baseline;             // shot-averaged curve without added noise
    NoiseRatioCurve emulated;             // shot-averaged curve with added noise
    std::vector<NoiseRatioCurve> shots;   // per-shot emulated curves
    std::vector<std::vector<double>> uplift;  // [shot][bin] emulated minus baseline sigma of the same pair
};

/// Adds independent noise matrices to the probe and conjugate fluctuation
/// images of baseline pair shot % baselines.size(), for `shots` shots. The
/// reference peak-to-peak is the mean of the two beams' fluctuation
/// peak-to-peak. AnalysisError when that reference is zero.
EmulationResult emulate(const std::vector<AlignedPair>& baselines, const EmulationSpec& spec, std::size_t shots,
                        std::uint64_t rng_seed, const std::vector<std::size_t>& bins);

NoiseRatioCurve emulate(const AlignedPair& baseline, const EmulationSpec& spec, std::size_t shots,
                        std::uint64_t rng_seed, const std::vector<std::size_t>& bins);

}  // namespace twinbeam
