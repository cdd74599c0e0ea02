#pragma once

#include "twinbeam/frame.hpp"
#include "twinbeam/keyvalue.hpp"

#include <filesystem>
#include <optional>
#include <utility>

namespace twinbeam {

enum class RescaleMode {
    auto_per_beam,  // independent probe and conjugate total ratios
    auto_probe,     // probe ratio applied to both beams
    fixed,
    off,
};

struct PipelineConfig {
    int coarse_crop = 120;
    int analysis_crop = 80;
    int search_radius = 10;
    RescaleMode rescale_mode = RescaleMode::auto_per_beam;
    double fixed_rescale = 1.0;
    int locate_window = 0;  // centroid window; 0 uses analysis_crop
    // Conjugate crop centre (frame coordinates) paired with the probe crop centre.
    // Unset: the located conjugate beam centre.
    std::optional<std::pair<double, double>> rotation_centre;

    void validate() const;
    static PipelineConfig from_document(const KeyValueDocument& doc);
    static PipelineConfig from_document(const KeyValueDocument& doc, const PipelineConfig& defaults);
    void to_document(KeyValueDocument& doc) const;
};

struct BeamLocation {
    double row = 0.0;
    double col = 0.0;
};

/// Maximum of the 3x3-smoothed hint region, refined by an iterated intensity
/// centroid over a `window` x `window` box. AnalysisError when the hint region
/// holds no peak standing out of its pixel noise.
BeamLocation locate_beam(const Frame& frame, const Region& hint, int window = 9);

/// Integer shift (dr, dc), |dr|, |dc| <= radius, maximizing the Pearson
/// correlation of a(r, c) with b(r + dr, c + dc) over their overlap. If b is a
/// translated by s, the result is s. AnalysisError when the best correlation
/// does not exceed 5 / sqrt(overlap pixels).
std::pair<int, int> register_shift(const Matrix& a, const Matrix& b, int radius);

struct AlignedPair {
    FluctuationImage probe_fluct;         // p1 - s_p p2
    FluctuationImage conj_fluct_rotated;  // rot180(c1 - s_c c2)
    double rescale_used = 1.0;            // probe factor
    double conjugate_rescale = 1.0;
    std::pair<int, int> probe_shift{0, 0};
    std::pair<int, int> conjugate_shift{0, 0};
    BeamLocation probe_location;
    BeamLocation conjugate_location;
    Region probe_region;      // fine crop in frame i; frame j uses region + shift
    Region conjugate_region;
    // Aligned raw crops (conjugate crops rotated) for the estimators.
    Matrix p1, p2, c1, c2;
};

AlignedPair make_fluctuations(const FrameSequence& seq, std::size_t frame_i, std::size_t frame_j,
                              const Region& probe_hint, const Region& conj_hint, const PipelineConfig& cfg);

/// Crops, shifts, rescales and rotates another sequence (typically seed-off
/// background) with the geometry and factors already determined for `geometry`.
AlignedPair apply_alignment(const AlignedPair& geometry, const FrameSequence& seq, std::size_t frame_i,
                            std::size_t frame_j);

/// probe_fluct - conj_fluct_rotated.
Matrix difference_image(const AlignedPair& pair);
/// p1 + p2 + c1 + c2 in the aligned orientation.
Matrix sum_image(const AlignedPair& pair);

/// Writes probe_fluct.csv, conj_fluct_rotated.csv and provenance.ini into `dir`.
void write_aligned_pair(const AlignedPair& pair, const std::filesystem::path& dir);

}  // namespace twinbeam
