#pragma once

#include "twinbeam/frame.hpp"
#include "twinbeam/matrix.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace twinbeam {

/// Sums n x n blocks of the largest top-left-anchored sub-matrix with
/// dimensions divisible by n. Output is floor(rows/n) x floor(cols/n).
Matrix bin(const Matrix& image, std::size_t n);

struct NoiseRatio {
    double sigma = 0.0;
    double std_error = 0.0;
    std::size_t superpixel_count = 0;
};

/// Noise ratio from a precomputed difference image `d` (probe fluctuation minus
/// oriented conjugate fluctuation) and the four-frame sum image `s`.
/// sigma = var(bin(d, n)) / mean(bin(s, n)), unbiased variance.
NoiseRatio noise_ratio_from_parts(const Matrix& d, const Matrix& s, std::size_t n);

/// Twin-beam noise ratio of four equally sized, already oriented crops.
/// `rescale` multiplies the second-frame crops p2 and c2 in the difference only.
NoiseRatio noise_ratio(const Matrix& p1, const Matrix& p2, const Matrix& c1, const Matrix& c2, std::size_t n,
                       double rescale);
NoiseRatio noise_ratio(const Frame& p1, const Frame& p2, const Frame& c1, const Frame& c2, std::size_t n,
                       double rescale);

/// Background-corrected ratio: (var_signal - var_background) / (mean_signal - mean_background).
/// The result may be negative. std_error combines both per-term variance errors.
NoiseRatio noise_ratio_bg_from_parts(const Matrix& d, const Matrix& s, const Matrix& db, const Matrix& sb,
                                     std::size_t n);

NoiseRatio noise_ratio_bg(const Matrix& p1, const Matrix& p2, const Matrix& c1, const Matrix& c2, const Matrix& pb1,
                          const Matrix& pb2, const Matrix& cb1, const Matrix& cb2, std::size_t n, double rescale);

struct NoiseRatioEntry {
    std::size_t bin = 0;
    double sigma = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;

    bool operator==(const NoiseRatioEntry&) const = default;
};

/// Noise ratio as a function of superpixel size; bins strictly increasing.
class NoiseRatioCurve {
public:
    NoiseRatioCurve() = default;
    explicit NoiseRatioCurve(std::vector<NoiseRatioEntry> entries);

    const std::vector<NoiseRatioEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    const NoiseRatioEntry& at_bin(std::size_t bin) const;
    std::vector<double> sigmas() const;
    std::vector<double> std_errors() const;
    std::vector<double> bins() const;

    /// csv with header "bin,sigma,stderr,count"; each comment becomes a leading "# " line.
    std::string to_csv(const std::vector<std::string>& comments = {}) const;
    void write_csv(const std::filesystem::path& path, const std::vector<std::string>& comments = {}) const;
    static NoiseRatioCurve parse_csv(const std::string& text);
    static NoiseRatioCurve read_csv(const std::filesystem::path& path);

    bool operator==(const NoiseRatioCurve&) const = default;

private:
    std::vector<NoiseRatioEntry> entries_;
};

/// Single-shot curve over the given bin sizes; sizes that leave fewer than
/// four superpixels are rejected with ConfigError.
NoiseRatioCurve noise_ratio_curve(const Matrix& d, const Matrix& s, const std::vector<std::size_t>& bins);
NoiseRatioCurve noise_ratio_bg_curve(const Matrix& d, const Matrix& s, const Matrix& db, const Matrix& sb,
                                     const std::vector<std::size_t>& bins);

/// Multi-shot curve: sigma is the mean over shots and std_error the standard
/// error of that mean (sample std / sqrt(shots)). Needs at least two shots.
NoiseRatioCurve aggregate_curves(const std::vector<NoiseRatioCurve>& shots);

struct CoherenceEstimate {
    Matrix correlation_map;  // index (max_shift + u, max_shift + v) holds shift (u, v)
    int max_shift = 0;
    double peak_value = 0.0;
    double fwhm_rows = 0.0;
    double fwhm_cols = 0.0;
    std::pair<int, int> peak_offset{0, 0};
    double noise_floor = 0.0;
};

/// Normalized cross-correlation of mean-subtracted images over their overlap:
/// map(u, v) = sum fp(i, j) fc(i + u, j + v) / sqrt(sum fp^2 * sum fc^2), with both
/// sums of squares taken over the same overlap. Shifts run over -max_shift..max_shift.
Matrix cross_correlation_map(const Matrix& fp, const Matrix& fc, int max_shift);

/// Peak, FWHM along the central row and column by linear interpolation, and
/// a significance check against 1.4826 * MAD of the map (AnalysisError).
CoherenceEstimate coherence_from_map(const Matrix& map);

/// cross_correlation_map with max_shift = min(dims) / 4, then coherence_from_map.
CoherenceEstimate coherence_area(const Matrix& fp, const Matrix& fc);

struct ModeCount {
    double spatial_modes = 0.0;
    double temporal_modes = 0.0;
    double photons_per_mode = 0.0;
};

/// spatial = area / (fwhm_rows * fwhm_cols); temporal = pulse_us * bandwidth_mhz.
ModeCount mode_count(const Region& region, double fwhm_rows, double fwhm_cols, double pulse_width_us,
                     double bandwidth_mhz, double total_counts);

/// sum(p1) / sum(p2); AnalysisError if the second total is not positive.
double scaling_factor(const Matrix& p1, const Matrix& p2);
double scaling_factor(const Frame& p1, const Frame& p2, const Region& region);

/// Weighted least-squares non-increasing fit (pool adjacent violators).
std::vector<double> isotonic_decreasing(const std::vector<double>& values, const std::vector<double>& weights);

/// Sample mean and standard error of the mean.
std::pair<double, double> mean_and_sem(const std::vector<double>& values);

/// Ordinary least-squares slope of y against x.
double ols_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace twinbeam
