#pragma once

#include "twinbeam/matrix.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace twinbeam {

/// Rectangular pixel region; origin is the top-left pixel.
struct Region {
    int row = 0;
    int col = 0;
    int height = 0;
    int width = 0;

    /// True when the region is non-empty and lies entirely inside a rows x cols frame.
    bool fits(std::size_t rows, std::size_t cols) const noexcept;
    long area() const noexcept { return static_cast<long>(height) * width; }
    Region translated(int d_row, int d_col) const noexcept { return {row + d_row, col + d_col, height, width}; }

    /// Square region of side `size` whose geometric centre is closest to (centre_row, centre_col).
    static Region centred(double centre_row, double centre_col, int size);

    bool operator==(const Region&) const = default;
};

struct FrameMeta {
    std::size_t frame_index = 0;
    double exposure_us = 12.0;
    double acquisition_time_us = 0.0;
    std::string label;
};

/// Non-negative photocount image plus acquisition metadata. Immutable after construction.
class Frame {
public:
    /// Throws ConfigError for an empty matrix or any negative / non-finite count.
    explicit Frame(Matrix counts, FrameMeta meta = {});

    const Matrix& counts() const noexcept { return counts_; }
    const FrameMeta& meta() const noexcept { return meta_; }
    std::size_t height() const noexcept { return counts_.rows(); }
    std::size_t width() const noexcept { return counts_.cols(); }

    Frame with_meta(FrameMeta meta) const { return Frame(counts_, std::move(meta)); }

private:
    Matrix counts_;
    FrameMeta meta_;
};

/// Pump/probe pulse timing: A = pump-to-probe delay, B = probe width, C = pump tail.
struct PulseTiming {
    double a_us = 6.0;
    double b_us = 1.0;
    double c_us = 3.0;

    double pump_width_us() const noexcept { return a_us + b_us + c_us; }
};

struct FrameSequence {
    std::vector<Frame> frames;
    double inter_frame_interval_us = 0.0;
    PulseTiming timing;

    /// Checks identical frame dimensions and non-decreasing acquisition times.
    void validate() const;
    /// validate() plus at least two frames.
    void validate_for_subtraction() const;
};

/// Signed spatial photocount fluctuations left after a two-frame subtraction.
struct FluctuationImage {
    Matrix values;
    std::string source;  // "<first frame>-<second frame>"
    double rescale_factor = 1.0;
};

Matrix crop(const Matrix& m, const Region& region);
Frame crop(const Frame& frame, const Region& region);

}  // namespace twinbeam
