#include "twinbeam/frame.hpp"

#include "twinbeam/error.hpp"

#include <cmath>
#include <string>

namespace twinbeam {

bool Region::fits(std::size_t rows, std::size_t cols) const noexcept
{
    return height > 0 && width > 0 && row >= 0 && col >= 0 &&
           static_cast<std::size_t>(row) + static_cast<std::size_t>(height) <= rows &&
           static_cast<std::size_t>(col) + static_cast<std::size_t>(width) <= cols;
}

Region Region::centred(double centre_row, double centre_col, int size)
{
    const double half = (size - 1) / 2.0;
    return {static_cast<int>(std::lround(centre_row - half)), static_cast<int>(std::lround(centre_col - half)), size,
            size};
}

Frame::Frame(Matrix counts, FrameMeta meta) : counts_(std::move(counts)), meta_(std::move(meta))
{
    if (counts_.empty()) throw ConfigError("frame must have at least one pixel");
    const auto v = counts_.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i]) || v[i] < 0.0) {
            throw ConfigError("frame pixel (" + std::to_string(i / counts_.cols()) + ", " +
                              std::to_string(i % counts_.cols()) + ") has invalid count " + std::to_string(v[i]));
        }
    }
    if (!(meta_.exposure_us > 0.0)) throw ConfigError("frame exposure must be positive");
}

void FrameSequence::validate() const
{
    for (std::size_t k = 1; k < frames.size(); ++k) {
        if (frames[k].height() != frames[0].height() || frames[k].width() != frames[0].width()) {
            throw ConfigError("frame " + std::to_string(k) + " dimensions differ from frame 0");
        }
        if (frames[k].meta().acquisition_time_us < frames[k - 1].meta().acquisition_time_us) {
            throw ConfigError("acquisition time decreases at frame " + std::to_string(k));
        }
    }
}

void FrameSequence::validate_for_subtraction() const
{
    if (frames.size() < 2) throw ConfigError("subtraction analysis needs at least two frames");
    validate();
}

Matrix crop(const Matrix& m, const Region& region)
{
    if (!region.fits(m.rows(), m.cols())) {
        throw ConfigError("crop region (" + std::to_string(region.row) + ", " + std::to_string(region.col) + ") " +
                          std::to_string(region.height) + "x" + std::to_string(region.width) + " outside " +
                          std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " frame");
    }
    return submatrix(m, static_cast<std::size_t>(region.row), static_cast<std::size_t>(region.col),
                     static_cast<std::size_t>(region.height), static_cast<std::size_t>(region.width));
}

Frame crop(const Frame& frame, const Region& region)
{
    return Frame(crop(frame.counts(), region), frame.meta());
}

}  // namespace twinbeam
