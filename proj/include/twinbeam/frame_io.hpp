#pragma once

#include "twinbeam/frame.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace twinbeam {

enum class FrameFormat {
    pgm16,  // "P5\n<w> <h>\n65535\n" + big-endian 16-bit samples
    csv,    // comma-separated rows, LF endings, no header
};

FrameFormat format_from_extension(const std::filesystem::path& path);
std::string extension_for(FrameFormat format);

Frame read_frame(const std::filesystem::path& path, FrameFormat format);
Frame read_frame(const std::filesystem::path& path);  // format from extension

/// pgm16 requires integral counts <= 65535 (FormatError otherwise).
void write_frame(const Frame& frame, const std::filesystem::path& path, FrameFormat format);

/// Signed matrices (fluctuation images, correlation maps) always go through csv.
void write_matrix_csv(const Matrix& m, const std::filesystem::path& path);
Matrix read_matrix_csv(const std::filesystem::path& path);

/// True when every count is an integer in [0, 65535].
bool fits_pgm16(const Matrix& counts);

// Sequence directories hold one file per frame plus "manifest.ini".
inline constexpr const char* manifest_filename = "manifest.ini";

/// Writes the frames and the manifest. File names are frame_000.<ext>, frame_001.<ext>, ...
void write_sequence(const FrameSequence& seq, const std::filesystem::path& dir, FrameFormat format);

/// Reads a sequence directory via its manifest; frame metadata comes from the manifest.
FrameSequence read_sequence(const std::filesystem::path& dir);

}  // namespace twinbeam
