#include "twinbeam/frame_io.hpp"

#include "twinbeam/error.hpp"
#include "twinbeam/keyvalue.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace twinbeam {

namespace fs = std::filesystem;

FrameFormat format_from_extension(const fs::path& path)
{
    const auto ext = path.extension().string();
    if (ext == ".pgm") return FrameFormat::pgm16;
    if (ext == ".csv") return FrameFormat::csv;
    throw ConfigError("cannot infer frame format from extension '" + ext + "' of " + path.string());
}

std::string extension_for(FrameFormat format) { return format == FrameFormat::pgm16 ? ".pgm" : ".csv"; }

namespace {

std::string read_all(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Header token reader for netpbm: skips whitespace and '#' comments.
class PgmHeader {
public:
    PgmHeader(const std::string& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

    long next_number(const char* what)
    {
        skip_space_and_comments();
        const std::size_t start = pos_;
        long value = 0;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
            value = value * 10 + (bytes_[pos_] - '0');
            if (value > 1'000'000'000L) fail(start, std::string(what) + " is too large");
            ++pos_;
        }
        if (pos_ == start) fail(start, std::string("expected ") + what);
        return value;
    }

    void expect_magic()
    {
        if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != '5') fail(0, "missing P5 magic number");
        pos_ = 2;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_start()
    {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) fail(pos_, "expected whitespace after maxval");
        return pos_ + 1;
    }

    [[noreturn]] void fail(std::size_t offset, const std::string& message) const
    {
        throw FormatError(path_.string() + ": byte offset " + std::to_string(offset) + ": " + message);
    }

private:
    void skip_space_and_comments()
    {
        while (pos_ < bytes_.size()) {
            if (is_space(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    const std::string& bytes_;
    const fs::path& path_;
    std::size_t pos_ = 0;
};

Matrix read_pgm(const fs::path& path)
{
    const std::string bytes = read_all(path);
    PgmHeader header(bytes, path);
    header.expect_magic();
    const long width = header.next_number("width");
    const long height = header.next_number("height");
    const long maxval = header.next_number("maxval");
    if (width <= 0 || height <= 0) header.fail(2, "width and height must be positive");
    if (maxval <= 0 || maxval > 65535) header.fail(2, "maxval must be in 1..65535");
    const std::size_t start = header.raster_start();
    const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
    const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() < start + count * sample_bytes) {
        header.fail(bytes.size(), "truncated raster: expected " + std::to_string(count * sample_bytes) +
                                      " bytes after offset " + std::to_string(start));
    }
    Matrix m(static_cast<std::size_t>(height), static_cast<std::size_t>(width));
    auto values = m.values();
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t offset = start + i * sample_bytes;
        long sample = static_cast<unsigned char>(bytes[offset]);
        if (sample_bytes == 2) sample = (sample << 8) | static_cast<unsigned char>(bytes[offset + 1]);
        if (sample > maxval) {
            header.fail(offset, "sample " + std::to_string(sample) + " exceeds maxval " + std::to_string(maxval));
        }
        values[i] = static_cast<double>(sample);
    }
    return m;
}

Matrix parse_csv(const fs::path& path, bool require_nonnegative)
{
    const std::string text = read_all(path);
    std::vector<double> values;
    std::size_t cols = 0;
    std::size_t rows = 0;
    std::size_t line_number = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string_view line(text.data() + pos, end - pos);
        pos = end + 1;
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        const std::string context = path.string() + ": line " + std::to_string(line_number);
        const auto row = parse_double_list(line, context);
        if (rows == 0) {
            cols = row.size();
        } else if (row.size() != cols) {
            throw FormatError(context + ": row has " + std::to_string(row.size()) + " values, expected " +
                              std::to_string(cols));
        }
        for (double v : row) {
            if (!std::isfinite(v)) throw FormatError(context + ": non-finite value");
            if (require_nonnegative && v < 0.0) throw FormatError(context + ": negative count");
        }
        values.insert(values.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows == 0 || cols == 0) throw FormatError(path.string() + ": no data rows");
    return Matrix(rows, cols, std::move(values));
}

void write_csv_text(const Matrix& m, const fs::path& path)
{
    std::string out;
    out.reserve(m.size() * 8);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) out += ',';
            out += format_double(m(r, c));
        }
        out += '\n';
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw ConfigError("cannot write " + path.string());
    file << out;
}

}  // namespace

bool fits_pgm16(const Matrix& counts)
{
    for (double v : counts.values()) {
        if (!(v >= 0.0 && v <= 65535.0) || v != std::floor(v)) return false;
    }
    return true;
}

Frame read_frame(const fs::path& path, FrameFormat format)
{
    Matrix counts = format == FrameFormat::pgm16 ? read_pgm(path) : parse_csv(path, true);
    return Frame(std::move(counts));
}

Frame read_frame(const fs::path& path) { return read_frame(path, format_from_extension(path)); }

void write_frame(const Frame& frame, const fs::path& path, FrameFormat format)
{
    if (format == FrameFormat::csv) {
        write_csv_text(frame.counts(), path);
        return;
    }
    const Matrix& m = frame.counts();
    const auto values = m.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = values[i];
        if (v > 65535.0 || v != std::floor(v)) {
            throw FormatError("pgm16 cannot hold count " + format_double(v) + " at pixel (" +
                              std::to_string(i / m.cols()) + ", " + std::to_string(i % m.cols()) +
                              "); use csv for non-integral or large data");
        }
    }
    std::string out = "P5\n" + std::to_string(m.cols()) + " " + std::to_string(m.rows()) + "\n65535\n";
    out.reserve(out.size() + values.size() * 2);
    for (double v : values) {
        const auto sample = static_cast<std::uint16_t>(v);
        out += static_cast<char>(sample >> 8);
        out += static_cast<char>(sample & 0xFF);
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw ConfigError("cannot write " + path.string());
    file << out;
}

void write_matrix_csv(const Matrix& m, const fs::path& path) { write_csv_text(m, path); }

Matrix read_matrix_csv(const fs::path& path) { return parse_csv(path, false); }

void write_sequence(const FrameSequence& seq, const fs::path& dir, FrameFormat format)
{
    seq.validate();
    fs::create_directories(dir);
    KeyValueDocument manifest;
    manifest.set("sequence", "frame_count", static_cast<long>(seq.frames.size()));
    manifest.set("sequence", "format", format == FrameFormat::pgm16 ? "pgm16" : "csv");
    manifest.set("sequence", "inter_frame_interval_us", seq.inter_frame_interval_us);
    manifest.set("sequence", "exposure_us", seq.frames.empty() ? 0.0 : seq.frames.front().meta().exposure_us);
    manifest.set("sequence", "pulse_a_us", seq.timing.a_us);
    manifest.set("sequence", "pulse_b_us", seq.timing.b_us);
    manifest.set("sequence", "pulse_c_us", seq.timing.c_us);
    for (std::size_t k = 0; k < seq.frames.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03zu", k);
        const std::string file = std::string(name) + extension_for(format);
        write_frame(seq.frames[k], dir / file, format);
        const auto& meta = seq.frames[k].meta();
        manifest.set(name, "file", file);
        manifest.set(name, "label", meta.label);
        manifest.set(name, "exposure_us", meta.exposure_us);
        manifest.set(name, "acquisition_time_us", meta.acquisition_time_us);
    }
    manifest.save(dir / manifest_filename);
}

FrameSequence read_sequence(const fs::path& dir)
{
    const auto manifest = KeyValueDocument::load(dir / manifest_filename);
    FrameSequence seq;
    seq.inter_frame_interval_us = manifest.get_double("sequence", "inter_frame_interval_us", 0.0);
    seq.timing.a_us = manifest.get_double("sequence", "pulse_a_us", seq.timing.a_us);
    seq.timing.b_us = manifest.get_double("sequence", "pulse_b_us", seq.timing.b_us);
    seq.timing.c_us = manifest.get_double("sequence", "pulse_c_us", seq.timing.c_us);
    const double exposure = manifest.get_double("sequence", "exposure_us", 12.0);
    const long count = manifest.get_int("sequence", "frame_count", -1);
    if (count < 0) throw ConfigError((dir / manifest_filename).string() + ": missing sequence.frame_count");
    for (long k = 0; k < count; ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03ld", k);
        const auto file = manifest.get(name, "file");
        if (!file) throw ConfigError((dir / manifest_filename).string() + ": missing " + name + ".file");
        FrameMeta meta;
        meta.frame_index = static_cast<std::size_t>(k);
        meta.exposure_us = manifest.get_double(name, "exposure_us", exposure);
        meta.acquisition_time_us =
            manifest.get_double(name, "acquisition_time_us", static_cast<double>(k) * seq.inter_frame_interval_us);
        meta.label = manifest.get_or(name, "label", "");
        seq.frames.push_back(read_frame(dir / *file).with_meta(std::move(meta)));
    }
    seq.validate();
    return seq;
}

}  // namespace twinbeam
