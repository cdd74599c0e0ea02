#include "twinbeam/pipeline.hpp"

#include "twinbeam/error.hpp"
#include "twinbeam/frame_io.hpp"
#include "twinbeam/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace twinbeam {

namespace {

const char* rescale_name(RescaleMode m)
{
    switch (m) {
    case RescaleMode::auto_per_beam: return "auto";
    case RescaleMode::auto_probe: return "auto_probe";
    case RescaleMode::fixed: return "fixed";
    case RescaleMode::off: return "off";
    }
    return "auto";
}

double median_of(std::vector<double> v)
{
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    return v[mid];
}

std::string region_text(const Region& r)
{
    return std::to_string(r.row) + "," + std::to_string(r.col) + "," + std::to_string(r.height) + "," +
           std::to_string(r.width);
}

}  // namespace

void PipelineConfig::validate() const
{
    if (analysis_crop < 2) throw ConfigError("pipeline.analysis_crop must be >= 2");
    if (analysis_crop > coarse_crop) throw ConfigError("pipeline.analysis_crop must not exceed coarse_crop");
    if (search_radius < 0 || 2 * search_radius >= coarse_crop) {
        throw ConfigError("pipeline.search_radius must be >= 0 and below coarse_crop / 2");
    }
    if (rescale_mode == RescaleMode::fixed && !(fixed_rescale > 0.0)) {
        throw ConfigError("pipeline.rescale value must be positive");
    }
    if (locate_window < 0) throw ConfigError("pipeline.locate_window must be >= 0");
}

PipelineConfig PipelineConfig::from_document(const KeyValueDocument& doc)
{
    return from_document(doc, PipelineConfig{});
}

PipelineConfig PipelineConfig::from_document(const KeyValueDocument& doc, const PipelineConfig& defaults)
{
    PipelineConfig c = defaults;
    const char* s = "pipeline";
    c.coarse_crop = static_cast<int>(doc.get_int(s, "coarse_crop", c.coarse_crop));
    c.analysis_crop = static_cast<int>(doc.get_int(s, "analysis_crop", c.analysis_crop));
    c.search_radius = static_cast<int>(doc.get_int(s, "search_radius", c.search_radius));
    c.locate_window = static_cast<int>(doc.get_int(s, "locate_window", c.locate_window));
    const auto mode = doc.get_or(s, "rescale_mode", rescale_name(c.rescale_mode));
    if (mode == "auto") c.rescale_mode = RescaleMode::auto_per_beam;
    else if (mode == "auto_probe") c.rescale_mode = RescaleMode::auto_probe;
    else if (mode == "fixed") c.rescale_mode = RescaleMode::fixed;
    else if (mode == "off") c.rescale_mode = RescaleMode::off;
    else throw ConfigError("pipeline.rescale_mode must be auto, auto_probe, fixed or off, got '" + mode + "'");
    c.fixed_rescale = doc.get_double(s, "rescale", c.fixed_rescale);
    if (const auto centre = doc.get(s, "rotation_centre")) {
        const auto v = parse_double_list(*centre, "pipeline.rotation_centre");
        if (v.size() != 2) throw ConfigError("pipeline.rotation_centre needs 'row,col'");
        c.rotation_centre = std::make_pair(v[0], v[1]);
    }
    c.validate();
    return c;
}

void PipelineConfig::to_document(KeyValueDocument& doc) const
{
    const char* s = "pipeline";
    doc.set(s, "coarse_crop", coarse_crop);
    doc.set(s, "analysis_crop", analysis_crop);
    doc.set(s, "search_radius", search_radius);
    doc.set(s, "locate_window", locate_window);
    doc.set(s, "rescale_mode", rescale_name(rescale_mode));
    doc.set(s, "rescale", fixed_rescale);
    if (rotation_centre) doc.set(s, "rotation_centre", join_doubles({rotation_centre->first, rotation_centre->second}));
}

BeamLocation locate_beam(const Frame& frame, const Region& hint, int window)
{
    if (window < 1) throw ConfigError("centroid window must be >= 1");
    const Matrix raw = crop(frame.counts(), hint);
    if (raw.size() < 9) throw ConfigError("beam hint region must be at least 3x3");
    const Matrix smooth = box_average(raw, 3);

    const auto values = smooth.values();
    const auto it = std::max_element(values.begin(), values.end());
    const auto index = static_cast<std::size_t>(it - values.begin());

    // Pixel noise from horizontal neighbour differences; smoothing divides it by 3.
    std::vector<double> diffs;
    for (std::size_t r = 0; r < raw.rows(); ++r)
        for (std::size_t c = 1; c < raw.cols(); ++c) diffs.push_back(std::abs(raw(r, c) - raw(r, c - 1)));
    const double pixel_noise = diffs.empty() ? 0.0 : 1.4826 * median_of(diffs) / std::sqrt(2.0);
    const double contrast = *it - median_of(std::vector<double>(values.begin(), values.end()));
    if (!(contrast > 5.0 * pixel_noise / 3.0) || !(contrast > 0.0)) {
        throw AnalysisError("no beam found in hint region " + region_text(hint) + " (peak contrast " +
                            format_double(contrast) + ")");
    }

    const Matrix& counts = frame.counts();
    const int rows = static_cast<int>(counts.rows());
    const int cols = static_cast<int>(counts.cols());
    double row = hint.row + static_cast<double>(index / smooth.cols());
    double col = hint.col + static_cast<double>(index % smooth.cols());
    for (int iter = 0; iter < 50; ++iter) {
        const Region w = Region::centred(row, col, window);
        const int r0 = std::max(0, w.row);
        const int c0 = std::max(0, w.col);
        const int r1 = std::min(rows, w.row + w.height);
        const int c1 = std::min(cols, w.col + w.width);
        double total = 0.0;
        double sr = 0.0;
        double sc = 0.0;
        for (int r = r0; r < r1; ++r)
            for (int c = c0; c < c1; ++c) {
                const double v = counts(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
                total += v;
                sr += v * r;
                sc += v * c;
            }
        if (!(total > 0.0)) throw AnalysisError("beam centroid window holds no counts");
        const double nr = sr / total;
        const double nc = sc / total;
        const double moved = std::abs(nr - row) + std::abs(nc - col);
        row = nr;
        col = nc;
        if (moved < 1e-3) break;
    }
    return {row, col};
}

std::pair<int, int> register_shift(const Matrix& a, const Matrix& b, int radius)
{
    if (!a.same_shape(b)) throw ConfigError("registration needs equally sized images");
    if (radius < 0) throw ConfigError("registration radius must be >= 0");
    const int rows = static_cast<int>(a.rows());
    const int cols = static_cast<int>(a.cols());
    if (2 * radius >= rows || 2 * radius >= cols) throw ConfigError("registration radius too large for the crop");

    struct Integral {
        std::vector<long double> s, s2;
        int cols;
        long double box(const std::vector<long double>& p, int r0, int c0, int r1, int c1) const
        {
            const auto at = [this](int r, int c) { return static_cast<std::size_t>(r * (cols + 1) + c); };
            return p[at(r1, c1)] - p[at(r0, c1)] - p[at(r1, c0)] + p[at(r0, c0)];
        }
    };
    const auto integral = [rows, cols](const Matrix& m) {
        Integral in{std::vector<long double>(static_cast<std::size_t>((rows + 1) * (cols + 1)), 0.0L),
                    std::vector<long double>(static_cast<std::size_t>((rows + 1) * (cols + 1)), 0.0L), cols};
        for (int r = 0; r < rows; ++r) {
            long double run = 0.0L;
            long double run2 = 0.0L;
            for (int c = 0; c < cols; ++c) {
                const long double v = m(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
                run += v;
                run2 += v * v;
                const auto here = static_cast<std::size_t>((r + 1) * (cols + 1) + c + 1);
                const auto above = static_cast<std::size_t>(r * (cols + 1) + c + 1);
                in.s[here] = in.s[above] + run;
                in.s2[here] = in.s2[above] + run2;
            }
        }
        return in;
    };
    const Integral ia = integral(a);
    const Integral ib = integral(b);

    // Candidate order realizes the tie-break: |dr| + |dc|, then dr, then dc.
    std::vector<std::pair<int, int>> shifts;
    for (int dr = -radius; dr <= radius; ++dr)
        for (int dc = -radius; dc <= radius; ++dc) shifts.emplace_back(dr, dc);
    std::stable_sort(shifts.begin(), shifts.end(), [](const auto& x, const auto& y) {
        const int nx = std::abs(x.first) + std::abs(x.second);
        const int ny = std::abs(y.first) + std::abs(y.second);
        if (nx != ny) return nx < ny;
        if (x.first != y.first) return x.first < y.first;
        return x.second < y.second;
    });

    double best = -2.0;
    double best_n = 1.0;
    std::pair<int, int> best_shift{0, 0};
    for (const auto& [dr, dc] : shifts) {
        const int r0 = std::max(0, -dr);
        const int r1 = std::min(rows, rows - dr);
        const int c0 = std::max(0, -dc);
        const int c1 = std::min(cols, cols - dc);
        const double n = static_cast<double>((r1 - r0) * (c1 - c0));
        long double cross = 0.0L;
        for (int r = r0; r < r1; ++r) {
            const double* pa = a.row(static_cast<std::size_t>(r)).data();
            const double* pb = b.row(static_cast<std::size_t>(r + dr)).data();
            double row_sum = 0.0;
            for (int c = c0; c < c1; ++c) row_sum += pa[c] * pb[c + dc];
            cross += row_sum;
        }
        const long double sa = ia.box(ia.s, r0, c0, r1, c1);
        const long double sa2 = ia.box(ia.s2, r0, c0, r1, c1);
        const long double sb = ib.box(ib.s, r0 + dr, c0 + dc, r1 + dr, c1 + dc);
        const long double sb2 = ib.box(ib.s2, r0 + dr, c0 + dc, r1 + dr, c1 + dc);
        const long double cov = cross - sa * sb / n;
        const long double va = sa2 - sa * sa / n;
        const long double vb = sb2 - sb * sb / n;
        const double corr = (va > 0 && vb > 0) ? static_cast<double>(cov / std::sqrt(va * vb)) : 0.0;
        if (corr > best) {
            best = corr;
            best_n = n;
            best_shift = {dr, dc};
        }
    }
    if (!(best > 5.0 / std::sqrt(best_n))) {
        throw AnalysisError("registration failed: correlation surface is flat (best r = " + format_double(best) + ")");
    }
    return best_shift;
}

namespace {

AlignedPair assemble(const FrameSequence& seq, std::size_t frame_i, std::size_t frame_j, AlignedPair pair)
{
    const Matrix& fi = seq.frames[frame_i].counts();
    const Matrix& fj = seq.frames[frame_j].counts();
    const Region pj = pair.probe_region.translated(pair.probe_shift.first, pair.probe_shift.second);
    const Region cj = pair.conjugate_region.translated(pair.conjugate_shift.first, pair.conjugate_shift.second);
    pair.p1 = crop(fi, pair.probe_region);
    pair.p2 = crop(fj, pj);
    pair.c1 = rotate180(crop(fi, pair.conjugate_region));
    pair.c2 = rotate180(crop(fj, cj));
    const std::string source = std::to_string(frame_i) + "-" + std::to_string(frame_j);
    pair.probe_fluct = {pair.p1 - pair.rescale_used * pair.p2, source, pair.rescale_used};
    pair.conj_fluct_rotated = {pair.c1 - pair.conjugate_rescale * pair.c2, source, pair.conjugate_rescale};
    return pair;
}

void check_frames(const FrameSequence& seq, std::size_t frame_i, std::size_t frame_j)
{
    seq.validate_for_subtraction();
    if (frame_i >= seq.frames.size() || frame_j >= seq.frames.size()) {
        throw ConfigError("frame index out of range (sequence has " + std::to_string(seq.frames.size()) + " frames)");
    }
    if (frame_i >= frame_j) throw ConfigError("make_fluctuations needs frame_i < frame_j");
}

}  // namespace

AlignedPair make_fluctuations(const FrameSequence& seq, std::size_t frame_i, std::size_t frame_j,
                              const Region& probe_hint, const Region& conj_hint, const PipelineConfig& cfg)
{
    cfg.validate();
    check_frames(seq, frame_i, frame_j);
    const Frame& fi = seq.frames[frame_i];
    const Frame& fj = seq.frames[frame_j];
    const int window = cfg.locate_window > 0 ? cfg.locate_window : cfg.analysis_crop;

    AlignedPair pair;
    pair.probe_location = locate_beam(fi, probe_hint, window);
    pair.conjugate_location = locate_beam(fi, conj_hint, window);
    if (cfg.rotation_centre) pair.conjugate_location = {cfg.rotation_centre->first, cfg.rotation_centre->second};

    const auto coarse_shift = [&](const BeamLocation& loc) {
        const Region coarse = Region::centred(loc.row, loc.col, cfg.coarse_crop);
        return register_shift(crop(fi.counts(), coarse), crop(fj.counts(), coarse), cfg.search_radius);
    };
    pair.probe_shift = coarse_shift(pair.probe_location);
    pair.conjugate_shift = coarse_shift(pair.conjugate_location);
    pair.probe_region = Region::centred(pair.probe_location.row, pair.probe_location.col, cfg.analysis_crop);
    pair.conjugate_region =
        Region::centred(pair.conjugate_location.row, pair.conjugate_location.col, cfg.analysis_crop);

    const auto factor = [&](const Region& region, std::pair<int, int> shift) {
        return scaling_factor(crop(fi.counts(), region), crop(fj.counts(), region.translated(shift.first, shift.second)));
    };
    switch (cfg.rescale_mode) {
    case RescaleMode::auto_per_beam:
        pair.rescale_used = factor(pair.probe_region, pair.probe_shift);
        pair.conjugate_rescale = factor(pair.conjugate_region, pair.conjugate_shift);
        break;
    case RescaleMode::auto_probe:
        pair.rescale_used = factor(pair.probe_region, pair.probe_shift);
        pair.conjugate_rescale = pair.rescale_used;
        break;
    case RescaleMode::fixed:
        pair.rescale_used = pair.conjugate_rescale = cfg.fixed_rescale;
        break;
    case RescaleMode::off:
        pair.rescale_used = pair.conjugate_rescale = 1.0;
        break;
    }
    for (double f : {pair.rescale_used, pair.conjugate_rescale}) {
        if (f < 0.9 || f > 1.1) {
            throw AnalysisError("rescale factor " + format_double(f) +
                                " outside [0.9, 1.1]; the frame pair looks misconfigured");
        }
    }
    return assemble(seq, frame_i, frame_j, std::move(pair));
}

AlignedPair apply_alignment(const AlignedPair& geometry, const FrameSequence& seq, std::size_t frame_i,
                            std::size_t frame_j)
{
    check_frames(seq, frame_i, frame_j);
    AlignedPair pair;
    pair.rescale_used = geometry.rescale_used;
    pair.conjugate_rescale = geometry.conjugate_rescale;
    pair.probe_shift = geometry.probe_shift;
    pair.conjugate_shift = geometry.conjugate_shift;
    pair.probe_location = geometry.probe_location;
    pair.conjugate_location = geometry.conjugate_location;
    pair.probe_region = geometry.probe_region;
    pair.conjugate_region = geometry.conjugate_region;
    return assemble(seq, frame_i, frame_j, std::move(pair));
}

Matrix difference_image(const AlignedPair& pair) { return pair.probe_fluct.values - pair.conj_fluct_rotated.values; }

Matrix sum_image(const AlignedPair& pair) { return pair.p1 + pair.p2 + pair.c1 + pair.c2; }

void write_aligned_pair(const AlignedPair& pair, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    write_matrix_csv(pair.probe_fluct.values, dir / "probe_fluct.csv");
    write_matrix_csv(pair.conj_fluct_rotated.values, dir / "conj_fluct_rotated.csv");
    KeyValueDocument doc;
    doc.set("aligned_pair", "source", pair.probe_fluct.source);
    doc.set("aligned_pair", "probe_rescale", pair.rescale_used);
    doc.set("aligned_pair", "conjugate_rescale", pair.conjugate_rescale);
    doc.set("aligned_pair", "probe_shift", std::to_string(pair.probe_shift.first) + "," +
                                               std::to_string(pair.probe_shift.second));
    doc.set("aligned_pair", "conjugate_shift", std::to_string(pair.conjugate_shift.first) + "," +
                                                   std::to_string(pair.conjugate_shift.second));
    doc.set("aligned_pair", "probe_location", join_doubles({pair.probe_location.row, pair.probe_location.col}));
    doc.set("aligned_pair", "conjugate_location",
            join_doubles({pair.conjugate_location.row, pair.conjugate_location.col}));
    doc.set("aligned_pair", "probe_region", region_text(pair.probe_region));
    doc.set("aligned_pair", "conjugate_region", region_text(pair.conjugate_region));
    doc.save(dir / "provenance.ini");
}

}  // namespace twinbeam
