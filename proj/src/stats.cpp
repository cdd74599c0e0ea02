#include "twinbeam/stats.hpp"

#include "twinbeam/error.hpp"
#include "twinbeam/keyvalue.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace twinbeam {

Matrix bin(const Matrix& image, std::size_t n)
{
    if (n == 0) throw ConfigError("bin size must be >= 1");
    if (n > image.rows() || n > image.cols()) {
        throw ConfigError("bin size " + std::to_string(n) + " exceeds image " + std::to_string(image.rows()) + "x" +
                          std::to_string(image.cols()));
    }
    if (n == 1) return image;
    const std::size_t out_rows = image.rows() / n;
    const std::size_t out_cols = image.cols() / n;
    Matrix out(out_rows, out_cols);
    for (std::size_t r = 0; r < out_rows * n; ++r) {
        const auto src = image.row(r);
        for (std::size_t c = 0; c < out_cols * n; ++c) out(r / n, c / n) += src[c];
    }
    return out;
}

namespace {

struct BinnedMoments {
    double variance = 0.0;
    double mean_sum = 0.0;
    std::size_t count = 0;
};

BinnedMoments binned_moments(const Matrix& d, const Matrix& s, std::size_t n)
{
    if (!d.same_shape(s)) throw ConfigError("noise ratio: difference and sum images differ in shape");
    const Matrix bd = bin(d, n);
    const std::size_t count = bd.size();
    if (count < 4) {
        throw ConfigError("bin size " + std::to_string(n) + " leaves " + std::to_string(count) +
                          " superpixels; at least 4 are required");
    }
    return {sample_variance(bd.values()), mean(bin(s, n)), count};
}

Matrix difference(const Matrix& p1, const Matrix& p2, const Matrix& c1, const Matrix& c2, double rescale)
{
    if (!(rescale > 0.0)) throw ConfigError("rescale factor must be positive");
    if (!p1.same_shape(p2) || !p1.same_shape(c1) || !p1.same_shape(c2)) {
        throw ConfigError("noise ratio: the four crops must share dimensions");
    }
    Matrix d(p1.rows(), p1.cols());
    auto out = d.values();
    const auto a = p1.values();
    const auto b = p2.values();
    const auto c = c1.values();
    const auto e = c2.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (a[i] - rescale * b[i]) - (c[i] - rescale * e[i]);
    return d;
}

Matrix four_sum(const Matrix& p1, const Matrix& p2, const Matrix& c1, const Matrix& c2)
{
    return p1 + p2 + c1 + c2;
}

}  // namespace

NoiseRatio noise_ratio_from_parts(const Matrix& d, const Matrix& s, std::size_t n)
{
    const auto m = binned_moments(d, s, n);
    if (m.mean_sum == 0.0 || !std::isfinite(m.mean_sum)) throw AnalysisError("noise ratio: zero denominator");
    const double sigma = m.variance / m.mean_sum;
    return {sigma, std::abs(sigma) * std::sqrt(2.0 / static_cast<double>(m.count - 1)), m.count};
}

NoiseRatio noise_ratio(const Matrix& p1, const Matrix& p2, const Matrix& c1, const Matrix& c2, std::size_t n,
                       double rescale)
{
    return noise_ratio_from_parts(difference(p1, p2, c1, c2, rescale), four_sum(p1, p2, c1, c2), n);
}

NoiseRatio noise_ratio(const Frame& p1, const Frame& p2, const Frame& c1, const Frame& c2, std::size_t n,
                       double rescale)
{
    return noise_ratio(p1.counts(), p2.counts(), c1.counts(), c2.counts(), n, rescale);
}

NoiseRatio noise_ratio_bg_from_parts(const Matrix& d, const Matrix& s, const Matrix& db, const Matrix& sb,
                                     std::size_t n)
{
    if (!d.same_shape(db)) throw ConfigError("background crops must match the signal analysis region");
    const auto sig = binned_moments(d, s, n);
    const auto bg = binned_moments(db, sb, n);
    const double denominator = sig.mean_sum - bg.mean_sum;
    if (!(denominator > 0.0)) {
        throw AnalysisError("background-subtracted noise ratio: denominator " + format_double(denominator) +
                            " is not positive (signal indistinguishable from background)");
    }
    const double k = std::sqrt(2.0 / static_cast<double>(sig.count - 1));
    const double se = std::hypot(sig.variance * k, bg.variance * k) / denominator;
    return {(sig.variance - bg.variance) / denominator, se, sig.count};
}

NoiseRatio noise_ratio_bg(const Matrix& p1, const Matrix& p2, const Matrix& c1, const Matrix& c2, const Matrix& pb1,
                          const Matrix& pb2, const Matrix& cb1, const Matrix& cb2, std::size_t n, double rescale)
{
    return noise_ratio_bg_from_parts(difference(p1, p2, c1, c2, rescale), four_sum(p1, p2, c1, c2),
                                     difference(pb1, pb2, cb1, cb2, rescale), four_sum(pb1, pb2, cb1, cb2), n);
}

NoiseRatioCurve::NoiseRatioCurve(std::vector<NoiseRatioEntry> entries) : entries_(std::move(entries))
{
    for (std::size_t i = 1; i < entries_.size(); ++i) {
        if (entries_[i].bin <= entries_[i - 1].bin) throw ConfigError("curve bin sizes must be strictly increasing");
    }
}

const NoiseRatioEntry& NoiseRatioCurve::at_bin(std::size_t bin) const
{
    for (const auto& e : entries_)
        if (e.bin == bin) return e;
    throw ConfigError("curve has no entry for bin " + std::to_string(bin));
}

std::vector<double> NoiseRatioCurve::sigmas() const
{
    std::vector<double> out;
    for (const auto& e : entries_) out.push_back(e.sigma);
    return out;
}

std::vector<double> NoiseRatioCurve::std_errors() const
{
    std::vector<double> out;
    for (const auto& e : entries_) out.push_back(e.std_error);
    return out;
}

std::vector<double> NoiseRatioCurve::bins() const
{
    std::vector<double> out;
    for (const auto& e : entries_) out.push_back(static_cast<double>(e.bin));
    return out;
}

std::string NoiseRatioCurve::to_csv(const std::vector<std::string>& comments) const
{
    std::string out;
    for (const auto& c : comments) out += "# " + c + '\n';
    out += "bin,sigma,stderr,count\n";
    for (const auto& e : entries_) {
        out += std::to_string(e.bin) + ',' + format_double(e.sigma) + ',' + format_double(e.std_error) + ',' +
               std::to_string(e.count) + '\n';
    }
    return out;
}

void NoiseRatioCurve::write_csv(const std::filesystem::path& path, const std::vector<std::string>& comments) const
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << to_csv(comments);
}

NoiseRatioCurve NoiseRatioCurve::parse_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    std::size_t line_number = 0;
    bool header_seen = false;
    std::vector<NoiseRatioEntry> entries;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "bin,sigma,stderr,count") {
                throw FormatError("line " + std::to_string(line_number) + ": expected header bin,sigma,stderr,count");
            }
            header_seen = true;
            continue;
        }
        const std::string context = "line " + std::to_string(line_number);
        const auto fields = parse_double_list(line, context);
        if (fields.size() != 4) throw FormatError(context + ": expected 4 fields");
        entries.push_back({static_cast<std::size_t>(fields[0]), fields[1], fields[2],
                           static_cast<std::size_t>(fields[3])});
    }
    if (!header_seen) throw FormatError("missing curve header");
    return NoiseRatioCurve(std::move(entries));
}

NoiseRatioCurve NoiseRatioCurve::read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_csv(buffer.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

NoiseRatioCurve noise_ratio_curve(const Matrix& d, const Matrix& s, const std::vector<std::size_t>& bins)
{
    std::vector<NoiseRatioEntry> entries;
    for (std::size_t n : bins) {
        const auto r = noise_ratio_from_parts(d, s, n);
        entries.push_back({n, r.sigma, r.std_error, r.superpixel_count});
    }
    return NoiseRatioCurve(std::move(entries));
}

NoiseRatioCurve noise_ratio_bg_curve(const Matrix& d, const Matrix& s, const Matrix& db, const Matrix& sb,
                                     const std::vector<std::size_t>& bins)
{
    std::vector<NoiseRatioEntry> entries;
    for (std::size_t n : bins) {
        const auto r = noise_ratio_bg_from_parts(d, s, db, sb, n);
        entries.push_back({n, r.sigma, r.std_error, r.superpixel_count});
    }
    return NoiseRatioCurve(std::move(entries));
}

NoiseRatioCurve aggregate_curves(const std::vector<NoiseRatioCurve>& shots)
{
    if (shots.size() < 2) throw ConfigError("aggregating a curve needs at least two shots");
    const auto& first = shots.front().entries();
    std::vector<NoiseRatioEntry> entries;
    for (std::size_t k = 0; k < first.size(); ++k) {
        std::vector<double> values;
        for (const auto& shot : shots) {
            if (shot.size() != first.size() || shot.entries()[k].bin != first[k].bin) {
                throw ConfigError("cannot aggregate curves with different bin sizes");
            }
            values.push_back(shot.entries()[k].sigma);
        }
        const auto [m, sem] = mean_and_sem(values);
        entries.push_back({first[k].bin, m, sem, first[k].count});
    }
    return NoiseRatioCurve(std::move(entries));
}

Matrix cross_correlation_map(const Matrix& fp, const Matrix& fc, int max_shift)
{
    if (!fp.same_shape(fc)) throw ConfigError("cross-correlation needs equally sized images");
    if (max_shift < 0) throw ConfigError("cross-correlation shift range must be non-negative");
    const int rows = static_cast<int>(fp.rows());
    const int cols = static_cast<int>(fp.cols());
    if (max_shift >= rows || max_shift >= cols) throw ConfigError("cross-correlation shift exceeds image size");

    const double ma = mean(fp);
    const double mb = mean(fc);
    Matrix a(fp.rows(), fp.cols());
    Matrix b(fc.rows(), fc.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        a.values()[i] = fp.values()[i] - ma;
        b.values()[i] = fc.values()[i] - mb;
    }
    // Integral images of the squares give overlap energies in O(1).
    const auto integral = [rows, cols](const Matrix& m) {
        std::vector<long double> p(static_cast<std::size_t>((rows + 1) * (cols + 1)), 0.0L);
        for (int r = 0; r < rows; ++r) {
            long double run = 0.0L;
            for (int c = 0; c < cols; ++c) {
                const double v = m(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
                run += static_cast<long double>(v) * v;
                p[static_cast<std::size_t>((r + 1) * (cols + 1) + c + 1)] =
                    p[static_cast<std::size_t>(r * (cols + 1) + c + 1)] + run;
            }
        }
        return p;
    };
    const auto ia = integral(a);
    const auto ib = integral(b);
    const auto box = [cols](const std::vector<long double>& p, int r0, int c0, int r1, int c1) {
        const auto at = [cols](int r, int c) { return static_cast<std::size_t>(r * (cols + 1) + c); };
        return p[at(r1, c1)] - p[at(r0, c1)] - p[at(r1, c0)] + p[at(r0, c0)];
    };

    const int size = 2 * max_shift + 1;
    Matrix map(static_cast<std::size_t>(size), static_cast<std::size_t>(size));
    for (int u = -max_shift; u <= max_shift; ++u) {
        const int r0 = std::max(0, -u);
        const int r1 = std::min(rows, rows - u);
        for (int v = -max_shift; v <= max_shift; ++v) {
            const int c0 = std::max(0, -v);
            const int c1 = std::min(cols, cols - v);
            double cross = 0.0;
            for (int r = r0; r < r1; ++r) {
                const double* pa = a.row(static_cast<std::size_t>(r)).data();
                const double* pb = b.row(static_cast<std::size_t>(r + u)).data();
                for (int c = c0; c < c1; ++c) cross += pa[c] * pb[c + v];
            }
            const long double ea = box(ia, r0, c0, r1, c1);
            const long double eb = box(ib, r0 + u, c0 + v, r1 + u, c1 + v);
            const double norm = std::sqrt(static_cast<double>(ea * eb));
            map(static_cast<std::size_t>(u + max_shift), static_cast<std::size_t>(v + max_shift)) =
                norm > 0.0 ? cross / norm : 0.0;
        }
    }
    return map;
}

namespace {

double median_of(std::vector<double> v)
{
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
}

// Width at half height of a 1D profile through index `peak`.
double half_width(const std::vector<double>& profile, std::size_t peak, const char* axis)
{
    const double half = 0.5 * profile[peak];
    double right = -1.0;
    for (std::size_t i = peak + 1; i < profile.size(); ++i) {
        if (profile[i] < half) {
            right = static_cast<double>(i - 1) + (profile[i - 1] - half) / (profile[i - 1] - profile[i]);
            break;
        }
    }
    double left = -1.0;
    for (std::size_t i = peak; i-- > 0;) {
        if (profile[i] < half) {
            left = static_cast<double>(i + 1) - (profile[i + 1] - half) / (profile[i + 1] - profile[i]);
            break;
        }
    }
    if (right < 0.0 || left < 0.0) {
        throw AnalysisError(std::string("correlation peak does not fall to half height along the ") + axis +
                            " within the shift range");
    }
    return right - left;
}

}  // namespace

CoherenceEstimate coherence_from_map(const Matrix& map)
{
    if (map.rows() != map.cols() || map.rows() % 2 == 0) throw ConfigError("correlation map must be square and odd");
    const auto values = map.values();
    const auto it = std::max_element(values.begin(), values.end());
    const auto index = static_cast<std::size_t>(it - values.begin());
    CoherenceEstimate est;
    est.correlation_map = map;
    est.max_shift = static_cast<int>(map.rows() / 2);
    est.peak_value = *it;
    if (!std::isfinite(est.peak_value)) throw AnalysisError("correlation peak is not finite");
    const std::size_t pr = index / map.cols();
    const std::size_t pc = index % map.cols();
    est.peak_offset = {static_cast<int>(pr) - est.max_shift, static_cast<int>(pc) - est.max_shift};

    std::vector<double> all(values.begin(), values.end());
    const double med = median_of(all);
    for (double& v : all) v = std::abs(v - med);
    est.noise_floor = 1.4826 * median_of(all);
    if (!(est.peak_value > 5.0 * est.noise_floor) || !(est.peak_value > 0.0)) {
        throw AnalysisError("no significant correlation peak: peak " + format_double(est.peak_value) +
                            " vs noise floor " + format_double(est.noise_floor));
    }

    std::vector<double> row_profile(map.row(pr).begin(), map.row(pr).end());
    std::vector<double> col_profile(map.rows());
    for (std::size_t r = 0; r < map.rows(); ++r) col_profile[r] = map(r, pc);
    est.fwhm_cols = half_width(row_profile, pc, "columns");
    est.fwhm_rows = half_width(col_profile, pr, "rows");
    return est;
}

CoherenceEstimate coherence_area(const Matrix& fp, const Matrix& fc)
{
    const int max_shift = static_cast<int>(std::min(fp.rows(), fp.cols()) / 4);
    return coherence_from_map(cross_correlation_map(fp, fc, max_shift));
}

ModeCount mode_count(const Region& region, double fwhm_rows, double fwhm_cols, double pulse_width_us,
                     double bandwidth_mhz, double total_counts)
{
    if (region.area() <= 0 || !(fwhm_rows > 0.0) || !(fwhm_cols > 0.0) || !(pulse_width_us > 0.0) ||
        !(bandwidth_mhz > 0.0) || !(total_counts > 0.0)) {
        throw ConfigError("mode_count inputs must all be positive");
    }
    ModeCount m;
    m.spatial_modes = static_cast<double>(region.area()) / (fwhm_rows * fwhm_cols);
    m.temporal_modes = pulse_width_us * bandwidth_mhz;
    m.photons_per_mode = total_counts / (m.spatial_modes * m.temporal_modes);
    return m;
}

double scaling_factor(const Matrix& p1, const Matrix& p2)
{
    if (!p1.same_shape(p2)) throw ConfigError("scaling factor needs equally sized crops");
    const double a = sum(p1);
    const double b = sum(p2);
    if (!(b > 0.0)) throw AnalysisError("scaling factor: second-frame total is zero");
    if (!(a > 0.0)) throw AnalysisError("scaling factor: first-frame total is zero");
    return a / b;
}

double scaling_factor(const Frame& p1, const Frame& p2, const Region& region)
{
    return scaling_factor(crop(p1.counts(), region), crop(p2.counts(), region));
}

std::vector<double> isotonic_decreasing(const std::vector<double>& values, const std::vector<double>& weights)
{
    if (values.size() != weights.size()) throw ConfigError("isotonic fit: values and weights differ in length");
    struct Block {
        double value;
        double weight;
        std::size_t length;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(weights[i] > 0.0)) throw ConfigError("isotonic fit: weights must be positive");
        blocks.push_back({values[i], weights[i], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].value < blocks.back().value) {
            const Block b = blocks.back();
            blocks.pop_back();
            Block& a = blocks.back();
            const double w = a.weight + b.weight;
            a.value = (a.value * a.weight + b.value * b.weight) / w;
            a.weight = w;
            a.length += b.length;
        }
    }
    std::vector<double> fit;
    for (const auto& b : blocks) fit.insert(fit.end(), b.length, b.value);
    return fit;
}

std::pair<double, double> mean_and_sem(const std::vector<double>& values)
{
    if (values.size() < 2) throw ConfigError("standard error needs at least two values");
    const double m = mean(values);
    return {m, std::sqrt(sample_variance(values) / static_cast<double>(values.size()))};
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("slope needs two equally long series");
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw ConfigError("slope undefined for constant x");
    return sxy / sxx;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("rank correlation needs two equally long series");
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double mx = mean(rx);
    const double my = mean(ry);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace twinbeam
