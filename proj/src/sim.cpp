#include "twinbeam/sim.hpp"

#include "twinbeam/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace twinbeam {

namespace {

constexpr double fwhm_per_sigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

bool is_integral(double x) { return std::abs(x - std::round(x)) < 1e-9; }

void require(bool ok, const std::string& message)
{
    if (!ok) throw ConfigError(message);
}

Matrix gaussian_profile(int rows, int cols, double cr, double cc, double fwhm)
{
    Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    const double s = fwhm / fwhm_per_sigma;
    const double inv = 1.0 / (2.0 * s * s);
    for (int r = 0; r < rows; ++r) {
        const double dr = r - cr;
        for (int c = 0; c < cols; ++c) {
            const double dc = c - cc;
            m(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = std::exp(-(dr * dr + dc * dc) * inv);
        }
    }
    return m;
}

double region_sum(const Matrix& m, const Region& region) { return sum(crop(m, region)); }

// Separable convolution with a symmetric odd kernel; samples outside the frame are zero.
Matrix convolve_separable(const Matrix& m, const std::vector<double>& kernel)
{
    const int radius = static_cast<int>(kernel.size() / 2);
    const int rows = static_cast<int>(m.rows());
    const int cols = static_cast<int>(m.cols());
    Matrix tmp(m.rows(), m.cols());
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0;
            const int d0 = std::max(-radius, -c);
            const int d1 = std::min(radius, cols - 1 - c);
            for (int d = d0; d <= d1; ++d)
                acc += kernel[static_cast<std::size_t>(d + radius)] * m(static_cast<std::size_t>(r), static_cast<std::size_t>(c + d));
            tmp(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
        }
    }
    Matrix out(m.rows(), m.cols());
    for (int r = 0; r < rows; ++r) {
        const int d0 = std::max(-radius, -r);
        const int d1 = std::min(radius, rows - 1 - r);
        for (int c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (int d = d0; d <= d1; ++d)
                acc += kernel[static_cast<std::size_t>(d + radius)] * tmp(static_cast<std::size_t>(r + d), static_cast<std::size_t>(c));
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = acc;
        }
    }
    return out;
}

double smoothstep(double x)
{
    const double t = std::clamp(x, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

const char* source_name(SourceMode m) { return m == SourceMode::coherent ? "coherent" : "twin_beam"; }
const char* profile_name(BackgroundProfile p) { return p == BackgroundProfile::uniform ? "uniform" : "gaussian"; }

}  // namespace

void SimConfig::validate() const
{
    require(gain >= 1.0 && std::isfinite(gain), "sim.gain must be >= 1");
    require(qe >= 0.0 && qe <= 1.0, "sim.qe must lie in [0, 1]");
    require(excess_loss >= 0.0 && excess_loss <= 1.0, "sim.excess_loss must lie in [0, 1]");
    require(seed_photons >= 0.0 && std::isfinite(seed_photons), "sim.seed_photons must be >= 0");
    require(coherence_sigma > 0.0, "sim.coherence_sigma must be positive");
    require(background_rate >= 0.0, "sim.background_rate must be >= 0");
    require(background_fano >= 1.0, "sim.background_fano must be >= 1");
    require(background_fwhm >= 4.0 * geometry.probe_fwhm,
            "sim.background_fwhm must be at least four times the probe FWHM");
    require(tech.amplitude >= 0.0 && tech.amplitude < 0.5, "sim.tech_amplitude must lie in [0, 0.5)");
    require(tech.tau_us > 0.0, "sim.tech_tau_us must be positive");
    require(tech.correlation_px >= 1, "sim.tech_correlation_px must be >= 1");
    require(seed_drift > 0.0, "sim.seed_drift must be positive");
    require(transient_kappa >= 0.0, "sim.transient_kappa must be >= 0");
    require(timing.a_us >= 0.0 && timing.b_us > 0.0 && timing.c_us >= 0.0, "pulse timing must be non-negative");
    require(exposure_us > 0.0, "sim.exposure_us must be positive");
    require(geometry.frame_rows > 0 && geometry.frame_cols > 0, "frame dimensions must be positive");
    require(geometry.probe_fwhm > 0.0, "sim.probe_fwhm must be positive");
    require(is_integral(geometry.probe_row + geometry.conjugate_row) &&
                is_integral(geometry.probe_col + geometry.conjugate_col),
            "probe and conjugate centre coordinates must sum to integers (mirror map is pixel-exact)");
    const auto fr = static_cast<std::size_t>(geometry.frame_rows);
    const auto fc = static_cast<std::size_t>(geometry.frame_cols);
    require(geometry.probe_region(geometry.analysis_size).fits(fr, fc) &&
                geometry.conjugate_region(geometry.analysis_size).fits(fr, fc),
            "analysis regions around the beam centres must lie inside the frame");
}

SimConfig SimConfig::from_document(const KeyValueDocument& doc) { return from_document(doc, SimConfig{}); }

SimConfig SimConfig::from_document(const KeyValueDocument& doc, const SimConfig& defaults)
{
    SimConfig c = defaults;
    const char* s = "sim";
    const auto source = doc.get_or(s, "source", source_name(c.source));
    if (source == "twin_beam") c.source = SourceMode::twin_beam;
    else if (source == "coherent") c.source = SourceMode::coherent;
    else throw ConfigError("sim.source must be twin_beam or coherent, got '" + source + "'");
    c.gain = doc.get_double(s, "gain", c.gain);
    c.seed_photons = doc.get_double(s, "seed_photons", c.seed_photons);
    c.qe = doc.get_double(s, "qe", c.qe);
    c.excess_loss = doc.get_double(s, "excess_loss", c.excess_loss);
    c.coherence_sigma = doc.get_double(s, "coherence_sigma", c.coherence_sigma);
    c.geometry.frame_rows = static_cast<int>(doc.get_int(s, "frame_rows", c.geometry.frame_rows));
    c.geometry.frame_cols = static_cast<int>(doc.get_int(s, "frame_cols", c.geometry.frame_cols));
    c.geometry.probe_row = doc.get_double(s, "probe_row", c.geometry.probe_row);
    c.geometry.probe_col = doc.get_double(s, "probe_col", c.geometry.probe_col);
    c.geometry.conjugate_row = doc.get_double(s, "conjugate_row", c.geometry.conjugate_row);
    c.geometry.conjugate_col = doc.get_double(s, "conjugate_col", c.geometry.conjugate_col);
    c.geometry.probe_fwhm = doc.get_double(s, "probe_fwhm", c.geometry.probe_fwhm);
    c.geometry.analysis_size = static_cast<int>(doc.get_int(s, "analysis_size", c.geometry.analysis_size));
    c.background_rate = doc.get_double(s, "background_rate", c.background_rate);
    c.background_fano = doc.get_double(s, "background_fano", c.background_fano);
    const auto profile = doc.get_or(s, "background_profile", profile_name(c.background_profile));
    if (profile == "gaussian") c.background_profile = BackgroundProfile::gaussian;
    else if (profile == "uniform") c.background_profile = BackgroundProfile::uniform;
    else throw ConfigError("sim.background_profile must be gaussian or uniform, got '" + profile + "'");
    c.background_fwhm = doc.get_double(s, "background_fwhm", c.background_fwhm);
    c.tech.amplitude = doc.get_double(s, "tech_amplitude", c.tech.amplitude);
    c.tech.tau_us = doc.get_double(s, "tech_tau_us", c.tech.tau_us);
    c.tech.correlation_px = static_cast<int>(doc.get_int(s, "tech_correlation_px", c.tech.correlation_px));
    c.seed_drift = doc.get_double(s, "seed_drift", c.seed_drift);
    c.em_excess_noise = doc.get_bool(s, "em_excess_noise", c.em_excess_noise);
    c.transient_kappa = doc.get_double(s, "transient_kappa", c.transient_kappa);
    c.timing.a_us = doc.get_double(s, "pulse_a_us", c.timing.a_us);
    c.timing.b_us = doc.get_double(s, "pulse_b_us", c.timing.b_us);
    c.timing.c_us = doc.get_double(s, "pulse_c_us", c.timing.c_us);
    c.exposure_us = doc.get_double(s, "exposure_us", c.exposure_us);
    const long seed = doc.get_int(s, "rng_seed", static_cast<long>(c.rng_seed));
    if (seed < 0) throw ConfigError("sim.rng_seed must be non-negative");
    c.rng_seed = static_cast<std::uint64_t>(seed);
    c.validate();
    return c;
}

void SimConfig::to_document(KeyValueDocument& doc) const
{
    const char* s = "sim";
    doc.set(s, "source", source_name(source));
    doc.set(s, "gain", gain);
    doc.set(s, "seed_photons", seed_photons);
    doc.set(s, "qe", qe);
    doc.set(s, "excess_loss", excess_loss);
    doc.set(s, "coherence_sigma", coherence_sigma);
    doc.set(s, "frame_rows", geometry.frame_rows);
    doc.set(s, "frame_cols", geometry.frame_cols);
    doc.set(s, "probe_row", geometry.probe_row);
    doc.set(s, "probe_col", geometry.probe_col);
    doc.set(s, "conjugate_row", geometry.conjugate_row);
    doc.set(s, "conjugate_col", geometry.conjugate_col);
    doc.set(s, "probe_fwhm", geometry.probe_fwhm);
    doc.set(s, "analysis_size", geometry.analysis_size);
    doc.set(s, "background_rate", background_rate);
    doc.set(s, "background_fano", background_fano);
    doc.set(s, "background_profile", profile_name(background_profile));
    doc.set(s, "background_fwhm", background_fwhm);
    doc.set(s, "tech_amplitude", tech.amplitude);
    doc.set(s, "tech_tau_us", tech.tau_us);
    doc.set(s, "tech_correlation_px", tech.correlation_px);
    doc.set(s, "seed_drift", seed_drift);
    doc.set(s, "em_excess_noise", em_excess_noise);
    doc.set(s, "transient_kappa", transient_kappa);
    doc.set(s, "pulse_a_us", timing.a_us);
    doc.set(s, "pulse_b_us", timing.b_us);
    doc.set(s, "pulse_c_us", timing.c_us);
    doc.set(s, "exposure_us", exposure_us);
    doc.set(s, "rng_seed", static_cast<long>(rng_seed));
}

TransientGain transient_gain(double delay_us, const SimConfig& cfg)
{
    if (!(delay_us >= 0.0)) throw ConfigError("pump-probe delay must be >= 0");
    const double s = smoothstep((delay_us - 1.0) / 5.0);
    return {1.0 + (cfg.gain - 1.0) * s, cfg.transient_kappa * (1.0 - s)};
}

TwinBeamSimulator::TwinBeamSimulator(SimConfig cfg) : cfg_(std::move(cfg))
{
    cfg_.validate();
    transient_ = transient_gain(cfg_.timing.a_us, cfg_);
    const auto& g = cfg_.geometry;
    profile_ = gaussian_profile(g.frame_rows, g.frame_cols, g.probe_row, g.probe_col, g.probe_fwhm);
    profile_ = (1.0 / sum(profile_)) * profile_;

    const auto bg_profile = [&](double cr, double cc) {
        Matrix p = cfg_.background_profile == BackgroundProfile::uniform
                       ? Matrix(static_cast<std::size_t>(g.frame_rows), static_cast<std::size_t>(g.frame_cols), 1.0)
                       : gaussian_profile(g.frame_rows, g.frame_cols, cr, cc, cfg_.background_fwhm);
        const double region = region_sum(p, Region::centred(cr, cc, g.analysis_size));
        return (cfg_.background_rate / region) * p;
    };
    probe_bg_profile_ = bg_profile(g.probe_row, g.probe_col);
    conjugate_bg_profile_ = bg_profile(g.conjugate_row, g.conjugate_col);

    kernel_ = pixel_gaussian_kernel(std::sqrt(2.0) * cfg_.coherence_sigma);
    kernel_radius_ = static_cast<int>(kernel_.size() / 2);
    offsets_ = AliasTable(kernel_);
    mirror_row_sum_ = static_cast<int>(std::lround(g.probe_row + g.conjugate_row));
    mirror_col_sum_ = static_cast<int>(std::lround(g.probe_col + g.conjugate_col));
}

double TwinBeamSimulator::expected_probe_counts() const
{
    const auto& g = cfg_.geometry;
    const double frac = region_sum(profile_, g.probe_region(g.analysis_size));
    return cfg_.effective_qe() * transient_.gain * cfg_.seed_photons * frac;
}

PulsePair TwinBeamSimulator::pulse_pair(std::uint64_t shot, std::uint64_t frame, double scale,
                                        const Matrix& modulation) const
{
    const auto& g = cfg_.geometry;
    const auto rows = static_cast<std::size_t>(g.frame_rows);
    const auto cols = static_cast<std::size_t>(g.frame_cols);
    if (!modulation.empty() && (modulation.rows() != rows || modulation.cols() != cols)) {
        throw ConfigError("modulation field must match the frame size");
    }
    const double eta = cfg_.effective_qe();
    const double gain = transient_.gain;
    const double excess = transient_.excess_noise;
    const std::uint64_t seed = cfg_.rng_seed;

    // Source intensity (seed photons per pixel) including technical modulation.
    Matrix source(rows, cols);
    for (std::size_t i = 0; i < source.size(); ++i) {
        const double m = modulation.empty() ? 1.0 : std::max(0.0, 1.0 + modulation.values()[i]);
        source.values()[i] = cfg_.seed_photons * scale * profile_.values()[i] * m;
    }

    Matrix probe(rows, cols);
    Matrix conj(rows, cols);
    ClipTally clip;
    const auto mirror = [&](int r, int c) { return std::make_pair(mirror_row_sum_ - r, mirror_col_sum_ - c); };
    const auto inside = [&](int r, int c) { return r >= 0 && c >= 0 && r < g.frame_rows && c < g.frame_cols; };

    if (cfg_.source == SourceMode::coherent) {
        Engine rp = make_engine(seed, shot, frame, Purpose::coherent_probe);
        Engine rc = make_engine(seed, shot, frame, Purpose::coherent_conjugate);
        for (int r = 0; r < g.frame_rows; ++r)
            for (int c = 0; c < g.frame_cols; ++c) {
                const double mu = eta * gain * source(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
                probe(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = draw_excess_poisson(rp, mu, excess);
                const auto [mr, mc] = mirror(r, c);
                if (inside(mr, mc)) {
                    conj(static_cast<std::size_t>(mr), static_cast<std::size_t>(mc)) = draw_excess_poisson(rc, mu, excess);
                }
            }
        return {Frame(std::move(probe)), Frame(std::move(conj)), clip};
    }

    const double pair_rate = gain - 1.0;
    Engine r_unc = make_engine(seed, shot, frame, Purpose::probe_uncorrelated);
    Engine r_pairs = make_engine(seed, shot, frame, Purpose::pairs);
    SplitMix64 r_offsets(stream_key(seed, shot, frame, Purpose::pair_offsets));
    Engine r_singles = make_engine(seed, shot, frame, Purpose::conjugate_uncorrelated);

    Matrix mirrored_pairs(rows, cols);  // pair rate at the mirror image of each probe pixel
    for (int r = 0; r < g.frame_rows; ++r) {
        for (int c = 0; c < g.frame_cols; ++c) {
            const double i_p = source(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
            const double lambda = pair_rate * i_p;
            double count = draw_excess_poisson(r_unc, eta * i_p + eta * (1.0 - eta) * lambda, excess);
            const auto [mr, mc] = mirror(r, c);
            if (inside(mr, mc)) mirrored_pairs(static_cast<std::size_t>(mr), static_cast<std::size_t>(mc)) = lambda;
            const auto joint = static_cast<std::uint64_t>(draw_poisson(r_pairs, eta * eta * lambda));
            count += static_cast<double>(joint);
            probe(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = count;
            clip.pairs += joint;
            for (std::uint64_t k = 0; k < joint; ++k) {
                const std::uint64_t bits = r_offsets();
                const int dr = static_cast<int>(offsets_.sample(static_cast<std::uint32_t>(bits >> 32))) - kernel_radius_;
                const int dc = static_cast<int>(offsets_.sample(static_cast<std::uint32_t>(bits))) - kernel_radius_;
                const int qr = mr + dr;
                const int qc = mc + dc;
                if (inside(qr, qc)) {
                    conj(static_cast<std::size_t>(qr), static_cast<std::size_t>(qc)) += 1.0;
                } else {
                    ++clip.clipped;
                }
            }
        }
    }

    // Conjugate photons whose probe partner was lost share the pair spread.
    if (eta < 1.0) {
        const Matrix singles_rate = convolve_separable(mirrored_pairs, kernel_);
        const double f = eta * (1.0 - eta);
        for (std::size_t i = 0; i < conj.size(); ++i) {
            conj.values()[i] += draw_excess_poisson(r_singles, f * singles_rate.values()[i], excess);
        }
    }
    return {Frame(std::move(probe)), Frame(std::move(conj)), clip};
}

std::pair<Frame, Frame> TwinBeamSimulator::background(std::uint64_t shot, std::uint64_t frame,
                                                      bool signal_frame) const
{
    // Signal and background-only frames draw from disjoint frame keys.
    const std::uint64_t key = frame * 2 + (signal_frame ? 0 : 1);
    Engine rp = make_engine(cfg_.rng_seed, shot, key, Purpose::background_probe);
    Engine rc = make_engine(cfg_.rng_seed, shot, key, Purpose::background_conjugate);
    const double excess = cfg_.background_fano - 1.0;
    Matrix p(probe_bg_profile_.rows(), probe_bg_profile_.cols());
    Matrix c(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p.values()[i] = draw_excess_poisson(rp, probe_bg_profile_.values()[i], excess);
        c.values()[i] = draw_excess_poisson(rc, conjugate_bg_profile_.values()[i], excess);
    }
    return {Frame(std::move(p)), Frame(std::move(c))};
}

std::vector<Matrix> TwinBeamSimulator::technical_noise(std::uint64_t shot, std::size_t n_frames, double t_us) const
{
    std::vector<Matrix> fields(n_frames);
    if (cfg_.tech.amplitude <= 0.0) return fields;
    const auto rows = static_cast<std::size_t>(cfg_.geometry.frame_rows);
    const auto cols = static_cast<std::size_t>(cfg_.geometry.frame_cols);
    const auto k = static_cast<std::size_t>(cfg_.tech.correlation_px);
    const double norm = static_cast<double>(k) * cfg_.tech.amplitude;
    const double rho = std::exp(-t_us / cfg_.tech.tau_us);
    const double innovation = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (std::size_t f = 0; f < n_frames; ++f) {
        Engine rng = make_engine(cfg_.rng_seed, shot, f, Purpose::technical);
        std::normal_distribution<double> normal;
        Matrix white(rows, cols);
        for (double& v : white.values()) v = normal(rng);
        Matrix fresh = norm * box_average(white, k);
        fields[f] = f == 0 ? std::move(fresh) : rho * fields[f - 1] + innovation * fresh;
    }
    return fields;
}

Matrix TwinBeamSimulator::apply_em(const Matrix& counts, std::uint64_t shot, std::uint64_t frame,
                                   std::uint64_t lane) const
{
    if (!cfg_.em_excess_noise) return counts;
    Engine rng = make_engine(cfg_.rng_seed, shot, frame * 2 + lane, Purpose::em_gain);
    Matrix out(counts.rows(), counts.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = draw_em_gain(rng, counts.values()[i]);
    return out;
}

SimulatedShot TwinBeamSimulator::sequence(std::uint64_t shot, std::size_t n_frames, double t_us,
                                          bool with_background) const
{
    if (n_frames < 2) throw ConfigError("a sequence needs at least two frames");
    if (!(t_us >= 0.0)) throw ConfigError("inter-frame interval must be >= 0");
    SimulatedShot out;
    out.signal.inter_frame_interval_us = t_us;
    out.signal.timing = cfg_.timing;
    out.background.inter_frame_interval_us = t_us;
    out.background.timing = cfg_.timing;
    const auto fields = technical_noise(shot, n_frames, t_us);
    double scale = 1.0;
    for (std::size_t f = 0; f < n_frames; ++f) {
        FrameMeta meta;
        meta.frame_index = f;
        meta.exposure_us = cfg_.exposure_us;
        meta.acquisition_time_us = static_cast<double>(f) * t_us;
        meta.label = "signal";
        const auto pair = pulse_pair(shot, f, scale, fields[f]);
        out.clip += pair.clip;
        Matrix camera = pair.probe.counts() + pair.conjugate.counts();
        if (cfg_.background_rate > 0.0) {
            const auto [bp, bc] = background(shot, f, true);
            camera = camera + bp.counts() + bc.counts();
        }
        out.signal.frames.emplace_back(apply_em(camera, shot, f, 0), meta);
        if (with_background) {
            meta.label = "background";
            Matrix bg(camera.rows(), camera.cols());
            if (cfg_.background_rate > 0.0) {
                const auto [bp, bc] = background(shot, f, false);
                bg = bp.counts() + bc.counts();
            }
            out.background.frames.emplace_back(apply_em(bg, shot, f, 1), meta);
        }
        scale *= cfg_.seed_drift;
    }
    return out;
}

PulsePair generate_pulse_pair(const SimConfig& cfg, std::uint64_t shot, std::uint64_t frame)
{
    return TwinBeamSimulator(cfg).pulse_pair(shot, frame);
}

SimulatedShot generate_sequence(const SimConfig& cfg, std::size_t n_frames, double t_us, std::uint64_t shot,
                                bool with_background)
{
    return TwinBeamSimulator(cfg).sequence(shot, n_frames, t_us, with_background);
}

std::pair<Frame, Frame> generate_background(const SimConfig& cfg, std::uint64_t shot, std::uint64_t frame)
{
    return TwinBeamSimulator(cfg).background(shot, frame, false);
}

double seed_for_probe_counts(const SimConfig& cfg, double probe_counts)
{
    SimConfig unit = cfg;
    unit.seed_photons = 1.0;
    const double per_seed = TwinBeamSimulator(unit).expected_probe_counts();
    if (!(per_seed > 0.0)) throw ConfigError("configuration detects no probe light");
    return probe_counts / per_seed;
}

double coherence_sigma_for_fwhm(double fwhm_px) { return fwhm_px / (fwhm_per_sigma * std::sqrt(2.0)); }

double expected_twin_sigma(double gain, double qe) { return 1.0 - qe + qe / (2.0 * gain - 1.0); }

}  // namespace twinbeam
