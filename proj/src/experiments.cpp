#include "twinbeam/experiments.hpp"

#include "twinbeam/error.hpp"
#include "twinbeam/frame_io.hpp"
#include "twinbeam/svg.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace twinbeam {

double frame_interval(double shift_ns_per_row, int rows, double exposure_us)
{
    if (!(shift_ns_per_row > 0.0) || rows <= 0 || !(exposure_us > 0.0))
        throw ConfigError("frame_interval inputs must be positive");
    return shift_ns_per_row * rows / 1000.0 + exposure_us;
}

PhotonFlux photon_flux(double total_counts, double pulse_width_us, double gain)
{
    if (!(total_counts > 0.0) || !(pulse_width_us > 0.0) || !(gain >= 1.0))
        throw ConfigError("photon_flux needs positive counts and pulse width and gain >= 1");
    PhotonFlux f;
    f.flux = total_counts * 1e6 / pulse_width_us;
    f.correlated_flux = f.flux * (gain - 1.0) / gain;
    return f;
}

namespace {

constexpr std::pair<ExperimentKind, const char*> kind_names[] = {
    {ExperimentKind::coherent_calibration, "coherent_calibration"},
    {ExperimentKind::gain_sweep, "gain_sweep"},
    {ExperimentKind::background_study, "background_study"},
    {ExperimentKind::delay_sweep, "delay_sweep"},
    {ExperimentKind::interval_sweep, "interval_sweep"},
    {ExperimentKind::noise_emulation, "noise_emulation"},
    {ExperimentKind::coherence_measurement, "coherence_measurement"},
};

std::vector<std::size_t> to_sizes(const std::vector<double>& v, const std::string& key)
{
    std::vector<std::size_t> out;
    for (double x : v) {
        if (!(x >= 1.0) || x != std::floor(x)) throw ConfigError(key + " entries must be positive integers");
        out.push_back(static_cast<std::size_t>(x));
    }
    return out;
}

std::vector<double> to_doubles(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

std::vector<std::filesystem::path> split_paths(const std::string& text)
{
    std::vector<std::filesystem::path> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.emplace_back(item.substr(b, e - b + 1));
    }
    return out;
}

std::string join_paths(const std::vector<std::filesystem::path>& paths)
{
    std::string out;
    for (const auto& p : paths) {
        if (!out.empty()) out += ',';
        out += p.generic_string();
    }
    return out;
}

std::vector<double> list_or(const KeyValueDocument& doc, const char* key, const std::vector<double>& fallback)
{
    const auto v = doc.get("experiment", key);
    return v ? parse_double_list(*v, std::string("experiment.") + key) : fallback;
}

std::size_t positive_size(long v, const std::string& key)
{
    if (v < 1) throw ConfigError(key + " must be >= 1");
    return static_cast<std::size_t>(v);
}

Region hint_region(const BeamGeometry& g, bool probe, int size)
{
    return probe ? g.probe_region(size) : g.conjugate_region(size);
}

void write_text(const std::filesystem::path& path, const std::string& text, RunReport& report)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
    if (!out) throw ConfigError("write failed for " + path.string());
    report.files.push_back(path);
}

std::string csv_line(const std::vector<double>& values)
{
    return join_doubles(values) + "\n";
}

std::string comment_block(const std::vector<std::string>& comments)
{
    std::string out;
    for (const auto& c : comments) out += "# " + c + "\n";
    return out;
}

std::vector<std::string> base_comments(const ExperimentSpec& spec, const std::string& condition)
{
    return {"kind: " + kind_name(spec.kind), "condition: " + condition,
            "shots: " + std::to_string(spec.inputs.empty() ? spec.shots : spec.inputs.size()),
            "rng_seed: " + std::to_string(spec.sim.rng_seed)};
}

std::vector<std::string> condition_comments(const ExperimentSpec& spec, const ConditionResult& r,
                                            const std::string& estimator)
{
    auto c = base_comments(spec, r.condition.name);
    for (const auto& [k, v] : r.condition.parameters) c.push_back(k + ": " + v);
    c.push_back("interval_us: " + format_double(r.condition.interval_us));
    c.push_back("estimator: " + estimator);
    return c;
}

PlotSeries curve_series(const std::string& name, const NoiseRatioCurve& curve)
{
    return {name, curve.bins(), curve.sigmas(), curve.std_errors()};
}

const NoiseRatioEntry* entry_at(const NoiseRatioCurve& curve, std::size_t bin)
{
    for (const auto& e : curve.entries())
        if (e.bin == bin) return &e;
    return nullptr;
}

double mean_clip(const ConditionResult& r)
{
    if (r.shots.empty()) return 0.0;
    double s = 0.0;
    for (const auto& x : r.shots) s += x.clip_fraction;
    return s / static_cast<double>(r.shots.size());
}

std::string offset_list(const std::vector<ShotRecord>& shots, std::pair<int, int> ShotRecord::*member)
{
    std::string out;
    for (const auto& s : shots) {
        const auto& sh = s.*member;
        if (!out.empty()) out += ';';
        out += std::to_string(sh.first) + ":" + std::to_string(sh.second);
    }
    return out;
}

void record_condition(KeyValueDocument& doc, std::size_t index, const ConditionResult& r,
                      const std::vector<std::string>& files)
{
    char section[32];
    std::snprintf(section, sizeof section, "condition_%03zu", index);
    doc.set(section, "name", r.condition.name);
    for (const auto& [k, v] : r.condition.parameters) doc.set(section, k, v);
    doc.set(section, "interval_us", r.condition.interval_us);
    doc.set(section, "seed_photons", r.condition.sim.seed_photons);
    doc.set(section, "status", r.ok ? "ok" : "failed");
    if (!r.ok) doc.set(section, "error", r.error);
    std::string joined;
    for (const auto& f : files) joined += (joined.empty() ? "" : ",") + f;
    doc.set(section, "files", joined);
    if (r.ok) {
        std::vector<double> pr, cr;
        for (const auto& s : r.shots) {
            pr.push_back(s.probe_rescale);
            cr.push_back(s.conjugate_rescale);
        }
        doc.set(section, "probe_rescale", join_doubles(pr));
        doc.set(section, "conjugate_rescale", join_doubles(cr));
        doc.set(section, "probe_shift", offset_list(r.shots, &ShotRecord::probe_shift));
        doc.set(section, "conjugate_shift", offset_list(r.shots, &ShotRecord::conjugate_shift));
        doc.set(section, "probe_crop", offset_list(r.shots, &ShotRecord::probe_crop));
        doc.set(section, "conjugate_crop", offset_list(r.shots, &ShotRecord::conjugate_crop));
        const double clip = mean_clip(r);
        doc.set(section, "clip_fraction", clip);
        if (clip > 0.01) doc.set(section, "clip_warning", "more than 1% of pairs fell outside the frame");
    }
}

std::string fraction_name(const EmulationSpec& e)
{
    return std::string(e.spatial_mode == SpatialMode::pixel ? "pixel_" : "convolved_") + format_double(e.fraction);
}

}  // namespace

std::string kind_name(ExperimentKind kind)
{
    for (const auto& [k, n] : kind_names)
        if (k == kind) return n;
    return "unknown";
}

ExperimentKind parse_kind(const std::string& text)
{
    for (const auto& [k, n] : kind_names)
        if (text == n) return k;
    throw ConfigError("unknown experiment kind '" + text + "'");
}

void ExperimentSpec::validate() const
{
    sim.validate();
    pipeline.validate();
    if (inputs.empty() && shots < 10) throw ConfigError("experiment.shots must be >= 10");
    if (!inputs.empty() && inputs.size() < 2) throw ConfigError("real-data mode needs at least two input sequences");
    if (!background_inputs.empty() && background_inputs.size() != inputs.size())
        throw ConfigError("background_inputs must pair one-to-one with inputs");
    if (workers < 1) throw ConfigError("experiment.workers must be >= 1");
    if (bin_sizes.empty()) throw ConfigError("experiment.bin_sizes must not be empty");
    for (std::size_t i = 0; i < bin_sizes.size(); ++i) {
        if (bin_sizes[i] < 1 || bin_sizes[i] * 2 > static_cast<std::size_t>(pipeline.analysis_crop))
            throw ConfigError("bin size " + std::to_string(bin_sizes[i]) + " leaves fewer than 2x2 superpixels");
        if (i > 0 && bin_sizes[i] <= bin_sizes[i - 1]) throw ConfigError("bin sizes must be strictly increasing");
    }
    const bool summarised = kind == ExperimentKind::gain_sweep || kind == ExperimentKind::background_study ||
                            kind == ExperimentKind::delay_sweep || kind == ExperimentKind::interval_sweep;
    if (summarised && inputs.empty() &&
        std::find(bin_sizes.begin(), bin_sizes.end(), summary_bin) == bin_sizes.end())
        throw ConfigError("experiment.summary_bin must be one of the bin sizes");
    if (probe_counts < 0.0) throw ConfigError("experiment.probe_counts must be >= 0");
    if (!(interval_us >= 0.0)) throw ConfigError("experiment.interval_us must be >= 0");
    for (double g : gains)
        if (!(g >= 1.0)) throw ConfigError("gains must be >= 1");
    for (double q : qes)
        if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("qes must lie in [0, 1]");
    for (double s : signal_levels)
        if (!(s > 0.0)) throw ConfigError("signal levels must be positive");
    for (double d : delays_us)
        if (!(d >= 0.0)) throw ConfigError("delays must be >= 0");
    for (double t : intervals_us)
        if (!(t >= 0.0)) throw ConfigError("intervals must be >= 0");
    EmulationSpec{pixel_fraction, SpatialMode::pixel, kernel_size}.validate();
    for (double f : convolved_fractions) EmulationSpec{f, SpatialMode::convolved, kernel_size}.validate();
    if (kernel_size > static_cast<std::size_t>(pipeline.analysis_crop))
        throw ConfigError("emulation kernel exceeds the analysis crop");
}

ExperimentSpec ExperimentSpec::from_document(const KeyValueDocument& doc)
{
    ExperimentSpec s;
    const char* e = "experiment";
    s.kind = parse_kind(doc.get_or(e, "kind", kind_name(s.kind)));
    s.sim = SimConfig::from_document(doc);
    s.pipeline = PipelineConfig::from_document(doc);
    s.shots = positive_size(doc.get_int(e, "shots", static_cast<long>(s.shots)), "experiment.shots");
    s.bin_sizes = to_sizes(list_or(doc, "bin_sizes", to_doubles(s.bin_sizes)), "experiment.bin_sizes");
    s.output_dir = doc.get_or(e, "output_dir", s.output_dir.generic_string());
    s.workers = positive_size(doc.get_int(e, "workers", static_cast<long>(s.workers)), "experiment.workers");
    s.probe_counts = doc.get_double(e, "probe_counts", s.probe_counts);
    s.interval_us = doc.get_double(e, "interval_us", s.interval_us);
    s.gains = list_or(doc, "gains", s.gains);
    s.qes = list_or(doc, "qes", s.qes);
    s.signal_levels = list_or(doc, "signal_levels", s.signal_levels);
    s.delays_us = list_or(doc, "delays_us", s.delays_us);
    s.intervals_us = list_or(doc, "intervals_us", s.intervals_us);
    s.pixel_fraction = doc.get_double(e, "pixel_fraction", s.pixel_fraction);
    s.convolved_fractions = list_or(doc, "convolved_fractions", s.convolved_fractions);
    s.kernel_size = positive_size(doc.get_int(e, "kernel_size", static_cast<long>(s.kernel_size)), "experiment.kernel_size");
    s.summary_bin = positive_size(doc.get_int(e, "summary_bin", static_cast<long>(s.summary_bin)), "experiment.summary_bin");
    s.inputs = split_paths(doc.get_or(e, "inputs", ""));
    s.background_inputs = split_paths(doc.get_or(e, "background_inputs", ""));
    return s;
}

void ExperimentSpec::to_document(KeyValueDocument& doc) const
{
    const char* e = "experiment";
    doc.set(e, "kind", kind_name(kind));
    doc.set(e, "shots", static_cast<long>(shots));
    doc.set(e, "bin_sizes", join_doubles(to_doubles(bin_sizes)));
    doc.set(e, "output_dir", output_dir.generic_string());
    doc.set(e, "workers", static_cast<long>(workers));
    doc.set(e, "probe_counts", probe_counts);
    doc.set(e, "interval_us", interval_us);
    doc.set(e, "gains", join_doubles(gains));
    doc.set(e, "qes", join_doubles(qes));
    doc.set(e, "signal_levels", join_doubles(signal_levels));
    doc.set(e, "delays_us", join_doubles(delays_us));
    doc.set(e, "intervals_us", join_doubles(intervals_us));
    doc.set(e, "pixel_fraction", pixel_fraction);
    doc.set(e, "convolved_fractions", join_doubles(convolved_fractions));
    doc.set(e, "kernel_size", static_cast<long>(kernel_size));
    doc.set(e, "summary_bin", static_cast<long>(summary_bin));
    doc.set(e, "inputs", join_paths(inputs));
    doc.set(e, "background_inputs", join_paths(background_inputs));
    sim.to_document(doc);
    pipeline.to_document(doc);
}

void ExperimentSpec::apply_environment()
{
    if (const char* dir = std::getenv("TWINBEAM_OUTPUT_DIR"); dir && *dir) output_dir = dir;
    if (const char* w = std::getenv("TWINBEAM_WORKERS"); w && *w) {
        char* end = nullptr;
        const long v = std::strtol(w, &end, 10);
        if (*end != '\0' || v < 1) throw ConfigError("TWINBEAM_WORKERS must be a positive integer");
        workers = static_cast<std::size_t>(v);
    }
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn)
{
    const std::size_t threads = std::min(std::max<std::size_t>(workers, 1), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

std::vector<Condition> conditions(const ExperimentSpec& spec)
{
    SimConfig base = spec.sim;
    if (spec.probe_counts > 0.0) base.seed_photons = seed_for_probe_counts(base, spec.probe_counts);
    std::vector<Condition> out;
    const auto make = [&](std::string name, SimConfig sim) {
        Condition c;
        c.name = std::move(name);
        c.sim = std::move(sim);
        c.interval_us = spec.interval_us;
        return c;
    };

    if (!spec.inputs.empty()) {
        Condition c = make("data", base);
        c.background_correction = !spec.background_inputs.empty();
        out.push_back(std::move(c));
        return out;
    }
    switch (spec.kind) {
    case ExperimentKind::coherent_calibration: {
        SimConfig sim = base;
        sim.source = SourceMode::coherent;
        out.push_back(make("coherent", sim));
        break;
    }
    case ExperimentKind::gain_sweep:
        for (double q : spec.qes)
            for (double g : spec.gains) {
                SimConfig sim = base;
                sim.gain = g;
                sim.qe = q;
                Condition c = make("gain" + format_double(g) + "_qe" + format_double(q), sim);
                c.parameters = {{"gain", format_double(g)},
                                {"qe", format_double(q)},
                                {"expected_sigma", format_double(expected_twin_sigma(g, sim.effective_qe()))}};
                out.push_back(std::move(c));
            }
        break;
    case ExperimentKind::background_study:
        for (double level : spec.signal_levels) {
            SimConfig sim = base;
            sim.seed_photons = seed_for_probe_counts(sim, level);
            Condition c = make("signal" + format_double(level), sim);
            c.parameters = {{"probe_counts", format_double(level)},
                            {"background_rate", format_double(sim.background_rate)},
                            {"background_fano", format_double(sim.background_fano)}};
            c.background_correction = true;
            out.push_back(std::move(c));
        }
        break;
    case ExperimentKind::delay_sweep:
        for (double a : spec.delays_us) {
            SimConfig sim = base;
            sim.timing.a_us = a;
            Condition c = make("delay" + format_double(a), sim);
            const auto tg = transient_gain(a, sim);
            c.parameters = {{"delay_us", format_double(a)},
                            {"transient_gain", format_double(tg.gain)},
                            {"transient_excess", format_double(tg.excess_noise)}};
            out.push_back(std::move(c));
        }
        break;
    case ExperimentKind::interval_sweep:
        for (double t : spec.intervals_us) {
            Condition c = make("interval" + format_double(t), base);
            c.interval_us = t;
            c.parameters = {{"tech_amplitude", format_double(base.tech.amplitude)},
                            {"tech_tau_us", format_double(base.tech.tau_us)}};
            out.push_back(std::move(c));
        }
        break;
    case ExperimentKind::noise_emulation:
        out.push_back(make("baseline", base));
        break;
    case ExperimentKind::coherence_measurement:
        out.push_back(make("coherence", base));
        break;
    }
    return out;
}

ConditionResult run_condition(const ExperimentSpec& spec, const Condition& condition, bool keep_pairs)
{
    ConditionResult res;
    res.condition = condition;
    const bool real = !spec.inputs.empty();
    const std::size_t n = real ? spec.inputs.size() : spec.shots;

    struct Slot {
        bool ok = false;
        std::string error;
        NoiseRatioCurve curve;
        std::optional<NoiseRatioCurve> corrected;
        ShotRecord record;
        AlignedPair pair;
    };
    std::vector<Slot> slots(n);
    std::optional<TwinBeamSimulator> sim;
    try {
        spec.validate();
        if (!real) sim.emplace(condition.sim);
    } catch (const std::exception& e) {
        res.error = e.what();
        return res;
    }
    const auto& g = condition.sim.geometry;
    const Region probe_hint = hint_region(g, true, spec.pipeline.coarse_crop);
    const Region conj_hint = hint_region(g, false, spec.pipeline.coarse_crop);

    parallel_for(n, spec.workers, [&](std::size_t i) {
        Slot& slot = slots[i];
        try {
            FrameSequence signal;
            std::optional<FrameSequence> background;
            if (real) {
                signal = read_sequence(spec.inputs[i]);
                if (condition.background_correction) background = read_sequence(spec.background_inputs[i]);
            } else {
                auto shot = sim->sequence(i, 2, condition.interval_us, condition.background_correction);
                slot.record.clip_fraction = shot.clip.fraction();
                signal = std::move(shot.signal);
                if (condition.background_correction) background = std::move(shot.background);
            }
            AlignedPair pair = make_fluctuations(signal, 0, 1, probe_hint, conj_hint, spec.pipeline);
            const Matrix d = difference_image(pair);
            const Matrix s = sum_image(pair);
            slot.curve = noise_ratio_curve(d, s, spec.bin_sizes);
            if (background) {
                const AlignedPair bg = apply_alignment(pair, *background, 0, 1);
                slot.corrected = noise_ratio_bg_curve(d, s, difference_image(bg), sum_image(bg), spec.bin_sizes);
            }
            slot.record.probe_rescale = pair.rescale_used;
            slot.record.conjugate_rescale = pair.conjugate_rescale;
            slot.record.probe_shift = pair.probe_shift;
            slot.record.conjugate_shift = pair.conjugate_shift;
            slot.record.probe_crop = {pair.probe_region.row, pair.probe_region.col};
            slot.record.conjugate_crop = {pair.conjugate_region.row, pair.conjugate_region.col};
            if (keep_pairs) slot.pair = std::move(pair);
            slot.ok = true;
        } catch (const std::exception& e) {
            slot.error = e.what();
        }
    });

    for (std::size_t i = 0; i < n; ++i) {
        if (!slots[i].ok) {
            res.error = "shot " + std::to_string(i) + ": " + slots[i].error;
            return res;
        }
    }
    std::vector<NoiseRatioCurve> corrected;
    for (auto& slot : slots) {
        res.shot_curves.push_back(std::move(slot.curve));
        if (slot.corrected) corrected.push_back(std::move(*slot.corrected));
        res.shots.push_back(slot.record);
        if (keep_pairs) res.pairs.push_back(std::move(slot.pair));
    }
    try {
        res.curve = aggregate_curves(res.shot_curves);
        if (!corrected.empty()) res.corrected = aggregate_curves(corrected);
    } catch (const std::exception& e) {
        res.error = e.what();
        return res;
    }
    res.ok = true;
    return res;
}

EmulationStudy run_emulation(const ExperimentSpec& spec)
{
    EmulationStudy study;
    const auto conds = conditions(spec);
    study.baseline = run_condition(spec, conds.front(), true);
    if (!study.baseline.ok) return study;
    std::vector<EmulationSpec> specs{{spec.pixel_fraction, SpatialMode::pixel, spec.kernel_size}};
    for (double f : spec.convolved_fractions) specs.push_back({f, SpatialMode::convolved, spec.kernel_size});
    for (const auto& es : specs) {
        try {
            study.results.emplace_back(es, emulate(study.baseline.pairs, es, study.baseline.pairs.size(),
                                                   spec.sim.rng_seed, spec.bin_sizes));
        } catch (const std::exception& e) {
            study.errors.push_back(fraction_name(es) + ": " + e.what());
        }
    }
    return study;
}

CoherenceStudy run_coherence(const ExperimentSpec& spec)
{
    CoherenceStudy study;
    const auto conds = conditions(spec);
    const auto base = run_condition(spec, conds.front(), true);
    if (!base.ok) {
        study.error = base.error;
        return study;
    }
    try {
        const auto& first = base.pairs.front().probe_fluct.values;
        const int max_shift = static_cast<int>(std::min(first.rows(), first.cols()) / 4);
        std::vector<Matrix> maps(base.pairs.size());
        parallel_for(maps.size(), spec.workers, [&](std::size_t i) {
            maps[i] = cross_correlation_map(base.pairs[i].probe_fluct.values, base.pairs[i].conj_fluct_rotated.values,
                                            max_shift);
        });
        Matrix total = maps.front();
        for (std::size_t i = 1; i < maps.size(); ++i) total = total + maps[i];
        study.estimate = coherence_from_map((1.0 / static_cast<double>(maps.size())) * total);
        study.shots = maps.size();
        study.ok = true;
    } catch (const std::exception& e) {
        study.error = e.what();
    }
    return study;
}

RunReport run(const ExperimentSpec& spec)
{
    spec.validate();
    RunReport report;
    const auto& dir = spec.output_dir;
    std::filesystem::create_directories(dir);
    KeyValueDocument manifest;
    spec.to_document(manifest);
    const std::string kind = kind_name(spec.kind);
    PlotOptions curve_plot{kind + ": noise ratio vs superpixel size", "superpixel size n (px)", "sigma", true, 1.0};
    std::vector<PlotSeries> series;
    std::size_t index = 0;

    const auto write_curve = [&](const ConditionResult& r, const std::string& suffix, const NoiseRatioCurve& curve,
                                 const std::string& estimator) {
        const std::string file = r.condition.name + suffix + ".csv";
        write_text(dir / file, curve.to_csv(condition_comments(spec, r, estimator)), report);
        return file;
    };

    if (spec.kind == ExperimentKind::noise_emulation && spec.inputs.empty()) {
        const auto study = run_emulation(spec);
        std::vector<std::string> files;
        if (study.baseline.ok) {
            files.push_back(write_curve(study.baseline, "", study.baseline.curve, "difference noise ratio"));
            series.push_back(curve_series("baseline", study.baseline.curve));
        } else {
            ++report.failed_conditions;
        }
        record_condition(manifest, index++, study.baseline, files);
        if (study.baseline.ok) {
            std::string uplift = comment_block(base_comments(spec, "uplift"));
            uplift += "bin";
            for (const auto& [es, res] : study.results)
                uplift += "," + fraction_name(es) + "_uplift," + fraction_name(es) + "_stderr";
            uplift += "\n";
            for (std::size_t b = 0; b < spec.bin_sizes.size(); ++b) {
                std::vector<double> row{static_cast<double>(spec.bin_sizes[b])};
                for (const auto& [es, res] : study.results) {
                    std::vector<double> u;
                    for (const auto& shot : res.uplift) u.push_back(shot[b]);
                    const auto [m, se] = mean_and_sem(u);
                    row.push_back(m);
                    row.push_back(se);
                }
                uplift += csv_line(row);
            }
            for (const auto& [es, res] : study.results) {
                const std::string name = fraction_name(es);
                auto comments = base_comments(spec, name);
                comments.push_back("fraction: " + format_double(es.fraction));
                comments.push_back(std::string("spatial_mode: ") +
                                   (es.spatial_mode == SpatialMode::pixel ? "pixel" : "convolved"));
                comments.push_back("kernel_size: " + std::to_string(es.kernel_size));
                write_text(dir / (name + ".csv"), res.emulated.to_csv(comments), report);
                series.push_back(curve_series(name, res.emulated));
                manifest.set("emulation", name, name + ".csv");
            }
            for (const auto& err : study.errors) {
                manifest.set("emulation", "error_" + std::to_string(report.failed_conditions), err);
                ++report.failed_conditions;
            }
            write_text(dir / "uplift.csv", uplift, report);
        }
    } else if (spec.kind == ExperimentKind::coherence_measurement && spec.inputs.empty()) {
        const auto study = run_coherence(spec);
        manifest.set("coherence", "status", study.ok ? "ok" : "failed");
        if (!study.ok) {
            manifest.set("coherence", "error", study.error);
            ++report.failed_conditions;
        } else {
            const auto& est = study.estimate;
            auto comments = base_comments(spec, "coherence");
            comments.push_back("fwhm_rows: " + format_double(est.fwhm_rows));
            comments.push_back("fwhm_cols: " + format_double(est.fwhm_cols));
            comments.push_back("peak_value: " + format_double(est.peak_value));
            comments.push_back("peak_offset: " + std::to_string(est.peak_offset.first) + "," +
                               std::to_string(est.peak_offset.second));
            comments.push_back("noise_floor: " + format_double(est.noise_floor));
            std::string profile = comment_block(comments) + "offset,row_profile,column_profile\n";
            const auto pr = static_cast<std::size_t>(est.peak_offset.first + est.max_shift);
            const auto pc = static_cast<std::size_t>(est.peak_offset.second + est.max_shift);
            PlotSeries rows_s{"along rows", {}, {}, {}}, cols_s{"along columns", {}, {}, {}};
            for (std::size_t k = 0; k < est.correlation_map.rows(); ++k) {
                const double off = static_cast<double>(k) - est.max_shift;
                profile += csv_line({off, est.correlation_map(k, pc), est.correlation_map(pr, k)});
                rows_s.x.push_back(off);
                rows_s.y.push_back(est.correlation_map(k, pc));
                cols_s.x.push_back(off);
                cols_s.y.push_back(est.correlation_map(pr, k));
            }
            write_text(dir / "coherence_profile.csv", profile, report);
            std::string map = comment_block(comments);
            for (std::size_t r = 0; r < est.correlation_map.rows(); ++r) {
                const auto row = est.correlation_map.row(r);
                map += csv_line(std::vector<double>(row.begin(), row.end()));
            }
            write_text(dir / "coherence_map.csv", map, report);
            PlotOptions opt{"cross-correlation through the peak", "offset (px)", "normalized correlation", false,
                            0.0};
            write_text(dir / "coherence.svg", line_plot_svg({rows_s, cols_s}, opt), report);
            manifest.set("coherence", "fwhm_rows", est.fwhm_rows);
            manifest.set("coherence", "fwhm_cols", est.fwhm_cols);
            manifest.set("coherence", "shots", static_cast<long>(study.shots));
        }
    } else {
        std::vector<ConditionResult> results;
        for (const auto& c : conditions(spec)) results.push_back(run_condition(spec, c));
        std::string summary;
        PlotSeries summary_raw{"sigma at n=" + std::to_string(spec.summary_bin), {}, {}, {}};
        PlotSeries summary_corr{"background corrected", {}, {}, {}};
        for (const auto& r : results) {
            std::vector<std::string> files;
            if (r.ok) {
                files.push_back(write_curve(r, "", r.curve, "difference noise ratio"));
                series.push_back(curve_series(r.condition.name, r.curve));
                if (r.corrected) {
                    files.push_back(write_curve(r, "_corrected", *r.corrected, "background-subtracted noise ratio"));
                    series.push_back(curve_series(r.condition.name + " corrected", *r.corrected));
                }
            } else {
                ++report.failed_conditions;
            }
            record_condition(manifest, index++, r, files);
        }

        // Summary at one bin size against the swept parameter.
        const auto param = [&](const Condition& c) -> std::pair<std::string, double> {
            switch (spec.kind) {
            case ExperimentKind::delay_sweep: return {"delay_us", c.sim.timing.a_us};
            case ExperimentKind::interval_sweep: return {"interval_us", c.interval_us};
            default: return {"", 0.0};
            }
        };
        const bool sweep = spec.inputs.empty() &&
                           (spec.kind == ExperimentKind::delay_sweep || spec.kind == ExperimentKind::interval_sweep ||
                            spec.kind == ExperimentKind::background_study || spec.kind == ExperimentKind::gain_sweep);
        if (sweep) {
            auto comments = base_comments(spec, "summary");
            comments.push_back("bin: " + std::to_string(spec.summary_bin));
            summary = comment_block(comments);
            if (spec.kind == ExperimentKind::gain_sweep) summary += "gain,qe,sigma,stderr,expected_sigma\n";
            else if (spec.kind == ExperimentKind::background_study)
                summary += "probe_counts,sigma,stderr,corrected_sigma,corrected_stderr\n";
            else summary += param(results.front().condition).first + ",sigma,stderr\n";
            for (std::size_t k = 0; k < results.size(); ++k) {
                const auto& r = results[k];
                const auto* e = r.ok ? entry_at(r.curve, spec.summary_bin) : nullptr;
                const double sigma = e ? e->sigma : std::nan("");
                const double se = e ? e->std_error : std::nan("");
                double x = 0.0;
                if (spec.kind == ExperimentKind::gain_sweep) {
                    const double g = r.condition.sim.gain, q = r.condition.sim.qe;
                    summary += csv_line({g, q, sigma, se, expected_twin_sigma(g, r.condition.sim.effective_qe())});
                    continue;
                }
                if (spec.kind == ExperimentKind::background_study) {
                    x = spec.signal_levels[k];
                    const auto* c = r.ok && r.corrected ? entry_at(*r.corrected, spec.summary_bin) : nullptr;
                    summary += csv_line({x, sigma, se, c ? c->sigma : std::nan(""), c ? c->std_error : std::nan("")});
                    summary_corr.x.push_back(x);
                    summary_corr.y.push_back(c ? c->sigma : std::nan(""));
                    summary_corr.y_error.push_back(c ? c->std_error : 0.0);
                } else {
                    x = param(r.condition).second;
                    summary += csv_line({x, sigma, se});
                }
                summary_raw.x.push_back(x);
                summary_raw.y.push_back(sigma);
                summary_raw.y_error.push_back(std::isfinite(se) ? se : 0.0);
            }
            write_text(dir / "summary.csv", summary, report);
            if (spec.kind != ExperimentKind::gain_sweep) {
                std::vector<PlotSeries> s{summary_raw};
                if (spec.kind == ExperimentKind::background_study) s.push_back(summary_corr);
                const std::string xl = spec.kind == ExperimentKind::delay_sweep      ? "pump-probe delay A (us)"
                                       : spec.kind == ExperimentKind::interval_sweep ? "inter-frame interval t (us)"
                                                                                     : "probe counts";
                PlotOptions opt{kind + ": sigma at n=" + std::to_string(spec.summary_bin), xl, "sigma",
                                spec.kind == ExperimentKind::background_study, 1.0};
                write_text(dir / (kind + "_summary.svg"), line_plot_svg(s, opt), report);
            }
        }
    }
    if (!series.empty()) write_text(dir / (kind + ".svg"), line_plot_svg(series, curve_plot), report);

    std::string files;
    for (const auto& f : report.files) files += (files.empty() ? "" : ",") + f.filename().generic_string();
    manifest.set("run", "files", files);
    manifest.set("run", "failed_conditions", static_cast<long>(report.failed_conditions));
    manifest.save(dir / "manifest.ini");
    report.files.push_back(dir / "manifest.ini");
    return report;
}

}  // namespace twinbeam
