// Command-line driver: simulate, analyze, sweep, emulate-noise, coherence, timing.

#include "twinbeam/error.hpp"
#include "twinbeam/experiments.hpp"
#include "twinbeam/frame_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

using namespace twinbeam;

namespace {

struct SpecFlags {
    std::string config;
    std::optional<std::string> kind;
    std::optional<std::size_t> shots;
    std::optional<std::string> output;
    std::optional<std::size_t> workers;
    std::optional<std::uint64_t> seed;
    std::optional<double> probe_counts;
    std::optional<double> interval;
    std::vector<std::size_t> bins;

    void attach(CLI::App* app, bool with_kind)
    {
        app->add_option("-c,--config", config, "key-value config file ([experiment], [sim], [pipeline])");
        if (with_kind) app->add_option("-k,--kind", kind, "experiment kind");
        app->add_option("-n,--shots", shots, "shots per condition");
        app->add_option("-o,--output", output, "output directory");
        app->add_option("-w,--workers", workers, "worker threads");
        app->add_option("--seed", seed, "simulator RNG seed");
        app->add_option("--probe-counts", probe_counts, "probe counts per frame in the analysis region");
        app->add_option("--interval", interval, "inter-frame interval (us)");
        app->add_option("--bins", bins, "superpixel sizes")->delimiter(',');
    }

    ExperimentSpec build(std::optional<ExperimentKind> forced = std::nullopt) const
    {
        ExperimentSpec spec = config.empty() ? ExperimentSpec{} : ExperimentSpec::from_document(KeyValueDocument::load(config));
        spec.apply_environment();
        if (forced) spec.kind = *forced;
        if (kind) spec.kind = parse_kind(*kind);
        if (shots) spec.shots = *shots;
        if (output) spec.output_dir = *output;
        if (workers) spec.workers = *workers;
        if (seed) spec.sim.rng_seed = *seed;
        if (probe_counts) spec.probe_counts = *probe_counts;
        if (interval) spec.interval_us = *interval;
        if (!bins.empty()) spec.bin_sizes = bins;
        return spec;
    }
};

int report(const RunReport& r)
{
    for (const auto& f : r.files) std::cout << f.generic_string() << "\n";
    if (r.failed_conditions > 0) {
        std::cerr << "twinbeam: " << r.failed_conditions << " condition(s) failed; see manifest.ini\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Twin-beam spatial squeezing simulation and analysis"};
    app.require_subcommand(1);

    // simulate
    SpecFlags sim_flags;
    std::size_t frames = 2;
    std::string format = "pgm16";
    auto* simulate = app.add_subcommand("simulate", "write simulated frame sequences (signal and seed-off background)");
    sim_flags.attach(simulate, false);
    simulate->add_option("--frames", frames, "frames per shot")->check(CLI::Range(2, 1000));
    simulate->add_option("--format", format, "pgm16 or csv")->check(CLI::IsMember({"pgm16", "csv"}));

    // analyze
    SpecFlags analyze_flags;
    std::vector<std::string> inputs, backgrounds;
    auto* analyze = app.add_subcommand("analyze", "noise-ratio curve of recorded sequence directories");
    analyze_flags.attach(analyze, false);
    analyze->add_option("inputs", inputs, "sequence directories (one shot each)")->required();
    analyze->add_option("--background", backgrounds, "seed-off sequence directories, one per input");

    SpecFlags sweep_flags, emulate_flags, coherence_flags;
    auto* sweep = app.add_subcommand("sweep", "run an experiment kind over its conditions");
    sweep_flags.attach(sweep, true);
    auto* emulate_cmd = app.add_subcommand("emulate-noise", "add synthetic pixel or beam-scale noise to baseline data");
    emulate_flags.attach(emulate_cmd, false);
    std::optional<double> pixel_fraction;
    std::vector<double> convolved;
    std::optional<std::size_t> kernel;
    emulate_cmd->add_option("--pixel-fraction", pixel_fraction, "pixel-mode peak-to-peak fraction");
    emulate_cmd->add_option("--convolved", convolved, "convolved-mode fractions")->delimiter(',');
    emulate_cmd->add_option("--kernel", kernel, "convolution kernel size (px)");
    auto* coherence = app.add_subcommand("coherence", "measure the coherence area by cross-correlation");
    coherence_flags.attach(coherence, false);

    // timing
    std::vector<double> shift_ns{300.0, 600.0, 2000.0, 5000.0};
    int rows = 170;
    double exposure = 12.0;
    std::optional<double> counts;
    double pulse_us = 1.0, gain = 4.0, bandwidth = 16.0, fwhm = 10.0;
    int region = 80;
    auto* timing = app.add_subcommand("timing", "kinetic-mode frame intervals, photon flux and mode counts");
    timing->add_option("--shift-ns", shift_ns, "vertical shift times per row (ns)")->delimiter(',');
    timing->add_option("--rows", rows, "rows shifted per frame");
    timing->add_option("--exposure", exposure, "exposure (us)");
    timing->add_option("--counts", counts, "total counts per pulse for flux and mode accounting");
    timing->add_option("--pulse-us", pulse_us, "probe pulse width (us)");
    timing->add_option("--gain", gain, "gain G");
    timing->add_option("--bandwidth-mhz", bandwidth, "four-wave-mixing bandwidth (MHz)");
    timing->add_option("--coherence-fwhm", fwhm, "coherence FWHM (px)");
    timing->add_option("--region", region, "analysis region side (px)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (simulate->parsed()) {
            ExperimentSpec spec = sim_flags.build();
            spec.validate();
            SimConfig cfg = spec.sim;
            if (spec.probe_counts > 0.0) cfg.seed_photons = seed_for_probe_counts(cfg, spec.probe_counts);
            const TwinBeamSimulator sim(cfg);
            const FrameFormat fmt = format == "csv" ? FrameFormat::csv : FrameFormat::pgm16;
            for (std::size_t s = 0; s < spec.shots; ++s) {
                const auto shot = sim.sequence(s, frames, spec.interval_us, true);
                char name[32];
                std::snprintf(name, sizeof name, "shot_%03zu", s);
                const auto dir = spec.output_dir / name;
                write_sequence(shot.signal, dir / "signal", fmt);
                write_sequence(shot.background, dir / "background", fmt);
                if (shot.clip.warning())
                    std::cerr << "twinbeam: warning: " << name << " clipped " << shot.clip.fraction() * 100.0
                              << "% of pairs at the frame edge\n";
            }
            KeyValueDocument doc;
            spec.to_document(doc);
            doc.set("sim", "seed_photons", cfg.seed_photons);
            doc.save(spec.output_dir / "simulation.ini");
            std::cout << spec.output_dir.generic_string() << "\n";
            return 0;
        }
        if (analyze->parsed()) {
            ExperimentSpec spec = analyze_flags.build();
            spec.inputs.assign(inputs.begin(), inputs.end());
            spec.background_inputs.assign(backgrounds.begin(), backgrounds.end());
            return report(run(spec));
        }
        if (sweep->parsed()) return report(run(sweep_flags.build()));
        if (emulate_cmd->parsed()) {
            ExperimentSpec spec = emulate_flags.build(ExperimentKind::noise_emulation);
            if (pixel_fraction) spec.pixel_fraction = *pixel_fraction;
            if (!convolved.empty()) spec.convolved_fractions = convolved;
            if (kernel) spec.kernel_size = *kernel;
            return report(run(spec));
        }
        if (coherence->parsed()) return report(run(coherence_flags.build(ExperimentKind::coherence_measurement)));
        if (timing->parsed()) {
            std::cout << "shift_ns_per_row,rows,exposure_us,interval_us\n";
            for (double s : shift_ns)
                std::cout << format_double(s) << "," << rows << "," << format_double(exposure) << ","
                          << format_double(frame_interval(s, rows, exposure)) << "\n";
            if (counts) {
                const auto f = photon_flux(*counts, pulse_us, gain);
                std::cout << "flux_per_s," << format_double(f.flux) << "\ncorrelated_flux_per_s,"
                          << format_double(f.correlated_flux) << "\n";
                const auto m = mode_count(Region{0, 0, region, region}, fwhm, fwhm, pulse_us, bandwidth, *counts);
                std::cout << "spatial_modes," << format_double(m.spatial_modes) << "\ntemporal_modes,"
                          << format_double(m.temporal_modes) << "\nphotons_per_mode,"
                          << format_double(m.photons_per_mode) << "\n";
            }
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "twinbeam: configuration error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "twinbeam: format error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "twinbeam: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
