#include "twinbeam/error.hpp"
#include "twinbeam/experiments.hpp"
#include "twinbeam/frame_io.hpp"
#include "twinbeam/svg.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace twinbeam;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("twinbeam_unit_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> csv_files(const fs::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv") out[e.path().filename().string()] = slurp(e.path());
    return out;
}

ExperimentSpec small_spec(ExperimentKind kind)
{
    ExperimentSpec spec;
    spec.kind = kind;
    spec.shots = 10;
    spec.bin_sizes = {1, 2, 4, 8, 10, 20};
    spec.probe_counts = 2e6;
    spec.gains = {4.0};
    spec.qes = {1.0, 0.7};
    return spec;
}

}  // namespace

TEST(Timing, KineticIntervals)
{
    EXPECT_EQ(frame_interval(300.0, 170, 12.0), 63.0);
    EXPECT_EQ(frame_interval(600.0, 170, 12.0), 114.0);
    EXPECT_EQ(frame_interval(2000.0, 170, 12.0), 352.0);
    EXPECT_EQ(frame_interval(5000.0, 170, 12.0), 862.0);
    EXPECT_THROW(frame_interval(0.0, 170, 12.0), ConfigError);
    EXPECT_THROW(frame_interval(300.0, 0, 12.0), ConfigError);
}

TEST(Timing, PhotonFlux)
{
    const auto f = photon_flux(1e8, 1.0, 4.0);
    EXPECT_EQ(f.flux, 1e14);
    EXPECT_EQ(f.correlated_flux, 7.5e13);
    EXPECT_EQ(photon_flux(1e8, 1.0, 1.0).correlated_flux, 0.0);
    const auto g = photon_flux(6.2e6, 1.0, 4.0);
    EXPECT_DOUBLE_EQ(g.flux, 6.2e12);
    EXPECT_DOUBLE_EQ(g.correlated_flux, 4.65e12);
    EXPECT_DOUBLE_EQ(photon_flux(1e8, 2.0, 2.0).flux, 5e13);
}

TEST(ExperimentSpec, KindNames)
{
    for (auto k : {ExperimentKind::coherent_calibration, ExperimentKind::gain_sweep, ExperimentKind::background_study,
                   ExperimentKind::delay_sweep, ExperimentKind::interval_sweep, ExperimentKind::noise_emulation,
                   ExperimentKind::coherence_measurement})
        EXPECT_EQ(parse_kind(kind_name(k)), k);
    EXPECT_THROW(parse_kind("nonsense"), ConfigError);
}

TEST(ExperimentSpec, DocumentRoundTrip)
{
    ExperimentSpec spec = small_spec(ExperimentKind::delay_sweep);
    spec.delays_us = {0.0, 2.5, 7.0};
    spec.summary_bin = 10;
    spec.workers = 3;
    spec.output_dir = "out/dir";
    spec.sim.gain = 3.5;
    spec.sim.tech.amplitude = 0.01;
    spec.pipeline.analysis_crop = 60;
    KeyValueDocument doc;
    spec.to_document(doc);
    const auto back = ExperimentSpec::from_document(doc);
    EXPECT_EQ(back.kind, spec.kind);
    EXPECT_EQ(back.shots, spec.shots);
    EXPECT_EQ(back.bin_sizes, spec.bin_sizes);
    EXPECT_EQ(back.delays_us, spec.delays_us);
    EXPECT_EQ(back.qes, spec.qes);
    EXPECT_EQ(back.summary_bin, 10u);
    EXPECT_EQ(back.workers, 3u);
    EXPECT_EQ(back.output_dir, fs::path("out/dir"));
    EXPECT_EQ(back.probe_counts, 2e6);
    EXPECT_EQ(back.sim.gain, 3.5);
    EXPECT_EQ(back.sim.tech.amplitude, 0.01);
    EXPECT_EQ(back.pipeline.analysis_crop, 60);
    EXPECT_TRUE(back.inputs.empty());
}

TEST(ExperimentSpec, EnvironmentOverrides)
{
    ExperimentSpec spec;
    ::setenv("TWINBEAM_OUTPUT_DIR", "/tmp/elsewhere", 1);
    ::setenv("TWINBEAM_WORKERS", "3", 1);
    spec.apply_environment();
    EXPECT_EQ(spec.output_dir, fs::path("/tmp/elsewhere"));
    EXPECT_EQ(spec.workers, 3u);
    ::setenv("TWINBEAM_WORKERS", "three", 1);
    EXPECT_THROW(spec.apply_environment(), ConfigError);
    ::unsetenv("TWINBEAM_OUTPUT_DIR");
    ::unsetenv("TWINBEAM_WORKERS");
}

TEST(ExperimentSpec, Validation)
{
    EXPECT_NO_THROW(small_spec(ExperimentKind::gain_sweep).validate());
    auto few = small_spec(ExperimentKind::gain_sweep);
    few.shots = 9;
    EXPECT_THROW(few.validate(), ConfigError);
    auto wide = small_spec(ExperimentKind::gain_sweep);
    wide.bin_sizes = {1, 41};
    EXPECT_THROW(wide.validate(), ConfigError);
    auto unordered = small_spec(ExperimentKind::gain_sweep);
    unordered.bin_sizes = {4, 2};
    EXPECT_THROW(unordered.validate(), ConfigError);
    auto summary = small_spec(ExperimentKind::gain_sweep);
    summary.bin_sizes = {1, 2};
    EXPECT_THROW(summary.validate(), ConfigError);
    summary.kind = ExperimentKind::coherent_calibration;
    EXPECT_NO_THROW(summary.validate());
    auto qe = small_spec(ExperimentKind::gain_sweep);
    qe.qes = {1.5};
    EXPECT_THROW(qe.validate(), ConfigError);
    auto lonely = small_spec(ExperimentKind::gain_sweep);
    lonely.inputs = {"a"};
    EXPECT_THROW(lonely.validate(), ConfigError);
}

TEST(ParallelFor, VisitsEveryIndexOnce)
{
    for (std::size_t w : {1u, 2u, 5u}) {
        std::vector<std::atomic<int>> hits(37);
        parallel_for(hits.size(), w, [&](std::size_t i) { ++hits[i]; });
        for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
    }
    parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(Conditions, SweepsShareTheSeedExceptBackgroundStudy)
{
    auto spec = small_spec(ExperimentKind::gain_sweep);
    spec.gains = {2.0, 4.0, 8.0};
    spec.qes = {1.0, 0.7, 0.5};
    const auto gs = conditions(spec);
    ASSERT_EQ(gs.size(), 9u);
    EXPECT_EQ(gs.front().name, "gain2_qe1");
    for (const auto& c : gs) EXPECT_EQ(c.sim.seed_photons, gs.front().sim.seed_photons);

    spec.kind = ExperimentKind::background_study;
    const auto bs = conditions(spec);
    ASSERT_EQ(bs.size(), spec.signal_levels.size());
    EXPECT_TRUE(bs.front().background_correction);
    EXPECT_GT(bs.front().sim.seed_photons, bs.back().sim.seed_photons);

    spec.kind = ExperimentKind::delay_sweep;
    const auto ds = conditions(spec);
    ASSERT_EQ(ds.size(), spec.delays_us.size());
    EXPECT_EQ(ds[3].sim.timing.a_us, spec.delays_us[3]);

    spec.kind = ExperimentKind::interval_sweep;
    const auto is = conditions(spec);
    ASSERT_EQ(is.size(), 4u);
    EXPECT_EQ(is.back().interval_us, 862.0);

    spec.inputs = {"a", "b"};
    const auto real = conditions(spec);
    ASSERT_EQ(real.size(), 1u);
    EXPECT_EQ(real.front().name, "data");
    EXPECT_FALSE(real.front().background_correction);
}

TEST(RunCondition, AnalysisFailureIsCaptured)
{
    auto spec = small_spec(ExperimentKind::gain_sweep);
    Condition dark;
    dark.name = "dark";
    dark.sim.seed_photons = 0.0;
    dark.sim.background_rate = 0.0;
    const auto r = run_condition(spec, dark);
    EXPECT_FALSE(r.ok);
    EXPECT_FALSE(r.error.empty());
}

TEST(RunCondition, CurveShapeAndRecords)
{
    auto spec = small_spec(ExperimentKind::gain_sweep);
    const auto c = conditions(spec).front();
    const auto r = run_condition(spec, c, true);
    ASSERT_TRUE(r.ok) << r.error;
    EXPECT_EQ(r.shots.size(), 10u);
    EXPECT_EQ(r.shot_curves.size(), 10u);
    EXPECT_EQ(r.pairs.size(), 10u);
    EXPECT_EQ(r.curve.bins(), std::vector<double>({1, 2, 4, 8, 10, 20}));
    EXPECT_FALSE(r.corrected.has_value());
    for (const auto& s : r.shots) EXPECT_NEAR(s.probe_rescale, 1.003, 2e-3);
    EXPECT_GT(r.curve.at_bin(1).sigma, r.curve.at_bin(20).sigma);
}

TEST(Run, DeterministicAcrossWorkersAndReproducibleFromManifest)
{
    auto spec = small_spec(ExperimentKind::gain_sweep);
    const auto one = scratch("w1"), three = scratch("w3"), again = scratch("again");
    spec.output_dir = one;
    spec.workers = 1;
    const auto report = run(spec);
    ASSERT_EQ(report.failed_conditions, 0u);
    EXPECT_EQ(report.files.back().filename(), "manifest.ini");
    spec.output_dir = three;
    spec.workers = 3;
    run(spec);

    const auto reference = csv_files(one);
    EXPECT_EQ(reference.size(), 3u);  // two conditions and the summary
    EXPECT_EQ(csv_files(three), reference);

    // The manifest alone regenerates the same outputs.
    auto replay = ExperimentSpec::from_document(KeyValueDocument::load(one / "manifest.ini"));
    replay.output_dir = again;
    run(replay);
    EXPECT_EQ(csv_files(again), reference);

    const auto manifest = KeyValueDocument::load(one / "manifest.ini");
    EXPECT_EQ(manifest.get_or("condition_000", "status", ""), "ok");
    EXPECT_EQ(manifest.get_or("condition_001", "name", ""), "gain4_qe0.7");
    const auto csv = slurp(one / "gain4_qe1.csv");
    EXPECT_NE(csv.find("# kind: gain_sweep"), std::string::npos);
    EXPECT_NE(csv.find("bin,sigma,stderr,count"), std::string::npos);
    EXPECT_TRUE(fs::exists(one / "gain_sweep.svg"));
    for (const auto& d : {one, three, again}) fs::remove_all(d);
}

TEST(Run, FailedConditionIsReportedNotThrown)
{
    auto spec = small_spec(ExperimentKind::gain_sweep);
    spec.probe_counts = 0.0;
    spec.sim.seed_photons = 0.0;
    spec.sim.background_rate = 0.0;
    spec.qes = {1.0};
    spec.output_dir = scratch("failed");
    const auto report = run(spec);
    EXPECT_EQ(report.failed_conditions, 1u);
    const auto manifest = KeyValueDocument::load(spec.output_dir / "manifest.ini");
    EXPECT_EQ(manifest.get_or("condition_000", "status", ""), "failed");
    EXPECT_FALSE(manifest.get_or("condition_000", "error", "").empty());
    fs::remove_all(spec.output_dir);
}

TEST(Run, RecordedSequencesMatchTheSimulatedAnalysis)
{
    auto spec = small_spec(ExperimentKind::gain_sweep);
    spec.qes = {0.7};
    auto condition = conditions(spec).front();
    condition.background_correction = true;
    const auto simulated = run_condition(spec, condition);
    ASSERT_TRUE(simulated.ok) << simulated.error;

    const auto root = scratch("recorded");
    const TwinBeamSimulator sim(condition.sim);
    ExperimentSpec real = spec;
    for (std::size_t s = 0; s < spec.shots; ++s) {
        const auto shot = sim.sequence(s, 2, spec.interval_us, true);
        const auto dir = root / ("shot_" + std::to_string(s));
        write_sequence(shot.signal, dir / "signal", FrameFormat::pgm16);
        write_sequence(shot.background, dir / "background", FrameFormat::pgm16);
        real.inputs.push_back(dir / "signal");
        real.background_inputs.push_back(dir / "background");
    }
    const auto recorded = run_condition(real, conditions(real).front());
    ASSERT_TRUE(recorded.ok) << recorded.error;
    EXPECT_EQ(recorded.curve, simulated.curve);
    ASSERT_TRUE(recorded.corrected.has_value());
    EXPECT_EQ(*recorded.corrected, *simulated.corrected);

    real.output_dir = root / "out";
    const auto report = run(real);
    EXPECT_EQ(report.failed_conditions, 0u);
    EXPECT_TRUE(fs::exists(real.output_dir / "data.csv"));
    EXPECT_TRUE(fs::exists(real.output_dir / "data_corrected.csv"));
    fs::remove_all(root);
}

TEST(Run, NoiseEmulationOutputs)
{
    auto spec = small_spec(ExperimentKind::noise_emulation);
    spec.convolved_fractions = {0.21};
    spec.output_dir = scratch("emulation");
    const auto report = run(spec);
    ASSERT_EQ(report.failed_conditions, 0u);
    for (const char* f : {"baseline.csv", "pixel_0.07.csv", "convolved_0.21.csv", "uplift.csv"})
        EXPECT_TRUE(fs::exists(spec.output_dir / f)) << f;
    const auto pixel = NoiseRatioCurve::read_csv(spec.output_dir / "pixel_0.07.csv");
    const auto base = NoiseRatioCurve::read_csv(spec.output_dir / "baseline.csv");
    for (std::size_t i = 0; i < pixel.size(); ++i) EXPECT_GT(pixel.entries()[i].sigma, base.entries()[i].sigma);
    fs::remove_all(spec.output_dir);
}

TEST(Run, CoherenceMeasurementRecoversConfiguredWidth)
{
    ExperimentSpec spec;
    spec.kind = ExperimentKind::coherence_measurement;
    spec.shots = 400;
    spec.probe_counts = 3e5;
    // The max-sample peak estimate reads noise as extra height and narrows the
    // width, so the signal is made as strong as the model allows.
    spec.sim.background_rate = 0.0;
    spec.sim.qe = 1.0;
    spec.sim.geometry.probe_fwhm = 80.0;
    spec.sim.background_fwhm = 320.0;
    spec.sim.geometry.frame_rows = 130;
    spec.sim.geometry.frame_cols = 260;
    spec.sim.geometry.probe_row = 65.5;
    spec.sim.geometry.probe_col = 65.5;
    spec.sim.geometry.conjugate_row = 65.5;
    spec.sim.geometry.conjugate_col = 195.5;
    const auto study = run_coherence(spec);
    ASSERT_TRUE(study.ok) << study.error;
    EXPECT_EQ(study.shots, 400u);
    EXPECT_NEAR(study.estimate.fwhm_rows, 10.0, 2.0);
    EXPECT_NEAR(study.estimate.fwhm_cols, 10.0, 2.0);
    EXPECT_LE(std::abs(study.estimate.peak_offset.first), 1);
    EXPECT_LE(std::abs(study.estimate.peak_offset.second), 1);
}

TEST(Svg, LinePlot)
{
    PlotSeries a{"a & b", {1, 2, 4}, {1.0, 0.5, 0.4}, {0.1, 0.1, 0.1}};
    PlotSeries b{"c", {1, 2, 4}, {0.9, 0.8, 0.7}, {}};
    const auto svg = line_plot_svg({a, b}, {"title <x>", "n", "sigma", true, 1.0});
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_NE(svg.find("a &amp; b"), std::string::npos);
    EXPECT_NE(svg.find("title &lt;x&gt;"), std::string::npos);
    std::size_t lines = 0;
    for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++lines;
    EXPECT_EQ(lines, 2u);
    EXPECT_EQ(svg, line_plot_svg({a, b}, {"title <x>", "n", "sigma", true, 1.0}));

    PlotSeries bad{"bad", {1, 2}, {1.0}, {}};
    EXPECT_THROW(line_plot_svg({bad}, {}), ConfigError);
    PlotSeries zero{"zero", {0, 1}, {1.0, 1.0}, {}};
    PlotOptions log;
    log.log_x = true;
    EXPECT_THROW(line_plot_svg({zero}, log), ConfigError);
}
