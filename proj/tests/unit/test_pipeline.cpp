#include "twinbeam/error.hpp"
#include "twinbeam/frame_io.hpp"
#include "twinbeam/pipeline.hpp"
#include "twinbeam/rng.hpp"
#include "twinbeam/sim.hpp"
#include "twinbeam/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace twinbeam;

namespace {

Matrix gaussian_frame(double cr, double cc, double sigma, double peak, std::size_t rows = 170, std::size_t cols = 512)
{
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double dr = static_cast<double>(r) - cr;
            const double dc = static_cast<double>(c) - cc;
            m(r, c) = peak * std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
        }
    return m;
}

Matrix poisson(const Matrix& mean_image, std::uint64_t seed)
{
    Engine rng(seed);
    Matrix m(mean_image.rows(), mean_image.cols());
    for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = draw_poisson(rng, mean_image.values()[i]);
    return m;
}

Matrix shifted(const Matrix& a, int dr, int dc)
{
    // out(r + dr, c + dc) = a(r, c); uncovered pixels copy the nearest edge.
    Matrix out(a.rows(), a.cols());
    const int rows = static_cast<int>(a.rows());
    const int cols = static_cast<int>(a.cols());
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int sr = std::clamp(r - dr, 0, rows - 1);
            const int sc = std::clamp(c - dc, 0, cols - 1);
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
                a(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
        }
    return out;
}

FrameSequence sequence_of(const std::vector<Matrix>& frames)
{
    FrameSequence seq;
    seq.inter_frame_interval_us = 63.0;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        FrameMeta meta;
        meta.frame_index = f;
        meta.acquisition_time_us = 63.0 * static_cast<double>(f);
        seq.frames.emplace_back(frames[f], meta);
    }
    return seq;
}

Matrix two_beams(double scale = 1.0)
{
    return gaussian_frame(85.5, 128.5, 17.0, 3000.0 * scale) + gaussian_frame(85.5, 383.5, 17.0, 2000.0 * scale);
}

const Region probe_hint = Region::centred(85.5, 128.5, 120);
const Region conj_hint = Region::centred(85.5, 383.5, 120);

}  // namespace

TEST(Locate, FindsGaussianCentre)
{
    const Frame frame(poisson(gaussian_frame(85.0, 260.0, 10.0, 1000.0), 1));
    const auto loc = locate_beam(frame, Region::centred(80.0, 250.0, 120), 41);
    EXPECT_NEAR(loc.row, 85.0, 1.0);
    EXPECT_NEAR(loc.col, 260.0, 1.0);
    const auto fine = locate_beam(frame, Region::centred(80.0, 250.0, 120), 81);
    EXPECT_NEAR(fine.row, 85.0, 0.1);
    EXPECT_NEAR(fine.col, 260.0, 0.1);
}

TEST(Locate, RejectsEmptyAndFlatRegions)
{
    const Frame zero(Matrix(170, 512));
    EXPECT_THROW(locate_beam(zero, probe_hint), AnalysisError);
    const Frame flat(poisson(Matrix(170, 512, 500.0), 2));
    EXPECT_THROW(locate_beam(flat, probe_hint), AnalysisError);
    EXPECT_THROW(locate_beam(flat, probe_hint, 0), ConfigError);
}

TEST(Register, RecoversKnownShift)
{
    const Matrix a = poisson(gaussian_frame(60.0, 60.0, 14.0, 800.0, 120, 120), 3);
    const Matrix b = shifted(a, 2, -3);
    EXPECT_EQ(register_shift(a, b, 10), std::make_pair(2, -3));
    EXPECT_EQ(register_shift(a, a, 10), std::make_pair(0, 0));
    const Matrix noisy_b = poisson(shifted(gaussian_frame(60.0, 60.0, 14.0, 800.0, 120, 120), -4, 1), 4);
    EXPECT_EQ(register_shift(a, noisy_b, 10), std::make_pair(-4, 1));
}

TEST(Register, RejectsUncorrelatedImages)
{
    const Matrix a = poisson(Matrix(120, 120, 100.0), 5);
    const Matrix b = poisson(Matrix(120, 120, 100.0), 6);
    EXPECT_THROW(register_shift(a, b, 10), AnalysisError);
    EXPECT_THROW(register_shift(a, Matrix(100, 100), 10), ConfigError);
    EXPECT_THROW(register_shift(a, b, 60), ConfigError);
}

TEST(Fluctuations, IdenticalFramesCancel)
{
    const Matrix frame = poisson(two_beams(), 7);
    const auto pair = make_fluctuations(sequence_of({frame, frame}), 0, 1, probe_hint, conj_hint, PipelineConfig{});
    EXPECT_EQ(pair.rescale_used, 1.0);
    EXPECT_EQ(pair.conjugate_rescale, 1.0);
    EXPECT_EQ(pair.probe_shift, std::make_pair(0, 0));
    EXPECT_EQ(peak_to_peak(pair.probe_fluct.values), 0.0);
    EXPECT_EQ(peak_to_peak(pair.conj_fluct_rotated.values), 0.0);
    EXPECT_EQ(pair.probe_fluct.values.rows(), 80u);
    EXPECT_EQ(pair.probe_fluct.source, "0-1");
    EXPECT_NEAR(pair.probe_location.row, 85.5, 0.05);
    EXPECT_NEAR(pair.conjugate_location.col, 383.5, 0.05);
}

TEST(Fluctuations, ShiftedSecondFrameIsRealigned)
{
    const Matrix frame = poisson(two_beams(), 8);
    const auto pair =
        make_fluctuations(sequence_of({frame, shifted(frame, 1, 2)}), 0, 1, probe_hint, conj_hint, PipelineConfig{});
    EXPECT_EQ(pair.probe_shift, std::make_pair(1, 2));
    EXPECT_EQ(pair.conjugate_shift, std::make_pair(1, 2));
    EXPECT_EQ(peak_to_peak(pair.probe_fluct.values), 0.0);
    EXPECT_EQ(peak_to_peak(pair.conj_fluct_rotated.values), 0.0);
}

TEST(Fluctuations, ConjugateCropIsRotated)
{
    Matrix frame = two_beams();
    frame(60, 360) = 1e5;  // upper-left of the conjugate crop
    const auto pair = make_fluctuations(sequence_of({frame, two_beams()}), 0, 1, probe_hint, conj_hint,
                                        PipelineConfig{});
    const Region cr = pair.conjugate_region;
    const auto r = static_cast<std::size_t>(cr.height - 1 - (60 - cr.row));
    const auto c = static_cast<std::size_t>(cr.width - 1 - (360 - cr.col));
    EXPECT_GT(pair.conj_fluct_rotated.values(r, c), 9e4);
}

TEST(Fluctuations, RescaleCorrectsSeedDrift)
{
    SimConfig cfg;
    cfg.background_rate = 0.0;
    cfg.seed_photons = seed_for_probe_counts(cfg, 5e6);
    const auto shot = TwinBeamSimulator(cfg).sequence(0, 2, 63.0, false);
    const auto pair = make_fluctuations(shot.signal, 0, 1, probe_hint, conj_hint, PipelineConfig{});
    EXPECT_NEAR(pair.rescale_used, 1.003, 1e-3);
    EXPECT_NEAR(pair.conjugate_rescale, 1.003, 1e-3);

    PipelineConfig off;
    off.rescale_mode = RescaleMode::off;
    const auto raw = make_fluctuations(shot.signal, 0, 1, probe_hint, conj_hint, off);
    EXPECT_LT(std::abs(mean(pair.probe_fluct.values)), std::abs(mean(raw.probe_fluct.values)));
    EXPECT_EQ(raw.rescale_used, 1.0);

    PipelineConfig fixed;
    fixed.rescale_mode = RescaleMode::fixed;
    fixed.fixed_rescale = 1.05;
    EXPECT_EQ(make_fluctuations(shot.signal, 0, 1, probe_hint, conj_hint, fixed).conjugate_rescale, 1.05);

    PipelineConfig probe_only;
    probe_only.rescale_mode = RescaleMode::auto_probe;
    const auto p = make_fluctuations(shot.signal, 0, 1, probe_hint, conj_hint, probe_only);
    EXPECT_EQ(p.conjugate_rescale, p.rescale_used);
}

TEST(Fluctuations, MisconfiguredPairIsRejected)
{
    const Matrix frame = poisson(two_beams(), 9);
    const Matrix dim = poisson(two_beams(0.5), 10);
    EXPECT_THROW(make_fluctuations(sequence_of({frame, dim}), 0, 1, probe_hint, conj_hint, PipelineConfig{}),
                 AnalysisError);
    EXPECT_THROW(make_fluctuations(sequence_of({frame, dim}), 1, 0, probe_hint, conj_hint, PipelineConfig{}),
                 ConfigError);
    EXPECT_THROW(make_fluctuations(sequence_of({frame}), 0, 1, probe_hint, conj_hint, PipelineConfig{}),
                 ConfigError);
}

TEST(Fluctuations, RotationCentreOverride)
{
    const Matrix frame = poisson(two_beams(), 11);
    PipelineConfig cfg;
    cfg.rotation_centre = std::make_pair(86.5, 382.5);
    const auto pair = make_fluctuations(sequence_of({frame, frame}), 0, 1, probe_hint, conj_hint, cfg);
    EXPECT_EQ(pair.conjugate_region, Region::centred(86.5, 382.5, 80));
}

TEST(Fluctuations, DeterministicAndReusableGeometry)
{
    SimConfig cfg;
    cfg.seed_photons = seed_for_probe_counts(cfg, 2e6);
    const auto shot = TwinBeamSimulator(cfg).sequence(3, 2, 63.0, true);
    const auto a = make_fluctuations(shot.signal, 0, 1, probe_hint, conj_hint, PipelineConfig{});
    const auto b = make_fluctuations(shot.signal, 0, 1, probe_hint, conj_hint, PipelineConfig{});
    EXPECT_TRUE(std::ranges::equal(a.probe_fluct.values.values(), b.probe_fluct.values.values()));
    EXPECT_TRUE(std::ranges::equal(a.conj_fluct_rotated.values.values(), b.conj_fluct_rotated.values.values()));

    const auto bg = apply_alignment(a, shot.background, 0, 1);
    EXPECT_EQ(bg.probe_region, a.probe_region);
    EXPECT_EQ(bg.rescale_used, a.rescale_used);
    EXPECT_NEAR(mean(sum_image(bg)) / 4.0, 4e5 / 6400.0, 1.0);
    const Matrix d = difference_image(a);
    EXPECT_EQ(d.rows(), 80u);
    EXPECT_DOUBLE_EQ(d(3, 4), a.probe_fluct.values(3, 4) - a.conj_fluct_rotated.values(3, 4));
}

TEST(Fluctuations, WritesAlignedPair)
{
    const Matrix frame = poisson(two_beams(), 12);
    const auto pair = make_fluctuations(sequence_of({frame, poisson(two_beams(), 13)}), 0, 1, probe_hint, conj_hint,
                                        PipelineConfig{});
    const auto dir = std::filesystem::temp_directory_path() / "twinbeam_aligned_pair_test";
    std::filesystem::remove_all(dir);
    write_aligned_pair(pair, dir);
    const Matrix back = read_matrix_csv(dir / "probe_fluct.csv");
    EXPECT_TRUE(std::ranges::equal(back.values(), pair.probe_fluct.values.values()));
    const auto doc = KeyValueDocument::load(dir / "provenance.ini");
    EXPECT_EQ(doc.get("aligned_pair", "source").value_or(""), "0-1");
    std::filesystem::remove_all(dir);
}

TEST(PipelineConfig, DocumentRoundTripAndValidation)
{
    PipelineConfig cfg;
    cfg.rescale_mode = RescaleMode::fixed;
    cfg.fixed_rescale = 1.01;
    cfg.rotation_centre = std::make_pair(85.5, 383.5);
    KeyValueDocument doc;
    cfg.to_document(doc);
    const auto back = PipelineConfig::from_document(KeyValueDocument::parse(doc.to_string()));
    EXPECT_EQ(back.rescale_mode, RescaleMode::fixed);
    EXPECT_EQ(back.fixed_rescale, 1.01);
    ASSERT_TRUE(back.rotation_centre.has_value());
    EXPECT_EQ(back.rotation_centre->second, 383.5);

    PipelineConfig bad;
    bad.analysis_crop = 130;
    EXPECT_THROW(bad.validate(), ConfigError);
    EXPECT_THROW(PipelineConfig::from_document(KeyValueDocument::parse("[pipeline]\nrescale_mode = maybe\n")),
                 ConfigError);
}
