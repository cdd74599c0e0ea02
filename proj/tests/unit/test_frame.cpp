#include "twinbeam/error.hpp"
#include "twinbeam/frame.hpp"
#include "twinbeam/frame_io.hpp"
#include "twinbeam/keyvalue.hpp"
#include "twinbeam/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace twinbeam;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("twinbeam_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
}

Matrix gaussian_frame(std::size_t rows, std::size_t cols, double cr, double cc, double fwhm, double peak)
{
    Matrix m(rows, cols);
    const double s = fwhm / 2.354820045;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double dr = r - cr;
            const double dc = c - cc;
            m(r, c) = std::round(peak * std::exp(-(dr * dr + dc * dc) / (2 * s * s)));
        }
    return m;
}

}  // namespace

TEST(Matrix, ArithmeticLeavesOperandsUntouched)
{
    Matrix a(2, 2, std::vector<double>{1, 2, 3, 4});
    Matrix b(2, 2, std::vector<double>{4, 3, 2, 1});
    const Matrix a0 = a;
    const Matrix b0 = b;
    EXPECT_EQ(a + b, Matrix(2, 2, 5.0));
    EXPECT_EQ(a - b, Matrix(2, 2, std::vector<double>{-3, -1, 1, 3}));
    EXPECT_EQ(2.0 * a, Matrix(2, 2, std::vector<double>{2, 4, 6, 8}));
    EXPECT_EQ(a, a0);
    EXPECT_EQ(b, b0);
    EXPECT_THROW(a + Matrix(1, 2), ConfigError);
}

TEST(Matrix, Rotate180IsAnInvolution)
{
    Matrix m(3, 4);
    for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = static_cast<double>(i * i);
    const Matrix r = rotate180(m);
    EXPECT_EQ(r(0, 0), m(2, 3));
    EXPECT_EQ(r(2, 3), m(0, 0));
    EXPECT_EQ(r(1, 2), m(1, 1));
    EXPECT_EQ(rotate180(r), m);
}

TEST(Matrix, BoxAverageMatchesBruteForce)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    Matrix m(9, 11);
    for (double& v : m.values()) v = g(rng);
    for (std::size_t k : {1u, 2u, 3u, 4u, 7u}) {
        const Matrix out = box_average(m, k);
        const long before = static_cast<long>(k / 2);
        const long after = static_cast<long>(k) - 1 - before;
        for (long r = 0; r < 9; ++r)
            for (long c = 0; c < 11; ++c) {
                double total = 0.0;
                int count = 0;
                for (long i = r - before; i <= r + after; ++i)
                    for (long j = c - before; j <= c + after; ++j)
                        if (i >= 0 && i < 9 && j >= 0 && j < 11) {
                            total += m(i, j);
                            ++count;
                        }
                EXPECT_NEAR(out(r, c), total / count, 1e-12) << "k=" << k;
            }
    }
}

TEST(Matrix, SampleVarianceNeedsTwoValues)
{
    const std::vector<double> one{1.0};
    EXPECT_THROW(sample_variance(one), AnalysisError);
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    EXPECT_DOUBLE_EQ(sample_variance(v), 5.0 / 3.0);
    EXPECT_DOUBLE_EQ(mean(v), 2.5);
}

TEST(Frame, RejectsNegativeAndNonFiniteCounts)
{
    EXPECT_THROW(Frame(Matrix(2, 2, -1.0)), ConfigError);
    EXPECT_THROW(Frame(Matrix(1, 1, std::nan(""))), ConfigError);
    EXPECT_THROW(Frame{Matrix{}}, ConfigError);
    FrameMeta meta;
    meta.exposure_us = 0.0;
    EXPECT_THROW(Frame(Matrix(1, 1), meta), ConfigError);
}

TEST(Frame, SequenceValidation)
{
    FrameSequence seq;
    seq.frames.emplace_back(Matrix(2, 2));
    EXPECT_THROW(seq.validate_for_subtraction(), ConfigError);
    FrameMeta later;
    later.acquisition_time_us = 63.0;
    seq.frames.emplace_back(Matrix(2, 2), later);
    EXPECT_NO_THROW(seq.validate_for_subtraction());
    seq.frames.emplace_back(Matrix(2, 3), later);
    EXPECT_THROW(seq.validate(), ConfigError);
    seq.frames.pop_back();
    seq.frames.emplace_back(Matrix(2, 2));
    EXPECT_THROW(seq.validate(), ConfigError);
}

TEST(Crop, ZerosAndIdentity)
{
    const Frame zeros(Matrix(512, 512));
    const Frame c = crop(zeros, Region{216, 216, 80, 80});
    EXPECT_EQ(c.height(), 80u);
    EXPECT_EQ(c.width(), 80u);
    EXPECT_EQ(c.counts(), Matrix(80, 80));

    Matrix m(5, 7);
    for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = static_cast<double>(i);
    EXPECT_EQ(crop(m, Region{0, 0, 5, 7}), m);
    EXPECT_THROW(crop(m, Region{1, 0, 5, 7}), ConfigError);
    EXPECT_THROW(crop(m, Region{-1, 0, 2, 2}), ConfigError);
    EXPECT_THROW(crop(m, Region{0, 0, 0, 2}), ConfigError);
}

TEST(Crop, CompositionEqualsSingleCrop)
{
    Matrix m(40, 50);
    for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = static_cast<double>((i * 7919) % 1000);
    const Region outer{5, 8, 30, 35};
    const Region inner{3, 4, 10, 12};
    const Matrix twice = crop(crop(m, outer), inner);
    const Matrix once = crop(m, Region{outer.row + inner.row, outer.col + inner.col, inner.height, inner.width});
    EXPECT_EQ(twice, once);
}

TEST(Crop, CentredOnGaussianMaximum)
{
    const Matrix g = gaussian_frame(170, 512, 85.0, 260.0, 40.0, 1000.0);
    // Center-of-mass oracle on the synthetic profile.
    double total = 0.0;
    double sr = 0.0;
    double sc = 0.0;
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) {
            total += g(r, c);
            sr += r * g(r, c);
            sc += c * g(r, c);
        }
    const Region region = Region::centred(sr / total, sc / total, 120);
    const Matrix cropped = crop(g, region);
    const auto values = cropped.values();
    const auto idx = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
    const double centre = (120 - 1) / 2.0;
    EXPECT_LE(std::abs(static_cast<double>(idx / 120) - centre), 1.0);
    EXPECT_LE(std::abs(static_cast<double>(idx % 120) - centre), 1.0);
}

TEST(Region, CentredGeometry)
{
    EXPECT_EQ(Region::centred(85.5, 128.5, 80), (Region{46, 89, 80, 80}));
    EXPECT_EQ(Region::centred(10.0, 10.0, 3), (Region{9, 9, 3, 3}));
}

TEST(FrameIo, CsvParse)
{
    const auto dir = scratch_dir("csv");
    write_text(dir / "a.csv", "1,2\n3,4\n");
    const Frame f = read_frame(dir / "a.csv");
    EXPECT_EQ(f.counts(), Matrix(2, 2, std::vector<double>{1, 2, 3, 4}));

    write_text(dir / "ragged.csv", "1,2\n3\n");
    try {
        read_frame(dir / "ragged.csv");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    write_text(dir / "neg.csv", "1,-2\n");
    EXPECT_THROW(read_frame(dir / "neg.csv"), FormatError);
    write_text(dir / "junk.csv", "1,x\n");
    EXPECT_THROW(read_frame(dir / "junk.csv"), FormatError);
}

TEST(FrameIo, PgmZerosAndHeader)
{
    const auto dir = scratch_dir("pgm");
    write_frame(Frame(Matrix(512, 512)), dir / "z.pgm", FrameFormat::pgm16);
    EXPECT_EQ(fs::file_size(dir / "z.pgm"), std::string("P5\n512 512\n65535\n").size() + 512u * 512u * 2u);
    EXPECT_EQ(read_frame(dir / "z.pgm").counts(), Matrix(512, 512));

    write_frame(Frame(Matrix(1, 1)), dir / "one.pgm", FrameFormat::pgm16);
    std::ifstream in(dir / "one.pgm", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_EQ(bytes, std::string("P5\n1 1\n65535\n") + std::string(2, '\0'));
}

TEST(FrameIo, PgmBigEndianAndErrors)
{
    const auto dir = scratch_dir("pgm_err");
    write_frame(Frame(Matrix(1, 2, std::vector<double>{258, 65535})), dir / "be.pgm", FrameFormat::pgm16);
    std::ifstream in(dir / "be.pgm", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string raster = bytes.substr(bytes.size() - 4);
    EXPECT_EQ(raster, std::string("\x01\x02\xff\xff", 4));

    EXPECT_THROW(write_frame(Frame(Matrix(1, 1, 65536.0)), dir / "big.pgm", FrameFormat::pgm16), FormatError);
    EXPECT_THROW(write_frame(Frame(Matrix(1, 1, 1.5)), dir / "frac.pgm", FrameFormat::pgm16), FormatError);

    write_text(dir / "magic.pgm", "P2\n1 1\n65535\n00");
    EXPECT_THROW(read_frame(dir / "magic.pgm"), FormatError);
    write_text(dir / "short.pgm", std::string("P5\n2 2\n65535\n\0\0", 16));
    EXPECT_THROW(read_frame(dir / "short.pgm"), FormatError);
    write_text(dir / "over.pgm", std::string("P5\n1 1\n1000\n\x10\x00", 14));
    try {
        read_frame(dir / "over.pgm");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("offset 12"), std::string::npos) << e.what();
    }
}

TEST(FrameIo, RoundTripSimulatedFrame)
{
    const auto dir = scratch_dir("roundtrip");
    Engine rng = make_engine(11, 0, 0, Purpose::probe_uncorrelated);
    Matrix m(170, 512);
    const Matrix profile = gaussian_frame(170, 512, 85.5, 128.5, 40.0, 1.5e4);
    for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = draw_poisson(rng, profile.values()[i]);
    const Frame f(m);
    write_frame(f, dir / "f.pgm", FrameFormat::pgm16);
    write_frame(f, dir / "f.csv", FrameFormat::csv);
    EXPECT_EQ(read_frame(dir / "f.pgm").counts(), m);
    EXPECT_EQ(read_frame(dir / "f.csv").counts(), m);
}

TEST(FrameIo, SignedCsvRoundTrip)
{
    const auto dir = scratch_dir("signed");
    Matrix m(3, 3);
    for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = (static_cast<double>(i) - 4.0) / 3.0 * 1e3 + 1e-7;
    write_matrix_csv(m, dir / "fluct.csv");
    const Matrix back = read_matrix_csv(dir / "fluct.csv");
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(back.values()[i], m.values()[i], 1e-9);
    EXPECT_EQ(back, m);
}

TEST(FrameIo, SequenceManifestRoundTrip)
{
    const auto dir = scratch_dir("sequence");
    FrameSequence seq;
    seq.inter_frame_interval_us = 63.0;
    seq.timing = PulseTiming{4.0, 1.0, 3.0};
    for (int k = 0; k < 3; ++k) {
        FrameMeta meta;
        meta.frame_index = static_cast<std::size_t>(k);
        meta.acquisition_time_us = 63.0 * k;
        meta.label = "probe+conjugate";
        seq.frames.emplace_back(Matrix(4, 5, static_cast<double>(k)), meta);
    }
    write_sequence(seq, dir, FrameFormat::pgm16);
    const FrameSequence back = read_sequence(dir);
    ASSERT_EQ(back.frames.size(), 3u);
    EXPECT_EQ(back.inter_frame_interval_us, 63.0);
    EXPECT_EQ(back.timing.a_us, 4.0);
    for (int k = 0; k < 3; ++k) {
        EXPECT_EQ(back.frames[k].counts(), seq.frames[k].counts());
        EXPECT_EQ(back.frames[k].meta().acquisition_time_us, 63.0 * k);
        EXPECT_EQ(back.frames[k].meta().label, "probe+conjugate");
        EXPECT_EQ(back.frames[k].meta().exposure_us, 12.0);
    }
}

TEST(KeyValue, ParseAndWrite)
{
    const auto doc = KeyValueDocument::parse("# comment\n[sim]\ngain = 4\nqe=0.7\n; other\n[run]\nshots = 100\n");
    EXPECT_EQ(doc.get_double("sim", "gain", 0), 4.0);
    EXPECT_EQ(doc.get_double("sim", "qe", 0), 0.7);
    EXPECT_EQ(doc.get_int("run", "shots", 0), 100);
    EXPECT_EQ(doc.get_int("run", "missing", 7), 7);
    EXPECT_THROW(doc.get_int("sim", "qe", 0), ConfigError);
    EXPECT_EQ(KeyValueDocument::parse(doc.to_string()).to_string(), doc.to_string());
    EXPECT_THROW(KeyValueDocument::parse("[sim\n"), FormatError);
}

TEST(KeyValue, DoubleTextRoundTrips)
{
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5}) {
        EXPECT_EQ(parse_double(format_double(v), "t"), v);
    }
}

TEST(Rng, KeyedStreamsAreDistinctAndStable)
{
    EXPECT_NE(stream_key(1, 0, 0, Purpose::pairs), stream_key(1, 0, 1, Purpose::pairs));
    EXPECT_NE(stream_key(1, 0, 0, Purpose::pairs), stream_key(1, 1, 0, Purpose::pairs));
    EXPECT_NE(stream_key(1, 0, 0, Purpose::pairs), stream_key(1, 0, 0, Purpose::pair_offsets));
    Engine a = make_engine(5, 2, 3, Purpose::technical);
    Engine b = make_engine(5, 2, 3, Purpose::technical);
    EXPECT_EQ(a(), b());
}

TEST(Rng, AliasTableReproducesWeights)
{
    const std::vector<double> w{0.1, 0.0, 0.5, 0.25, 0.15};
    const AliasTable table(w);
    std::vector<double> counts(w.size(), 0.0);
    Engine rng(9);
    const int draws = 400000;
    for (int i = 0; i < draws; ++i) counts[table.sample(static_cast<std::uint32_t>(rng()))] += 1.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double p = counts[i] / draws;
        EXPECT_NEAR(p, w[i], 4.0 * std::sqrt(w[i] * (1 - w[i]) / draws) + 1e-12);
    }
}

TEST(Rng, PixelKernelMoments)
{
    const auto k = pixel_gaussian_kernel(3.0);
    EXPECT_EQ(k.size(), 31u);
    double total = 0.0;
    double var = 0.0;
    const int radius = 15;
    for (int d = -radius; d <= radius; ++d) {
        total += k[d + radius];
        var += d * d * k[d + radius];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    // Pixel integration adds the uniform variance 1/12.
    EXPECT_NEAR(var, 9.0 + 1.0 / 12.0, 1e-3);
}

TEST(Rng, ExcessPoissonMoments)
{
    Engine rng(21);
    const int n = 200000;
    double s = 0.0;
    double s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = draw_excess_poisson(rng, 20.0, 5.0);
        s += x;
        s2 += x * x;
    }
    const double m = s / n;
    const double v = s2 / n - m * m;
    EXPECT_NEAR(m, 20.0, 0.1);
    EXPECT_NEAR(v / m, 6.0, 0.15);
}
