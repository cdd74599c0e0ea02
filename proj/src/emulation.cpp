#include "twinbeam/emulation.hpp"

#include "twinbeam/error.hpp"

namespace twinbeam {

void EmulationSpec::validate() const
{
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("emulation fraction must lie in (0, 1]");
    if (kernel_size < 1) throw ConfigError("emulation kernel size must be >= 1");
}

Matrix gen_noise(std::size_t rows, std::size_t cols, double r, Engine& rng)
{
    if (!(r > 0.0)) throw ConfigError("noise amplitude must be positive");
    std::uniform_real_distribution<double> u(-r, r);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = u(rng);
    const double mu = mean(m);
    for (double& v : m.values()) v -= mu;
    return m;
}

Matrix running_average(const Matrix& noise, std::size_t k)
{
    if (k < 1 || k > std::min(noise.rows(), noise.cols())) throw ConfigError("kernel size must lie in [1, min(dims)]");
    return box_average(noise, k);
}

Matrix emulation_noise(std::size_t rows, std::size_t cols, double baseline_ptp, const EmulationSpec& spec,
                       Engine& rng)
{
    Matrix noise = gen_noise(rows, cols, 1.0, rng);
    if (spec.spatial_mode == SpatialMode::convolved) noise = running_average(noise, spec.kernel_size);
    const double ptp = peak_to_peak(noise);
    if (!(ptp > 0.0)) throw AnalysisError("emulated noise has zero peak-to-peak");
    return (spec.fraction * baseline_ptp / ptp) * noise;
}

EmulationResult emulate(const std::vector<AlignedPair>& baselines, const EmulationSpec& spec, std::size_t shots,
                        std::uint64_t rng_seed, const std::vector<std::size_t>& bins)
{
    spec.validate();
    if (baselines.empty()) throw ConfigError("emulation needs at least one baseline pair");
    if (shots < 2) throw ConfigError("emulation needs at least two shots");

    std::vector<NoiseRatioCurve> base_curves;
    std::vector<double> references;
    for (const auto& b : baselines) {
        const double ref = 0.5 * (peak_to_peak(b.probe_fluct.values) + peak_to_peak(b.conj_fluct_rotated.values));
        if (!(ref > 0.0)) throw AnalysisError("baseline fluctuation peak-to-peak is zero");
        references.push_back(ref);
        base_curves.push_back(noise_ratio_curve(difference_image(b), sum_image(b), bins));
    }

    EmulationResult out;
    std::vector<NoiseRatioCurve> used_baselines;
    for (std::size_t s = 0; s < shots; ++s) {
        const std::size_t k = s % baselines.size();
        const AlignedPair& b = baselines[k];
        const std::size_t rows = b.probe_fluct.values.rows();
        const std::size_t cols = b.probe_fluct.values.cols();
        Engine rp = make_engine(rng_seed, s, 0, Purpose::emulation_probe);
        Engine rc = make_engine(rng_seed, s, 0, Purpose::emulation_conjugate);
        const Matrix np = emulation_noise(rows, cols, references[k], spec, rp);
        const Matrix nc = emulation_noise(rows, cols, references[k], spec, rc);
        const Matrix d = (b.probe_fluct.values + np) - (b.conj_fluct_rotated.values + nc);
        auto curve = noise_ratio_curve(d, sum_image(b), bins);
        std::vector<double> up;
        for (std::size_t i = 0; i < curve.size(); ++i)
            up.push_back(curve.entries()[i].sigma - base_curves[k].entries()[i].sigma);
        out.uplift.push_back(std::move(up));
        out.shots.push_back(std::move(curve));
        used_baselines.push_back(base_curves[k]);
    }
    out.emulated = aggregate_curves(out.shots);
    out.baseline = aggregate_curves(used_baselines);
    return out;
}

NoiseRatioCurve emulate(const AlignedPair& baseline, const EmulationSpec& spec, std::size_t shots,
                        std::uint64_t rng_seed, const std::vector<std::size_t>& bins)
{
    return emulate(std::vector<AlignedPair>{baseline}, spec, shots, rng_seed, bins).emulated;
}

}  // namespace twinbeam
