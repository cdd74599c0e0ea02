#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace twinbeam {

using Engine = std::mt19937_64;

/// Independent stream identifiers. Values are part of the reproducibility contract.
enum class Purpose : std::uint64_t {
    probe_uncorrelated = 1,
    pairs = 2,
    pair_offsets = 3,
    conjugate_uncorrelated = 4,
    background_probe = 5,
    background_conjugate = 6,
    technical = 7,
    em_gain = 8,
    emulation_probe = 9,
    emulation_conjugate = 10,
    coherent_probe = 11,
    coherent_conjugate = 12,
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Key of the substream for (seed, shot, frame, purpose). Stable across platforms.
std::uint64_t stream_key(std::uint64_t seed, std::uint64_t shot, std::uint64_t frame, Purpose purpose) noexcept;

Engine make_engine(std::uint64_t seed, std::uint64_t shot, std::uint64_t frame, Purpose purpose);

/// SplitMix64 generator: one add and one finalizer per draw. Used for the
/// per-pair offset stream, which dominates the simulation cost.
class SplitMix64 {
public:
    using result_type = std::uint64_t;
    explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}
    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }
    result_type operator()() noexcept
    {
        std::uint64_t x = (state_ += 0x9e3779b97f4a7c15ULL);
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t state_;
};

/// Poisson draw; mean 0 gives 0.
double draw_poisson(Engine& rng, double mean);

/// Gamma-Poisson mixture with the given mean and variance mean*(1 + excess).
/// excess 0 reduces to a Poisson draw.
double draw_excess_poisson(Engine& rng, double mean, double excess);

/// Sum of `n` unit-mean exponentials, i.e. Gamma(n, 1); used for EM register gain.
double draw_em_gain(Engine& rng, double n);

/// Walker alias table over a finite discrete distribution. Sampling consumes
/// 32 random bits: the high part of a 32x32 product picks the column, the low
/// part decides between the column and its alias.
class AliasTable {
public:
    AliasTable() = default;
    explicit AliasTable(const std::vector<double>& weights);

    std::size_t size() const noexcept { return prob_.size(); }

    std::size_t sample(std::uint32_t bits) const noexcept
    {
        const std::uint64_t product = static_cast<std::uint64_t>(bits) * prob_.size();
        const auto column = static_cast<std::size_t>(product >> 32);
        const auto coin = static_cast<std::uint32_t>(product);
        return coin < prob_[column] ? column : alias_[column];
    }

private:
    std::vector<std::uint32_t> prob_;  // acceptance threshold scaled to 2^32
    std::vector<std::size_t> alias_;
};

/// Probabilities of a zero-mean Gaussian with standard deviation `s`
/// integrated over unit pixels at offsets -radius..radius, renormalized.
/// radius = ceil(5 s) (at least 1).
std::vector<double> pixel_gaussian_kernel(double s);

}  // namespace twinbeam
