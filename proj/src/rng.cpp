#include "twinbeam/rng.hpp"

#include "twinbeam/error.hpp"

#include <algorithm>
#include <cmath>

namespace twinbeam {

std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::uint64_t shot, std::uint64_t frame, Purpose purpose) noexcept
{
    std::uint64_t key = mix64(seed);
    key = mix64(key ^ shot);
    key = mix64(key ^ (frame + 0x632be59bd9b4e019ULL));
    return mix64(key ^ static_cast<std::uint64_t>(purpose));
}

Engine make_engine(std::uint64_t seed, std::uint64_t shot, std::uint64_t frame, Purpose purpose)
{
    return Engine(stream_key(seed, shot, frame, purpose));
}

double draw_poisson(Engine& rng, double mean)
{
    if (!(mean > 0.0)) return 0.0;
    std::poisson_distribution<long> dist(mean);
    return static_cast<double>(dist(rng));
}

double draw_excess_poisson(Engine& rng, double mean, double excess)
{
    if (!(mean > 0.0)) return 0.0;
    if (!(excess > 0.0)) return draw_poisson(rng, mean);
    std::gamma_distribution<double> gamma(mean / excess, excess);
    return draw_poisson(rng, gamma(rng));
}

double draw_em_gain(Engine& rng, double n)
{
    if (!(n > 0.0)) return 0.0;
    std::gamma_distribution<double> gamma(n, 1.0);
    return gamma(rng);
}

AliasTable::AliasTable(const std::vector<double>& weights)
{
    const std::size_t n = weights.size();
    if (n == 0) throw ConfigError("alias table needs at least one weight");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("alias weights must be finite and non-negative");
        total += w;
    }
    if (!(total > 0.0)) throw ConfigError("alias weights sum to zero");

    std::vector<double> scaled(n);
    std::vector<std::size_t> small;
    std::vector<std::size_t> large;
    for (std::size_t i = 0; i < n; ++i) {
        scaled[i] = weights[i] * static_cast<double>(n) / total;
        (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    std::vector<double> prob(n, 1.0);
    alias_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) alias_[i] = i;
    while (!small.empty() && !large.empty()) {
        const std::size_t s = small.back();
        small.pop_back();
        const std::size_t l = large.back();
        prob[s] = scaled[s];
        alias_[s] = l;
        scaled[l] -= 1.0 - scaled[s];
        if (scaled[l] < 1.0) {
            large.pop_back();
            small.push_back(l);
        }
    }
    prob_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double threshold = std::ldexp(prob[i], 32);
        prob_[i] = threshold >= 4294967295.0 ? 0xFFFFFFFFu : static_cast<std::uint32_t>(threshold);
        if (prob[i] >= 1.0) alias_[i] = i;
    }
}

std::vector<double> pixel_gaussian_kernel(double s)
{
    if (!(s > 0.0)) throw ConfigError("kernel width must be positive");
    const int radius = std::max(1, static_cast<int>(std::ceil(5.0 * s)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    const double scale = 1.0 / (s * std::sqrt(2.0));
    double total = 0.0;
    for (int d = -radius; d <= radius; ++d) {
        const double p = 0.5 * (std::erf((d + 0.5) * scale) - std::erf((d - 0.5) * scale));
        k[static_cast<std::size_t>(d + radius)] = p;
        total += p;
    }
    for (double& p : k) p /= total;
    return k;
}

}  // namespace twinbeam
