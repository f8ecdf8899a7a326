#include "specdec/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace specdec {

void VocabConfig::validate() const {
    if (size < 2) {
        throw ConfigError("vocab size must be >= 2, got " + std::to_string(size));
    }
    if (b_prob != 16 && b_prob != 32) {
        throw ConfigError("b_prob must be 16 or 32, got " + std::to_string(b_prob));
    }
}

bool Dist::is_valid(double tol) const {
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) return false;
        sum += p;
    }
    return std::abs(sum - 1.0) <= tol;
}

Dist Dist::uniform(std::size_t n) {
    Dist d;
    d.probs.assign(n, 1.0 / static_cast<double>(n));
    return d;
}

Dist Dist::point_mass(std::size_t n, TokenId t) {
    Dist d;
    d.probs.assign(n, 0.0);
    d.probs.at(t) = 1.0;
    return d;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t RngStream::bits_at(std::uint64_t index) const {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ round);
    h = splitmix64(h ^ static_cast<std::uint64_t>(role));
    h = splitmix64(h ^ index);
    return h;
}

double RngStream::at(std::uint64_t index) const {
    // Top 53 bits -> [0, 1) with full double resolution.
    return static_cast<double>(bits_at(index) >> 11) * 0x1.0p-53;
}

Dist normalize(std::span<const double> raw) {
    double sum = 0.0;
    for (double v : raw) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ZeroMassError("normalize: entries must be finite and >= 0");
        }
        sum += v;
    }
    if (sum <= 0.0) {
        throw ZeroMassError("normalize: zero total mass");
    }
    Dist d;
    d.probs.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) d.probs[i] = raw[i] / sum;
    return d;
}

TokenId sample(const Dist& d, double r) {
    if (d.size() == 0) throw ZeroMassError("sample: empty distribution");
    double cum = 0.0;
    std::size_t last_positive = 0;
    bool seen_positive = false;
    for (std::size_t i = 0; i < d.size(); ++i) {
        double p = d.probs[i];
        if (p > 0.0) {
            last_positive = i;
            seen_positive = true;
        }
        cum += p;
        if (r < cum) return static_cast<TokenId>(i);
    }
    if (!seen_positive) throw ZeroMassError("sample: zero total mass");
    // r landed beyond the accumulated mass (rounding); emit the last live token.
    return static_cast<TokenId>(last_positive);
}

Dist top_k_filter(const Dist& d, std::uint32_t k, double temperature) {
    if (temperature <= 0.0) throw ConfigError("top_k_filter: temperature must be > 0");
    if (k == 0 || k >= d.size()) k = static_cast<std::uint32_t>(d.size());

    // Count live entries first: when they already fit in k and temperature is
    // neutral the filter is the identity, which keeps large sparse vocabularies
    // cheap (one scan, no selection).
    std::size_t positive = 0;
    for (double p : d.probs) {
        if (p > 0.0) ++positive;
    }
    if (positive == 0) throw ZeroMassError("top_k_filter: zero total mass");
    if (positive <= k && temperature == 1.0) return d;

    std::vector<double> kept(d.size(), 0.0);
    if (positive <= k) {
        for (std::size_t i = 0; i < d.size(); ++i) kept[i] = d.probs[i];
    } else {
        // Order by probability descending, index ascending for ties, keep k.
        std::vector<std::uint32_t> idx(d.size());
        std::iota(idx.begin(), idx.end(), 0u);
        std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end(),
                         [&](std::uint32_t a, std::uint32_t b) {
                             if (d.probs[a] != d.probs[b]) return d.probs[a] > d.probs[b];
                             return a < b;
                         });
        for (std::uint32_t j = 0; j < k; ++j) kept[idx[j]] = d.probs[idx[j]];
    }
    if (temperature != 1.0) {
        double inv_t = 1.0 / temperature;
        for (double& p : kept) {
            if (p > 0.0) p = std::pow(p, inv_t);
        }
    }
    return normalize(kept);
}

}  // namespace specdec
