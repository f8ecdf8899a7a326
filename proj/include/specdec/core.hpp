#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace specdec {

using TokenId = std::uint32_t;

enum class Mode { Dsd, Dssd, LlmOnly };
enum class Role { Device, Edge };

struct SpecdecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ZeroMassError : SpecdecError {
    using SpecdecError::SpecdecError;
};
struct InvalidDraftProbError : SpecdecError {
    using SpecdecError::SpecdecError;
};
struct MalformedFrameError : SpecdecError {
    using SpecdecError::SpecdecError;
};
struct DesyncError : SpecdecError {
    using SpecdecError::SpecdecError;
};
struct ConfigError : SpecdecError {
    using SpecdecError::SpecdecError;
};
struct CalibrationInfeasibleError : SpecdecError {
    CalibrationInfeasibleError(const std::string& msg, double achieved)
        : SpecdecError(msg), achieved_alpha(achieved) {}
    double achieved_alpha;
};

struct VocabConfig {
    std::uint32_t size = 2;
    int b_prob = 16;  // bits per probability value on the wire: 16 or 32

    void validate() const;
};

// Probability vector over the shared vocabulary.
struct Dist {
    std::vector<double> probs;

    Dist() = default;
    explicit Dist(std::vector<double> p) : probs(std::move(p)) {}

    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }
    bool is_valid(double tol = 1e-9) const;

    static Dist uniform(std::size_t n);
    static Dist point_mass(std::size_t n, TokenId t);

    bool operator==(const Dist&) const = default;
};

enum class RngRole : std::uint32_t {
    DraftSample = 1,
    AcceptDraw = 2,
    ResampleDraw = 3,
    BonusDraw = 4,
};

std::uint64_t splitmix64(std::uint64_t x);

// Counter-based uniform stream keyed by (seed, round, role). Draw i is a pure
// function of the key and i, so any endpoint reproduces the same sequence
// without shared state or draw-order coupling.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t round = 0;
    RngRole role = RngRole::DraftSample;

    std::uint64_t bits_at(std::uint64_t index) const;
    double at(std::uint64_t index) const;  // in [0, 1)
};

// raw scaled by 1/sum(raw). Throws ZeroMassError when the mass is zero.
Dist normalize(std::span<const double> raw);

// Inverse-CDF sampling with left-to-right accumulation: smallest index whose
// cumulative probability exceeds r.
TokenId sample(const Dist& d, double r);

// Zeroes everything outside the k largest entries (ties at the k-th value keep
// the lower index), raises survivors to 1/temperature and renormalizes.
// k == 0 disables the filter.
Dist top_k_filter(const Dist& d, std::uint32_t k, double temperature);

struct SamplingConfig {
    std::uint32_t top_k = 0;  // 0 = no filtering
    double temperature = 1.0;
};

}  // namespace specdec
