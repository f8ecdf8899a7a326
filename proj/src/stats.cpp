#include "specdec/stats.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include "specdec/core.hpp"

namespace specdec {

double chi_squared_cdf(double x, double df) {
    if (df <= 0.0) throw ConfigError("chi_squared_cdf: df must be > 0");
    if (x <= 0.0) return 0.0;
    return boost::math::gamma_p(df / 2.0, x / 2.0);
}

ChiSquaredResult chi_squared_gof(std::span<const std::uint64_t> observed,
                                 std::span<const double> expected_probs,
                                 double min_expected) {
    if (observed.size() != expected_probs.size() || observed.empty()) {
        throw ConfigError("chi_squared_gof: need matching, nonempty bins");
    }
    std::uint64_t n = 0;
    for (auto o : observed) n += o;
    if (n == 0) throw ConfigError("chi_squared_gof: no observations");

    // Pool under-filled bins left to right; a trailing small pool folds into
    // the last kept bin.
    std::vector<double> exp_bins;
    std::vector<double> obs_bins;
    double exp_acc = 0.0;
    double obs_acc = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        exp_acc += expected_probs[i] * static_cast<double>(n);
        obs_acc += static_cast<double>(observed[i]);
        if (exp_acc >= min_expected) {
            exp_bins.push_back(exp_acc);
            obs_bins.push_back(obs_acc);
            exp_acc = 0.0;
            obs_acc = 0.0;
        }
    }
    if (exp_acc > 0.0 || obs_acc > 0.0) {
        if (exp_bins.empty()) throw ConfigError("chi_squared_gof: too few expected counts");
        exp_bins.back() += exp_acc;
        obs_bins.back() += obs_acc;
    }
    if (exp_bins.size() < 2) {
        throw ConfigError("chi_squared_gof: need at least 2 pooled bins");
    }

    ChiSquaredResult res;
    for (std::size_t i = 0; i < exp_bins.size(); ++i) {
        double d = obs_bins[i] - exp_bins[i];
        res.stat += d * d / exp_bins[i];
    }
    res.dof = static_cast<int>(exp_bins.size()) - 1;
    res.p_value = boost::math::gamma_q(res.dof / 2.0, res.stat / 2.0);
    return res;
}

}  // namespace specdec
