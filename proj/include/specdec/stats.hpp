#pragma once

#include <cstdint>
#include <span>

namespace specdec {

// Regularized lower incomplete gamma at (df/2, x/2): P(X <= x) for a
// chi-squared variable with df degrees of freedom.
double chi_squared_cdf(double x, double df);

struct ChiSquaredResult {
    double stat = 0.0;
    int dof = 0;
    double p_value = 1.0;  // upper tail
};

// Goodness-of-fit of observed counts against expected probabilities. Bins with
// expected count below min_expected are pooled (in index order) into the next
// bin so the asymptotic distribution holds; dof = pooled bins - 1.
ChiSquaredResult chi_squared_gof(std::span<const std::uint64_t> observed,
                                 std::span<const double> expected_probs,
                                 double min_expected = 5.0);

}  // namespace specdec
