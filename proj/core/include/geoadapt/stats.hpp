#pragma once

#include <cstdint>
#include <vector>

namespace geoadapt::stats {

/// Exact McNemar test on paired binary outcomes. With b = (a right, b wrong)
/// and c = (a wrong, b right) discordant counts, the p-value is
/// min(1, 2 * P(X <= min(b, c))) for X ~ Binomial(b + c, 1/2); b + c = 0
/// yields p = 1. Throws on length mismatch.
double mcnemar(const std::vector<uint8_t>& correct_a, const std::vector<uint8_t>& correct_b);

/// Exact variant when the discordant counts are already known.
double mcnemar_counts(uint64_t b, uint64_t c);

/// Paired two-sided Student's t-test with n-1 degrees of freedom. Zero-variance
/// differences short-circuit: p = 1 if the difference is identically zero,
/// p = 0 for a constant nonzero difference.
double paired_t_test(const std::vector<double>& x, const std::vector<double>& y);

/// Two-sided p-value for a t statistic with df degrees of freedom.
double t_test_pvalue(double t, double df);

/// Holm-Bonferroni step-down adjustment. Returns adjusted p-values in the
/// original order, each >= input and <= 1, monotone in the sorted order.
std::vector<double> holm_bonferroni(const std::vector<double>& pvals);

/// Regularized incomplete beta function I_x(a, b) via Lentz's continued
/// fraction; exposed for the test oracles.
double incomplete_beta(double a, double b, double x);

/// P(X <= k) for X ~ Binomial(n, p).
double binomial_cdf(uint64_t k, uint64_t n, double p);

}  // namespace geoadapt::stats
