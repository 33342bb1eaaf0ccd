#include "geoadapt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geoadapt/common.hpp"

namespace geoadapt::stats {

namespace {

double log_binom_coeff(uint64_t n, uint64_t k) {
    return std::lgamma(static_cast<double>(n) + 1.0) -
           std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
}

}  // namespace

double binomial_cdf(uint64_t k, uint64_t n, double p) {
    if (k >= n) return 1.0;
    if (p <= 0.0) return 1.0;
    if (p >= 1.0) return 0.0;
    // Small n: exact summation of C(n,i) p^i (1-p)^(n-i); all coefficients are
    // exactly representable in double for n <= 60.
    if (n <= 60) {
        double sum = 0.0;
        double coeff = 1.0;  // C(n, 0)
        for (uint64_t i = 0; i <= k; ++i) {
            sum += coeff * std::pow(p, static_cast<double>(i)) *
                   std::pow(1.0 - p, static_cast<double>(n - i));
            coeff = coeff * static_cast<double>(n - i) / static_cast<double>(i + 1);
        }
        return std::min(1.0, sum);
    }
    // Large n: log-space summation.
    const double lp = std::log(p), lq = std::log1p(-p);
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(k + 1);
    for (uint64_t i = 0; i <= k; ++i) {
        terms[i] = log_binom_coeff(n, i) + static_cast<double>(i) * lp +
                   static_cast<double>(n - i) * lq;
        max_term = std::max(max_term, terms[i]);
    }
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - max_term);
    return std::min(1.0, std::exp(max_term) * sum);
}

double mcnemar_counts(uint64_t b, uint64_t c) {
    const uint64_t n = b + c;
    if (n == 0) return 1.0;
    const uint64_t m = std::min(b, c);
    return std::min(1.0, 2.0 * binomial_cdf(m, n, 0.5));
}

double mcnemar(const std::vector<uint8_t>& correct_a, const std::vector<uint8_t>& correct_b) {
    if (correct_a.size() != correct_b.size()) {
        throw Error("mcnemar: length mismatch (" + std::to_string(correct_a.size()) + " vs " +
                    std::to_string(correct_b.size()) + ")");
    }
    uint64_t b = 0, c = 0;
    for (size_t i = 0; i < correct_a.size(); ++i) {
        if (correct_a[i] && !correct_b[i]) ++b;
        if (!correct_a[i] && correct_b[i]) ++c;
    }
    return mcnemar_counts(b, c);
}

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    // Continued fraction converges fastest for x < (a+1)/(a+b+2).
    if (x > (a + 1.0) / (a + b + 2.0)) {
        return 1.0 - incomplete_beta(b, a, 1.0 - x);
    }
    // I_x(a,b) = x^a (1-x)^b / (a B(a,b)) * 1/(1 + d1/(1 + d2/(1 + ...)))
    const double ln_front = a * std::log(x) + b * std::log1p(-x) -
                            (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b)) -
                            std::log(a);
    // Modified Lentz over paired even/odd coefficients; the first odd term
    // seeds the recurrence.
    const double tiny = 1e-300;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double f = d;
    for (int m = 1; m <= 400; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        d = 1.0 / d;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        f *= c * d;
        aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        d = 1.0 / d;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        const double delta = c * d;
        f *= delta;
        if (std::fabs(delta - 1.0) < 1e-15) break;
    }
    return std::exp(ln_front) * f;
}

double t_test_pvalue(double t, double df) {
    if (df <= 0.0) throw Error("t_test_pvalue: degrees of freedom must be positive");
    // Two-sided: p = I_{df/(df+t^2)}(df/2, 1/2).
    const double x = df / (df + t * t);
    return std::clamp(incomplete_beta(0.5 * df, 0.5, x), 0.0, 1.0);
}

double paired_t_test(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) {
        throw Error("paired_t_test: length mismatch (" + std::to_string(x.size()) + " vs " +
                    std::to_string(y.size()) + ")");
    }
    if (x.size() < 2) throw Error("paired_t_test: needs at least 2 pairs");
    const size_t n = x.size();
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += x[i] - y[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = (x[i] - y[i]) - mean;
        ss += d * d;
    }
    const double var = ss / static_cast<double>(n - 1);
    if (var == 0.0) return mean == 0.0 ? 1.0 : 0.0;
    const double t = mean / std::sqrt(var / static_cast<double>(n));
    return t_test_pvalue(t, static_cast<double>(n - 1));
}

std::vector<double> holm_bonferroni(const std::vector<double>& pvals) {
    const size_t m = pvals.size();
    std::vector<size_t> order(m);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return pvals[a] < pvals[b]; });
    std::vector<double> adjusted(m);
    double running_max = 0.0;
    for (size_t i = 0; i < m; ++i) {
        const double scaled = pvals[order[i]] * static_cast<double>(m - i);
        running_max = std::max(running_max, scaled);
        adjusted[order[i]] = std::min(1.0, running_max);
    }
    return adjusted;
}

}  // namespace geoadapt::stats
