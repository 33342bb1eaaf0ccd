#include <doctest.h>

#include <cmath>
#include <vector>

#include "geoadapt/common.hpp"
#include "geoadapt/stats.hpp"

using namespace geoadapt;

namespace {

double choose(uint64_t n, uint64_t k) {
    double r = 1.0;
    for (uint64_t i = 0; i < k; ++i) r = r * double(n - i) / double(i + 1);
    return r;
}

// Direct pmf summation, the oracle for the continued-fraction implementation.
double binom_cdf_oracle(uint64_t k, uint64_t n, double p) {
    double s = 0.0;
    for (uint64_t i = 0; i <= k; ++i)
        s += choose(n, i) * std::pow(p, double(i)) * std::pow(1.0 - p, double(n - i));
    return s;
}

}  // namespace

TEST_CASE("exact McNemar on pinned discordant counts") {
    // b=8, c=2: 2 * P(X <= 2), X ~ Binomial(10, 1/2) = 2 * (1+10+45)/1024.
    CHECK(std::abs(stats::mcnemar_counts(8, 2) - 112.0 / 1024.0) < 1e-12);
    CHECK(stats::mcnemar_counts(2, 8) == stats::mcnemar_counts(8, 2));
    CHECK(stats::mcnemar_counts(0, 0) == 1.0);
    // Balanced counts push past 1 and must clamp.
    CHECK(stats::mcnemar_counts(1, 1) == 1.0);
    CHECK(stats::mcnemar_counts(5, 5) == 1.0);
}

TEST_CASE("McNemar vector form counts discordant pairs") {
    std::vector<uint8_t> a{1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 1, 0, 1};
    std::vector<uint8_t> b{0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0, 1};
    // b=8 (a right, b wrong), c=2.
    CHECK(stats::mcnemar(a, b) == doctest::Approx(112.0 / 1024.0).epsilon(1e-12));
    CHECK_THROWS_AS((void)stats::mcnemar({1, 0}, {1}), Error);
    // Concordant-only outcomes carry no signal.
    CHECK(stats::mcnemar({1, 0, 1}, {1, 0, 1}) == 1.0);
}

TEST_CASE("McNemar agrees with a full binomial enumeration") {
    for (uint64_t b = 0; b <= 6; ++b)
        for (uint64_t c = 0; c <= 6; ++c) {
            uint64_t n = b + c;
            if (n == 0) continue;
            double expect = std::min(1.0, 2.0 * binom_cdf_oracle(std::min(b, c), n, 0.5));
            CHECK(stats::mcnemar_counts(b, c) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("Holm-Bonferroni on the pinned example") {
    auto adj = stats::holm_bonferroni({0.01, 0.04, 0.03});
    REQUIRE(adj.size() == 3);
    CHECK(std::abs(adj[0] - 0.03) < 1e-12);
    CHECK(std::abs(adj[1] - 0.06) < 1e-12);
    CHECK(std::abs(adj[2] - 0.06) < 1e-12);
}

TEST_CASE("Holm-Bonferroni properties on random inputs") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        size_t n = 1 + rng.uniform_int(8);
        std::vector<double> p;
        for (size_t i = 0; i < n; ++i) p.push_back(rng.uniform());
        auto adj = stats::holm_bonferroni(p);
        REQUIRE(adj.size() == n);
        std::vector<size_t> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return p[a] < p[b]; });
        double prev = 0.0;
        for (size_t rank = 0; rank < n; ++rank) {
            size_t i = order[rank];
            CHECK(adj[i] >= p[i]);
            CHECK(adj[i] <= 1.0);
            CHECK(adj[i] >= prev);  // monotone along the sorted order
            prev = adj[i];
        }
    }
    CHECK(stats::holm_bonferroni({}).empty());
    // A single p-value is returned unchanged.
    CHECK(stats::holm_bonferroni({0.2})[0] == doctest::Approx(0.2));
}

TEST_CASE("t p-values match pinned oracle values") {
    // Anchors from an independent statistics package.
    CHECK(stats::t_test_pvalue(2.0, 10) == doctest::Approx(0.073388034770740).epsilon(1e-9));
    CHECK(stats::t_test_pvalue(1.0, 5) == doctest::Approx(0.363217467649123).epsilon(1e-9));
    CHECK(stats::t_test_pvalue(0.5, 30) == doctest::Approx(0.620723004885127).epsilon(1e-9));
    CHECK(stats::t_test_pvalue(3.2, 7) == doctest::Approx(0.015065811342489).epsilon(1e-9));
    CHECK(stats::t_test_pvalue(0.0, 12) == doctest::Approx(1.0));
    CHECK(stats::t_test_pvalue(-2.0, 10) == doctest::Approx(stats::t_test_pvalue(2.0, 10)));
}

TEST_CASE("paired t-test on a pinned example and degenerate inputs") {
    std::vector<double> x{1.1, 2.3, 0.7, 1.9, 2.8, 1.5};
    std::vector<double> y{0.9, 2.0, 1.1, 1.4, 2.2, 1.6};
    CHECK(stats::paired_t_test(x, y) == doctest::Approx(0.286345943835038).epsilon(1e-9));
    CHECK(stats::paired_t_test(x, x) == 1.0);
    std::vector<double> shifted = x;
    for (double& v : shifted) v += 2.0;
    CHECK(stats::paired_t_test(x, shifted) == 0.0);
    CHECK_THROWS_AS((void)stats::paired_t_test({1.0}, {1.0, 2.0}), Error);
    CHECK_THROWS_AS((void)stats::paired_t_test({1.0}, {2.0}), Error);  // needs n >= 2
}

TEST_CASE("incomplete beta against pinned values and identities") {
    CHECK(stats::incomplete_beta(0.5, 0.5, 0.3) ==
          doctest::Approx(0.369010119565545).epsilon(1e-9));
    CHECK(stats::incomplete_beta(2.0, 3.0, 0.4) ==
          doctest::Approx(0.524800000000000).epsilon(1e-9));
    CHECK(stats::incomplete_beta(5.0, 1.0, 0.9) ==
          doctest::Approx(0.590490000000000).epsilon(1e-9));
    CHECK(stats::incomplete_beta(1.0, 1.0, 0.25) == doctest::Approx(0.25).epsilon(1e-12));
    // I_x(1, b) = 1 - (1-x)^b.
    for (double x : {0.1, 0.5, 0.9})
        CHECK(stats::incomplete_beta(1.0, 4.0, x) ==
              doctest::Approx(1.0 - std::pow(1.0 - x, 4.0)).epsilon(1e-10));
    CHECK(stats::incomplete_beta(2.0, 2.0, 0.0) == 0.0);
    CHECK(stats::incomplete_beta(2.0, 2.0, 1.0) == 1.0);
}

TEST_CASE("binomial CDF against direct summation and pinned values") {
    CHECK(stats::binomial_cdf(3, 10, 0.3) == doctest::Approx(0.649610718400000).epsilon(1e-12));
    CHECK(stats::binomial_cdf(8, 20, 0.5) == doctest::Approx(0.251722335815430).epsilon(1e-12));
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        uint64_t n = 1 + rng.uniform_int(15);
        uint64_t k = rng.uniform_int(n + 1);
        double p = 0.05 + 0.9 * rng.uniform();
        CHECK(stats::binomial_cdf(k, n, p) ==
              doctest::Approx(binom_cdf_oracle(k, n, p)).epsilon(1e-10));
    }
    CHECK(stats::binomial_cdf(10, 10, 0.7) == doctest::Approx(1.0));
}
