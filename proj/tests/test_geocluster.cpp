#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "geoadapt/geocluster.hpp"

using namespace geoadapt;
using cluster::GeoPoint;

namespace {

// Independent great-circle formula (atan2 form, not the haversine used by
// the implementation).
double oracle_km(const GeoPoint& a, const GeoPoint& b) {
    double rad = std::numbers::pi / 180.0;
    double lon1 = a[0] * rad, lat1 = a[1] * rad;
    double lon2 = b[0] * rad, lat2 = b[1] * rad;
    double dl = lon2 - lon1;
    double y = std::hypot(std::cos(lat2) * std::sin(dl),
                          std::cos(lat1) * std::sin(lat2) -
                              std::sin(lat1) * std::cos(lat2) * std::cos(dl));
    double x = std::sin(lat1) * std::sin(lat2) + std::cos(lat1) * std::cos(lat2) * std::cos(dl);
    return cluster::kEarthRadiusKm * std::atan2(y, x);
}

}  // namespace

TEST_CASE("geodesic distance matches an independent formula") {
    Rng rng(42);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        GeoPoint a{rng.uniform() * 360.0 - 180.0, rng.uniform() * 180.0 - 90.0};
        GeoPoint b{rng.uniform() * 360.0 - 180.0, rng.uniform() * 180.0 - 90.0};
        worst = std::max(worst, std::abs(cluster::geodesic_km(a, b) - oracle_km(a, b)));
    }
    CHECK(worst < 0.1);
}

TEST_CASE("geodesic distance basics") {
    CHECK(cluster::geodesic_km({10.0, 50.0}, {10.0, 50.0}) == doctest::Approx(0.0));
    // One degree of longitude on the equator.
    double expected = cluster::kEarthRadiusKm * std::numbers::pi / 180.0;
    CHECK(cluster::geodesic_km({0.0, 0.0}, {1.0, 0.0}) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(cluster::geodesic_km({5.0, 30.0}, {-70.0, -12.0}) ==
          doctest::Approx(cluster::geodesic_km({-70.0, -12.0}, {5.0, 30.0})));
    // Antipodal points: half the circumference.
    CHECK(cluster::geodesic_km({0.0, 0.0}, {180.0, 0.0}) ==
          doctest::Approx(cluster::kEarthRadiusKm * std::numbers::pi).epsilon(1e-9));
}

TEST_CASE("coordinate standardization round-trips") {
    std::vector<GeoPoint> pts{{1.0, 2.0}, {3.0, 6.0}, {5.0, 10.0}};
    cluster::CoordStats st = cluster::CoordStats::fit(pts);
    CHECK(st.mean_lon == doctest::Approx(3.0));
    CHECK(st.mean_lat == doctest::Approx(6.0));
    for (const auto& p : pts) {
        auto z = st.standardize(p);
        auto back = st.destandardize(z);
        CHECK(back[0] == doctest::Approx(p[0]).epsilon(1e-12));
        CHECK(back[1] == doctest::Approx(p[1]).epsilon(1e-12));
    }
    // Standardized coordinates have zero mean and unit variance.
    double mz0 = 0.0, mz1 = 0.0, v0 = 0.0, v1 = 0.0;
    for (const auto& p : pts) {
        auto z = st.standardize(p);
        mz0 += z[0];
        mz1 += z[1];
        v0 += z[0] * z[0];
        v1 += z[1] * z[1];
    }
    CHECK(mz0 / 3 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(mz1 / 3 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v0 / 3 == doctest::Approx(1.0));
    CHECK(v1 / 3 == doctest::Approx(1.0));
}

TEST_CASE("k-means assignments agree with a linear-scan oracle") {
    Rng rng(7);
    std::vector<GeoPoint> pts;
    for (int i = 0; i < 1000; ++i)
        pts.push_back({rng.uniform() * 20.0, 40.0 + rng.uniform() * 20.0});
    cluster::ClusterModel m = cluster::fit_kmeans(pts, 7, 11);
    REQUIRE(m.k == 7);
    REQUIRE(m.centroids.size() == 7);
    for (const auto& p : pts) {
        auto z = m.stats.standardize(p);
        size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < m.k; ++c) {
            double dx = z[0] - m.centroids[c][0];
            double dy = z[1] - m.centroids[c][1];
            double d = dx * dx + dy * dy;
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        CHECK(cluster::assign(m, p[0], p[1]) == best);
    }
}

TEST_CASE("k-means recovers well-separated blobs") {
    Rng rng(3);
    std::vector<GeoPoint> centers{{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}, {10.0, 10.0}};
    std::vector<GeoPoint> pts;
    std::vector<size_t> blob;
    for (int i = 0; i < 400; ++i) {
        size_t b = static_cast<size_t>(rng.uniform_int(4));
        blob.push_back(b);
        pts.push_back({centers[b][0] + rng.normal() * 0.3, centers[b][1] + rng.normal() * 0.3});
    }
    cluster::ClusterModel m = cluster::fit_kmeans(pts, 4, 5);
    // Same-blob points land in the same cluster, different blobs in different ones.
    std::vector<size_t> repr(4, SIZE_MAX);
    for (size_t i = 0; i < pts.size(); ++i) {
        size_t c = cluster::assign(m, pts[i][0], pts[i][1]);
        if (repr[blob[i]] == SIZE_MAX) repr[blob[i]] = c;
        CHECK(c == repr[blob[i]]);
    }
    std::sort(repr.begin(), repr.end());
    CHECK(std::adjacent_find(repr.begin(), repr.end()) == repr.end());
    // Centroids sit near the blob centers.
    for (size_t b = 0; b < 4; ++b) {
        GeoPoint g = cluster::centroid_geo(m, cluster::assign(m, centers[b][0], centers[b][1]));
        CHECK(std::abs(g[0] - centers[b][0]) < 0.3);
        CHECK(std::abs(g[1] - centers[b][1]) < 0.3);
    }
}

TEST_CASE("k-means rejects underdetermined input") {
    std::vector<GeoPoint> pts{{0.0, 0.0}, {1.0, 1.0}};
    CHECK_THROWS_AS((void)cluster::fit_kmeans(pts, 3, 1), Error);
}

TEST_CASE("median matches a sort oracle") {
    Rng rng(9);
    for (size_t n : {1u, 2u, 5u, 100u, 101u}) {
        std::vector<double> v;
        for (size_t i = 0; i < n; ++i) v.push_back(rng.uniform() * 100.0);
        std::vector<double> sorted = v;
        std::sort(sorted.begin(), sorted.end());
        double expect = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        CHECK(cluster::median(v) == doctest::Approx(expect).epsilon(1e-15));
    }
    CHECK_THROWS_AS((void)cluster::median({}), Error);
}

TEST_CASE("median distance pairs predictions with gold points") {
    std::vector<GeoPoint> pred{{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
    std::vector<GeoPoint> gold{{1.0, 0.0}, {2.0, 0.0}, {3.0, 0.0}};
    double deg = cluster::kEarthRadiusKm * std::numbers::pi / 180.0;
    CHECK(cluster::median_distance_km(pred, gold) == doctest::Approx(2.0 * deg).epsilon(1e-9));
    CHECK_THROWS_AS((void)cluster::median_distance_km(pred, {{0.0, 0.0}}), Error);
}

TEST_CASE("cluster model JSON round-trip") {
    Rng rng(13);
    std::vector<GeoPoint> pts;
    for (int i = 0; i < 50; ++i) pts.push_back({rng.uniform() * 5.0, rng.uniform() * 5.0});
    cluster::ClusterModel m = cluster::fit_kmeans(pts, 3, 2);
    cluster::ClusterModel back = cluster::ClusterModel::from_json(m.to_json());
    CHECK(back.k == m.k);
    REQUIRE(back.centroids.size() == m.centroids.size());
    for (size_t c = 0; c < m.k; ++c) {
        CHECK(back.centroids[c][0] == m.centroids[c][0]);
        CHECK(back.centroids[c][1] == m.centroids[c][1]);
    }
    for (const auto& p : pts) CHECK(cluster::assign(back, p[0], p[1]) == cluster::assign(m, p[0], p[1]));
    CHECK_THROWS_AS((void)cluster::ClusterModel::from_json("{"), Error);
}
