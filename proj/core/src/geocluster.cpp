#include "geoadapt/geocluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace geoadapt::cluster {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

double sq(double x) { return x * x; }

double sq_dist(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return sq(a[0] - b[0]) + sq(a[1] - b[1]);
}

size_t nearest_centroid(const std::vector<std::array<double, 2>>& centroids,
                        const std::array<double, 2>& p) {
    size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < centroids.size(); ++j) {
        const double d = sq_dist(centroids[j], p);
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

}  // namespace

double geodesic_km(const GeoPoint& a, const GeoPoint& b) {
    const double lon1 = a[0] * kDegToRad, lat1 = a[1] * kDegToRad;
    const double lon2 = b[0] * kDegToRad, lat2 = b[1] * kDegToRad;
    const double sdlat = std::sin(0.5 * (lat2 - lat1));
    const double sdlon = std::sin(0.5 * (lon2 - lon1));
    const double h = sdlat * sdlat + std::cos(lat1) * std::cos(lat2) * sdlon * sdlon;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

CoordStats CoordStats::fit(const std::vector<GeoPoint>& points) {
    if (points.empty()) throw Error("CoordStats::fit: empty point list");
    CoordStats s;
    for (const auto& p : points) {
        s.mean_lon += p[0];
        s.mean_lat += p[1];
    }
    const double n = static_cast<double>(points.size());
    s.mean_lon /= n;
    s.mean_lat /= n;
    double v_lon = 0.0, v_lat = 0.0;
    for (const auto& p : points) {
        v_lon += sq(p[0] - s.mean_lon);
        v_lat += sq(p[1] - s.mean_lat);
    }
    s.std_lon = std::sqrt(v_lon / n);
    s.std_lat = std::sqrt(v_lat / n);
    if (s.std_lon <= 0.0) throw Error("CoordStats::fit: zero variance in field lon");
    if (s.std_lat <= 0.0) throw Error("CoordStats::fit: zero variance in field lat");
    return s;
}

std::array<double, 2> CoordStats::standardize(const GeoPoint& p) const {
    return {(p[0] - mean_lon) / std_lon, (p[1] - mean_lat) / std_lat};
}

GeoPoint CoordStats::destandardize(const std::array<double, 2>& z) const {
    return {z[0] * std_lon + mean_lon, z[1] * std_lat + mean_lat};
}

ClusterModel fit_kmeans(const std::vector<GeoPoint>& points, size_t k, uint64_t seed) {
    if (k < 1) throw Error("fit_kmeans: k must be >= 1");
    if (points.size() < k) {
        throw Error("fit_kmeans: fewer points (" + std::to_string(points.size()) +
                    ") than clusters (" + std::to_string(k) + ")");
    }
    ClusterModel model;
    model.stats = CoordStats::fit(points);
    model.k = k;

    std::vector<std::array<double, 2>> z(points.size());
    for (size_t i = 0; i < points.size(); ++i) z[i] = model.stats.standardize(points[i]);

    // k-means++ seeding.
    Rng rng(seed);
    std::vector<std::array<double, 2>>& c = model.centroids;
    c.push_back(z[rng.uniform_int(z.size())]);
    std::vector<double> d2(z.size());
    while (c.size() < k) {
        double total = 0.0;
        for (size_t i = 0; i < z.size(); ++i) {
            d2[i] = sq_dist(z[i], c[nearest_centroid(c, z[i])]);
            total += d2[i];
        }
        size_t pick;
        if (total <= 0.0) {
            pick = rng.uniform_int(z.size());
        } else {
            double r = rng.uniform() * total;
            pick = z.size() - 1;
            for (size_t i = 0; i < z.size(); ++i) {
                r -= d2[i];
                if (r <= 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        c.push_back(z[pick]);
    }

    // Lloyd iterations until the assignment fixpoint (or 300 rounds).
    std::vector<size_t> labels(z.size(), k);
    for (int iter = 0; iter < 300; ++iter) {
        bool changed = false;
        for (size_t i = 0; i < z.size(); ++i) {
            const size_t j = nearest_centroid(c, z[i]);
            if (j != labels[i]) {
                labels[i] = j;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<std::array<double, 2>> sums(k, {0.0, 0.0});
        std::vector<size_t> counts(k, 0);
        for (size_t i = 0; i < z.size(); ++i) {
            sums[labels[i]][0] += z[i][0];
            sums[labels[i]][1] += z[i][1];
            ++counts[labels[i]];
        }
        for (size_t j = 0; j < k; ++j) {
            if (counts[j] > 0) {
                c[j][0] = sums[j][0] / static_cast<double>(counts[j]);
                c[j][1] = sums[j][1] / static_cast<double>(counts[j]);
            }
            // Empty clusters keep their previous centroid.
        }
    }
    return model;
}

size_t assign(const ClusterModel& model, double lon, double lat) {
    if (model.centroids.empty()) throw Error("assign: cluster model has no centroids");
    return nearest_centroid(model.centroids, model.stats.standardize({lon, lat}));
}

GeoPoint centroid_geo(const ClusterModel& model, size_t index) {
    if (index >= model.centroids.size()) {
        throw Error("centroid_geo: index " + std::to_string(index) + " out of range");
    }
    return model.stats.destandardize(model.centroids[index]);
}

double median(std::vector<double> values) {
    if (values.empty()) throw Error("median: empty value list");
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double median_distance_km(const std::vector<GeoPoint>& predicted,
                          const std::vector<GeoPoint>& gold) {
    if (predicted.size() != gold.size()) {
        throw Error("median_distance_km: length mismatch (" + std::to_string(predicted.size()) +
                    " vs " + std::to_string(gold.size()) + ")");
    }
    if (predicted.empty()) throw Error("median_distance_km: empty lists");
    std::vector<double> d(predicted.size());
    for (size_t i = 0; i < predicted.size(); ++i) d[i] = geodesic_km(predicted[i], gold[i]);
    return median(std::move(d));
}

std::string ClusterModel::to_json() const {
    nlohmann::json j;
    j["mean"] = {stats.mean_lon, stats.mean_lat};
    j["std"] = {stats.std_lon, stats.std_lat};
    j["k"] = k;
    j["centroids"] = centroids;
    return j.dump(2);
}

ClusterModel ClusterModel::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("ClusterModel::from_json: ") + e.what());
    }
    ClusterModel m;
    try {
        m.stats.mean_lon = j.at("mean").at(0).get<double>();
        m.stats.mean_lat = j.at("mean").at(1).get<double>();
        m.stats.std_lon = j.at("std").at(0).get<double>();
        m.stats.std_lat = j.at("std").at(1).get<double>();
        m.k = j.at("k").get<size_t>();
        m.centroids = j.at("centroids").get<std::vector<std::array<double, 2>>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("ClusterModel::from_json: missing field: ") + e.what());
    }
    if (m.centroids.size() != m.k) throw Error("ClusterModel::from_json: centroid count != k");
    return m;
}

}  // namespace geoadapt::cluster
