#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "geoadapt/common.hpp"

namespace geoadapt::cluster {

/// (longitude, latitude) in degrees.
using GeoPoint = std::array<double, 2>;

inline constexpr double kEarthRadiusKm = 6371.0088;

/// Haversine great-circle distance in kilometers.
double geodesic_km(const GeoPoint& a, const GeoPoint& b);

/// Per-coordinate standardization statistics (degrees -> z-scores).
struct CoordStats {
    double mean_lon = 0.0;
    double mean_lat = 0.0;
    double std_lon = 1.0;
    double std_lat = 1.0;

    static CoordStats fit(const std::vector<GeoPoint>& points);
    std::array<double, 2> standardize(const GeoPoint& p) const;
    GeoPoint destandardize(const std::array<double, 2>& z) const;
};

/// K-means over standardized coordinates. Assignment is nearest centroid by
/// Euclidean distance in standardized space, ties to the lowest index.
struct ClusterModel {
    CoordStats stats;
    size_t k = 0;
    std::vector<std::array<double, 2>> centroids;  // standardized

    std::string to_json() const;
    static ClusterModel from_json(const std::string& text);
};

/// Lloyd's algorithm with k-means++ seeding; iterates to an assignment
/// fixpoint or 300 iterations. Throws if there are fewer points than k.
ClusterModel fit_kmeans(const std::vector<GeoPoint>& points, size_t k, uint64_t seed);

size_t assign(const ClusterModel& model, double lon, double lat);

/// De-standardized centroid location of one cluster.
GeoPoint centroid_geo(const ClusterModel& model, size_t index);

/// Median of per-pair great-circle distances; even count averages the two
/// middle values. Throws on empty or mismatched inputs.
double median_distance_km(const std::vector<GeoPoint>& predicted,
                          const std::vector<GeoPoint>& gold);

/// Median of a value list (same convention as median_distance_km).
double median(std::vector<double> values);

}  // namespace geoadapt::cluster
