#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "geoadapt/common.hpp"

namespace geoadapt::world {

struct CitySpec {
    std::string name;
    double lon = 0.0;
    double lat = 0.0;
    std::string region;
};

/// Oriented line in lon/lat space. The signed distance is positive on the
/// left of the direction vector; that side is the form_a side.
struct IsoglossLine {
    double lon0 = 0.0;
    double lat0 = 0.0;
    double dir_lon = 0.0;
    double dir_lat = 1.0;

    double signed_distance(double lon, double lat) const;
};

/// Two linguistic variants separated by an isogloss. The probability of
/// form_a at a point is logistic in the signed distance to the line and is
/// exactly 0.5 on the line.
struct VariantPairSpec {
    std::string form_a;
    std::string form_b;
    IsoglossLine isogloss;
    double steepness = 1.0;

    double prob_form_a(double lon, double lat) const;
};

/// Knobs of the per-city unigram mixture used by the generator.
struct MixtureSpec {
    double region_token_prob = 0.22;       // marker or language-name token
    double characteristic_prob = 0.5;      // among shared-word draws
    size_t characteristic_words_per_city = 10;
    size_t markers_per_region = 4;
    double variant_slot_prob = 0.25;       // per pair per document
};

struct WorldSpec {
    std::vector<CitySpec> cities;
    std::vector<std::string> regions;
    std::vector<VariantPairSpec> variant_pairs;
    size_t shared_vocab_size = 160;
    std::array<size_t, 2> doc_length_range = {10, 18};
    double jitter_sigma_deg = 0.3;
    double toponym_mention_prob = 0.25;
    uint64_t seed = 1;
    MixtureSpec mixture;

    size_t region_index(const std::string& region) const;
    size_t city_index(const std::string& name) const;

    std::string to_json() const;
    static WorldSpec from_json(const std::string& text);
};

struct VariantSlot {
    size_t position = 0;
    size_t pair_index = 0;
    std::string chosen_form;
};

/// A token sequence with a geotag and generator-side gold labels. Gold
/// fields may be empty when external data is ingested.
struct GeoDocument {
    std::vector<std::string> tokens;
    double lon = 0.0;
    double lat = 0.0;
    std::string gold_city;
    std::string gold_region;
    std::vector<VariantSlot> variant_slots;
};

/// Throws Error naming the offending field if the spec is inconsistent.
void validate(const WorldSpec& spec);

/// The 12-city / 3-region / 8-variant-pair world used by the default
/// experiment configuration.
WorldSpec default_world();

/// Shared vocabulary tokens ("w000", ...), deterministic in the spec.
std::vector<std::string> shared_words(const WorldSpec& spec);

/// Region marker function words for one region (language-name token first).
std::vector<std::string> region_marker_words(const WorldSpec& spec, size_t region_index);

/// Characteristic shared-word ids for one city (indices into shared_words).
std::vector<size_t> characteristic_word_ids(const WorldSpec& spec, size_t city_index);

/// Every surface form the world can emit (shared words, markers, toponyms,
/// region names, variant forms); duplicates are not removed here.
std::vector<std::string> all_world_tokens(const WorldSpec& spec);

/// Samples n_docs documents: city uniform, geotag = city + isotropic Gaussian
/// jitter, tokens from the city-conditioned mixture, variant forms by the
/// logistic isogloss rule, toponym mention with the configured probability.
/// Deterministic given the seed.
std::vector<GeoDocument> generate_corpus(const WorldSpec& spec, size_t n_docs, uint64_t seed);

/// Nearest city by great-circle distance; ties break to the lowest index.
size_t reverse_geocode(double lon, double lat, const WorldSpec& spec);

void save_corpus(const std::vector<GeoDocument>& docs, const std::string& path);
std::vector<GeoDocument> load_corpus(const std::string& path);

/// Seeded shuffle-and-cut split; sizes are the rounded fractions and the
/// parts are disjoint and exhaustive.
struct CorpusSplit {
    std::vector<GeoDocument> train;
    std::vector<GeoDocument> dev;
    std::vector<GeoDocument> test;
};
CorpusSplit split_corpus(const std::vector<GeoDocument>& corpus,
                         const std::array<double, 3>& fractions, uint64_t seed);

}  // namespace geoadapt::world
