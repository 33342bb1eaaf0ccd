#include "geoadapt/geoworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "geoadapt/geocluster.hpp"

namespace geoadapt::world {

using nlohmann::json;

double IsoglossLine::signed_distance(double lon, double lat) const {
    double norm = std::hypot(dir_lon, dir_lat);
    if (norm == 0.0) throw Error("isogloss direction vector is zero");
    // 2-D cross product: positive on the left of the direction vector.
    return (dir_lon * (lat - lat0) - dir_lat * (lon - lon0)) / norm;
}

double VariantPairSpec::prob_form_a(double lon, double lat) const {
    double d = isogloss.signed_distance(lon, lat);
    return 1.0 / (1.0 + std::exp(-steepness * d));
}

size_t WorldSpec::region_index(const std::string& region) const {
    for (size_t i = 0; i < regions.size(); ++i)
        if (regions[i] == region) return i;
    throw Error("unknown region '" + region + "'");
}

size_t WorldSpec::city_index(const std::string& name) const {
    for (size_t i = 0; i < cities.size(); ++i)
        if (cities[i].name == name) return i;
    throw Error("unknown city '" + name + "'");
}

void validate(const WorldSpec& spec) {
    if (spec.cities.empty()) throw Error("world spec: cities must be non-empty");
    if (spec.regions.empty()) throw Error("world spec: regions must be non-empty");
    if (spec.shared_vocab_size == 0) throw Error("world spec: shared_vocab_size must be positive");
    if (spec.doc_length_range[0] < 1 || spec.doc_length_range[0] > spec.doc_length_range[1])
        throw Error("world spec: doc_length_range must satisfy 1 <= min <= max");
    if (spec.jitter_sigma_deg < 0.0) throw Error("world spec: jitter_sigma_deg must be >= 0");
    if (spec.toponym_mention_prob < 0.0 || spec.toponym_mention_prob > 1.0)
        throw Error("world spec: toponym_mention_prob must be in [0, 1]");
    if (spec.mixture.region_token_prob < 0.0 || spec.mixture.region_token_prob > 1.0)
        throw Error("world spec: mixture.region_token_prob must be in [0, 1]");
    if (spec.mixture.characteristic_prob < 0.0 || spec.mixture.characteristic_prob > 1.0)
        throw Error("world spec: mixture.characteristic_prob must be in [0, 1]");
    if (spec.mixture.variant_slot_prob < 0.0 || spec.mixture.variant_slot_prob > 1.0)
        throw Error("world spec: mixture.variant_slot_prob must be in [0, 1]");

    std::unordered_set<std::string> region_set(spec.regions.begin(), spec.regions.end());
    if (region_set.size() != spec.regions.size())
        throw Error("world spec: duplicate region name");

    for (const auto& c : spec.cities) {
        if (c.name.empty()) throw Error("world spec: city with empty name");
        if (c.lon < -180.0 || c.lon > 180.0 || c.lat < -90.0 || c.lat > 90.0)
            throw Error("world spec: city '" + c.name + "' has out-of-range coordinates");
        if (!region_set.count(c.region))
            throw Error("world spec: city '" + c.name + "' references unknown region '" +
                        c.region + "'");
    }

    for (const auto& p : spec.variant_pairs) {
        if (p.form_a.empty() || p.form_b.empty())
            throw Error("world spec: variant pair with empty form");
        if (p.form_a == p.form_b)
            throw Error("world spec: variant pair '" + p.form_a + "' has identical forms");
        if (p.steepness <= 0.0)
            throw Error("world spec: variant pair '" + p.form_a + "' needs steepness > 0");
        if (std::hypot(p.isogloss.dir_lon, p.isogloss.dir_lat) == 0.0)
            throw Error("world spec: variant pair '" + p.form_a + "' has a zero isogloss direction");
    }

    // Every surface form must be unique across categories; collisions make
    // gold labels ambiguous.
    std::unordered_map<std::string, std::string> seen;
    auto claim = [&](const std::string& tok, const std::string& category) {
        auto [it, inserted] = seen.emplace(tok, category);
        if (!inserted)
            throw Error("world spec: surface form '" + tok + "' used as both " + it->second +
                        " and " + category);
    };
    for (const auto& w : shared_words(spec)) claim(w, "shared word");
    for (const auto& c : spec.cities) claim(c.name, "city name");
    for (size_t r = 0; r < spec.regions.size(); ++r)
        for (const auto& m : region_marker_words(spec, r)) claim(m, "region marker");
    for (const auto& p : spec.variant_pairs) {
        claim(p.form_a, "variant form");
        claim(p.form_b, "variant form");
    }
}

WorldSpec default_world() {
    WorldSpec spec;
    spec.regions = {"nordia", "mezzia", "sudava"};
    // Four cities per region; two on each side of the shared isogloss at
    // lon = 10.75.
    spec.cities = {
        {"arvik", 6.0, 56.5, "nordia"},   {"byholm", 9.0, 57.2, "nordia"},
        {"crona", 12.0, 56.8, "nordia"},  {"dravek", 15.0, 57.5, "nordia"},
        {"elsta", 6.5, 52.5, "mezzia"},   {"fenvik", 9.5, 53.2, "mezzia"},
        {"gorlund", 12.5, 52.8, "mezzia"},{"hestrad", 15.5, 53.4, "mezzia"},
        {"ilmava", 6.2, 48.6, "sudava"},  {"jarno", 9.2, 49.3, "sudava"},
        {"kresta", 12.2, 48.9, "sudava"}, {"lodva", 15.2, 49.5, "sudava"},
    };
    IsoglossLine iso{10.75, 53.0, 0.0, 1.0};
    const char* stems[] = {"ml", "br", "sv", "tr", "gn", "pl", "kr", "dv"};
    for (const char* s : stems) {
        VariantPairSpec pair;
        pair.form_a = std::string(s) + "ijeva";
        pair.form_b = std::string(s) + "eva";
        pair.isogloss = iso;
        pair.steepness = 2.0;
        spec.variant_pairs.push_back(pair);
    }
    spec.shared_vocab_size = 160;
    spec.doc_length_range = {10, 18};
    spec.jitter_sigma_deg = 0.3;
    spec.toponym_mention_prob = 0.25;
    spec.seed = 20240915;
    return spec;
}

std::vector<std::string> shared_words(const WorldSpec& spec) {
    std::vector<std::string> words;
    words.reserve(spec.shared_vocab_size);
    for (size_t i = 0; i < spec.shared_vocab_size; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "w%03zu", i);
        words.emplace_back(buf);
    }
    return words;
}

std::vector<std::string> region_marker_words(const WorldSpec& spec, size_t region_index) {
    if (region_index >= spec.regions.size())
        throw Error("region index out of range");
    // The region name itself doubles as the language-name token; it appears
    // in running text like any other function word, which is what makes the
    // language identity recoverable from a masked slot.
    std::vector<std::string> words = {spec.regions[region_index]};
    for (size_t i = 0; i < spec.mixture.markers_per_region; ++i)
        words.push_back("fw_" + spec.regions[region_index] + "_" + std::to_string(i));
    return words;
}

std::vector<size_t> characteristic_word_ids(const WorldSpec& spec, size_t city_index) {
    if (city_index >= spec.cities.size()) throw Error("city index out of range");
    size_t per_city = std::min(spec.mixture.characteristic_words_per_city, spec.shared_vocab_size);
    // A seeded permutation of the shared vocabulary decouples the block
    // layout from lexicographic word order.
    std::vector<size_t> perm(spec.shared_vocab_size);
    std::iota(perm.begin(), perm.end(), size_t{0});
    Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    rng.shuffle(perm);
    std::vector<size_t> ids(per_city);
    for (size_t i = 0; i < per_city; ++i)
        ids[i] = perm[(city_index * per_city + i) % spec.shared_vocab_size];
    return ids;
}

std::vector<std::string> all_world_tokens(const WorldSpec& spec) {
    std::vector<std::string> tokens = shared_words(spec);
    for (const auto& c : spec.cities) tokens.push_back(c.name);
    for (size_t r = 0; r < spec.regions.size(); ++r)
        for (const auto& m : region_marker_words(spec, r)) tokens.push_back(m);
    for (const auto& p : spec.variant_pairs) {
        tokens.push_back(p.form_a);
        tokens.push_back(p.form_b);
    }
    return tokens;
}

std::vector<GeoDocument> generate_corpus(const WorldSpec& spec, size_t n_docs, uint64_t seed) {
    validate(spec);
    std::vector<std::string> shared = shared_words(spec);
    std::vector<std::vector<size_t>> char_ids(spec.cities.size());
    std::vector<std::vector<std::string>> markers(spec.regions.size());
    for (size_t c = 0; c < spec.cities.size(); ++c)
        char_ids[c] = characteristic_word_ids(spec, c);
    for (size_t r = 0; r < spec.regions.size(); ++r)
        markers[r] = region_marker_words(spec, r);

    std::vector<GeoDocument> docs(n_docs);
    for (size_t i = 0; i < n_docs; ++i) {
        // Independent stream per document: corpora are stable under
        // re-generation regardless of iteration batching.
        Rng rng = Rng::stream(seed, i);
        GeoDocument& doc = docs[i];

        size_t ci = rng.uniform_int(spec.cities.size());
        const CitySpec& city = spec.cities[ci];
        doc.gold_city = city.name;
        doc.gold_region = city.region;
        doc.lon = std::clamp(city.lon + spec.jitter_sigma_deg * rng.normal(), -180.0, 180.0);
        doc.lat = std::clamp(city.lat + spec.jitter_sigma_deg * rng.normal(), -90.0, 90.0);
        size_t region = spec.region_index(city.region);

        size_t span = spec.doc_length_range[1] - spec.doc_length_range[0] + 1;
        size_t len = spec.doc_length_range[0] + rng.uniform_int(span);
        doc.tokens.resize(len);
        for (size_t t = 0; t < len; ++t) {
            if (rng.uniform() < spec.mixture.region_token_prob) {
                doc.tokens[t] = markers[region][rng.uniform_int(markers[region].size())];
            } else if (rng.uniform() < spec.mixture.characteristic_prob) {
                doc.tokens[t] = shared[char_ids[ci][rng.uniform_int(char_ids[ci].size())]];
            } else {
                doc.tokens[t] = shared[rng.uniform_int(shared.size())];
            }
        }

        // Variant slots occupy distinct positions; the chosen form follows
        // the logistic isogloss rule at the document's geotag.
        std::vector<size_t> free_pos(len);
        std::iota(free_pos.begin(), free_pos.end(), size_t{0});
        rng.shuffle(free_pos);
        size_t next_free = 0;
        for (size_t p = 0; p < spec.variant_pairs.size(); ++p) {
            if (rng.uniform() >= spec.mixture.variant_slot_prob) continue;
            if (next_free >= free_pos.size()) break;
            const VariantPairSpec& pair = spec.variant_pairs[p];
            bool use_a = rng.uniform() < pair.prob_form_a(doc.lon, doc.lat);
            size_t pos = free_pos[next_free++];
            doc.tokens[pos] = use_a ? pair.form_a : pair.form_b;
            doc.variant_slots.push_back({pos, p, doc.tokens[pos]});
        }
        if (rng.uniform() < spec.toponym_mention_prob && next_free < free_pos.size())
            doc.tokens[free_pos[next_free++]] = city.name;

        std::sort(doc.variant_slots.begin(), doc.variant_slots.end(),
                  [](const VariantSlot& a, const VariantSlot& b) { return a.position < b.position; });
    }
    return docs;
}

size_t reverse_geocode(double lon, double lat, const WorldSpec& spec) {
    if (spec.cities.empty()) throw Error("reverse_geocode: world has no cities");
    size_t best = 0;
    double best_km = cluster::geodesic_km({lon, lat}, {spec.cities[0].lon, spec.cities[0].lat});
    for (size_t i = 1; i < spec.cities.size(); ++i) {
        double km = cluster::geodesic_km({lon, lat}, {spec.cities[i].lon, spec.cities[i].lat});
        if (km < best_km) {
            best_km = km;
            best = i;
        }
    }
    return best;
}

namespace {

json doc_to_json(const GeoDocument& doc) {
    std::string text;
    for (size_t t = 0; t < doc.tokens.size(); ++t) {
        if (t) text += ' ';
        text += doc.tokens[t];
    }
    json j{{"text", text}, {"lon", doc.lon}, {"lat", doc.lat}};
    if (!doc.gold_city.empty()) j["city"] = doc.gold_city;
    if (!doc.gold_region.empty()) j["region"] = doc.gold_region;
    if (!doc.variant_slots.empty()) {
        json slots = json::array();
        for (const auto& s : doc.variant_slots)
            slots.push_back(json::array({s.position, s.pair_index, s.chosen_form}));
        j["variants"] = slots;
    }
    return j;
}

GeoDocument doc_from_json(const json& j, size_t line_no) {
    auto fail = [&](const std::string& what) {
        throw Error("corpus line " + std::to_string(line_no) + ": " + what);
    };
    if (!j.is_object()) fail("not a JSON object");
    if (!j.contains("text") || !j["text"].is_string()) fail("missing string field 'text'");
    if (!j.contains("lon") || !j["lon"].is_number()) fail("missing numeric field 'lon'");
    if (!j.contains("lat") || !j["lat"].is_number()) fail("missing numeric field 'lat'");

    GeoDocument doc;
    std::istringstream words(j["text"].get<std::string>());
    std::string tok;
    while (words >> tok) doc.tokens.push_back(tok);
    doc.lon = j["lon"].get<double>();
    doc.lat = j["lat"].get<double>();
    if (doc.lon < -180.0 || doc.lon > 180.0) fail("lon out of range");
    if (doc.lat < -90.0 || doc.lat > 90.0) fail("lat out of range");
    if (j.contains("city")) doc.gold_city = j["city"].get<std::string>();
    if (j.contains("region")) doc.gold_region = j["region"].get<std::string>();
    if (j.contains("variants")) {
        if (!j["variants"].is_array()) fail("'variants' must be an array");
        for (const auto& s : j["variants"]) {
            if (!s.is_array() || s.size() != 3) fail("malformed variant slot");
            VariantSlot slot{s[0].get<size_t>(), s[1].get<size_t>(), s[2].get<std::string>()};
            if (slot.position >= doc.tokens.size()) fail("variant slot position out of range");
            doc.variant_slots.push_back(slot);
        }
    }
    return doc;
}

}  // namespace

void save_corpus(const std::vector<GeoDocument>& docs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    for (const auto& doc : docs) out << doc_to_json(doc).dump() << '\n';
    if (!out) throw Error("write to '" + path + "' failed");
}

std::vector<GeoDocument> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open corpus file '" + path + "'");
    std::vector<GeoDocument> docs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw Error("corpus line " + std::to_string(line_no) + ": invalid JSON");
        docs.push_back(doc_from_json(j, line_no));
    }
    return docs;
}

CorpusSplit split_corpus(const std::vector<GeoDocument>& corpus,
                         const std::array<double, 3>& fractions, uint64_t seed) {
    double sum = fractions[0] + fractions[1] + fractions[2];
    for (double f : fractions)
        if (f < 0.0) throw Error("split fractions must be non-negative");
    if (std::abs(sum - 1.0) > 1e-9) throw Error("split fractions must sum to 1");

    size_t n = corpus.size();
    size_t n_train = static_cast<size_t>(std::llround(fractions[0] * static_cast<double>(n)));
    size_t n_dev = static_cast<size_t>(std::llround(fractions[1] * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_dev = std::min(n_dev, n - n_train);

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    CorpusSplit split;
    for (size_t i = 0; i < n; ++i) {
        const GeoDocument& doc = corpus[order[i]];
        if (i < n_train)
            split.train.push_back(doc);
        else if (i < n_train + n_dev)
            split.dev.push_back(doc);
        else
            split.test.push_back(doc);
    }
    return split;
}

namespace {

json spec_to_json_obj(const WorldSpec& spec) {
    json cities = json::array();
    for (const auto& c : spec.cities)
        cities.push_back({{"name", c.name}, {"lon", c.lon}, {"lat", c.lat}, {"region", c.region}});
    json pairs = json::array();
    for (const auto& p : spec.variant_pairs)
        pairs.push_back({{"form_a", p.form_a},
                         {"form_b", p.form_b},
                         {"isogloss",
                          {{"lon0", p.isogloss.lon0},
                           {"lat0", p.isogloss.lat0},
                           {"dir_lon", p.isogloss.dir_lon},
                           {"dir_lat", p.isogloss.dir_lat}}},
                         {"steepness", p.steepness}});
    return json{{"cities", cities},
                {"regions", spec.regions},
                {"variant_pairs", pairs},
                {"shared_vocab_size", spec.shared_vocab_size},
                {"doc_length_range", spec.doc_length_range},
                {"jitter_sigma_deg", spec.jitter_sigma_deg},
                {"toponym_mention_prob", spec.toponym_mention_prob},
                {"seed", spec.seed},
                {"mixture",
                 {{"region_token_prob", spec.mixture.region_token_prob},
                  {"characteristic_prob", spec.mixture.characteristic_prob},
                  {"characteristic_words_per_city", spec.mixture.characteristic_words_per_city},
                  {"markers_per_region", spec.mixture.markers_per_region},
                  {"variant_slot_prob", spec.mixture.variant_slot_prob}}}};
}

WorldSpec spec_from_json_obj(const json& j) {
    WorldSpec spec;
    for (const auto& c : j.at("cities"))
        spec.cities.push_back({c.at("name").get<std::string>(), c.at("lon").get<double>(),
                               c.at("lat").get<double>(), c.at("region").get<std::string>()});
    spec.regions = j.at("regions").get<std::vector<std::string>>();
    for (const auto& p : j.value("variant_pairs", json::array())) {
        VariantPairSpec pair;
        pair.form_a = p.at("form_a").get<std::string>();
        pair.form_b = p.at("form_b").get<std::string>();
        const json& iso = p.at("isogloss");
        pair.isogloss = {iso.at("lon0").get<double>(), iso.at("lat0").get<double>(),
                         iso.at("dir_lon").get<double>(), iso.at("dir_lat").get<double>()};
        pair.steepness = p.at("steepness").get<double>();
        spec.variant_pairs.push_back(pair);
    }
    WorldSpec defaults;
    spec.shared_vocab_size = j.value("shared_vocab_size", defaults.shared_vocab_size);
    spec.doc_length_range = j.value("doc_length_range", defaults.doc_length_range);
    spec.jitter_sigma_deg = j.value("jitter_sigma_deg", defaults.jitter_sigma_deg);
    spec.toponym_mention_prob = j.value("toponym_mention_prob", defaults.toponym_mention_prob);
    spec.seed = j.value("seed", defaults.seed);
    if (j.contains("mixture")) {
        const json& m = j["mixture"];
        spec.mixture.region_token_prob = m.value("region_token_prob", defaults.mixture.region_token_prob);
        spec.mixture.characteristic_prob = m.value("characteristic_prob", defaults.mixture.characteristic_prob);
        spec.mixture.characteristic_words_per_city =
            m.value("characteristic_words_per_city", defaults.mixture.characteristic_words_per_city);
        spec.mixture.markers_per_region = m.value("markers_per_region", defaults.mixture.markers_per_region);
        spec.mixture.variant_slot_prob = m.value("variant_slot_prob", defaults.mixture.variant_slot_prob);
    }
    return spec;
}

}  // namespace

std::string WorldSpec::to_json() const { return spec_to_json_obj(*this).dump(2); }

WorldSpec WorldSpec::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, true, true);
    try {
        return spec_from_json_obj(j);
    } catch (const json::exception& e) {
        throw Error(std::string("world spec JSON: ") + e.what());
    }
}

}  // namespace geoadapt::world
