#include "geoadapt/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "geoadapt/geocluster.hpp"
#include "geoadapt/persist.hpp"
#include "geoadapt/plots.hpp"
#include "geoadapt/retrofit.hpp"
#include "geoadapt/stats.hpp"
#include "geoadapt/textenc.hpp"

namespace geoadapt::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- configuration ----

void ExperimentConfig::validate() const {
    world::validate(world);
    if (pretrain_docs == 0 || corpus_docs == 0)
        throw Error("experiment config: corpus sizes must be positive");
    if (seeds.empty()) throw Error("experiment config: at least one seed required");
    if (regimes.empty()) throw Error("experiment config: at least one regime required");
    for (const auto& r : regimes) adapt::parse_regime(r);
    std::vector<std::string> sorted = regimes;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw Error("experiment config: duplicate regime");
    if (pretrain.epochs == 0 || adaptation.epochs == 0 || finetune.epochs == 0)
        throw Error("experiment config: phase epochs must be positive");
    mask.validate();
    double fsum = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(fsum - 1.0) > 1e-9)
        throw Error("experiment config: split fractions must sum to 1");
    if (fractions[0] <= 0.0 || fractions[1] <= 0.0 || fractions[2] <= 0.0)
        throw Error("experiment config: all split fractions must be positive");
}

namespace {

json phase_to_json(const PhaseConfig& p) {
    return json{{"epochs", p.epochs}, {"batch_size", p.batch_size}, {"lr", p.lr}};
}

PhaseConfig phase_from_json(const json& j, const PhaseConfig& defaults) {
    PhaseConfig p = defaults;
    p.epochs = j.value("epochs", defaults.epochs);
    p.batch_size = j.value("batch_size", defaults.batch_size);
    p.lr = j.value("lr", defaults.lr);
    return p;
}

json encoder_to_json(const model::EncoderConfig& c) {
    return json{{"n_layers", c.n_layers}, {"d_model", c.d_model}, {"n_heads", c.n_heads},
                {"d_ff", c.d_ff},         {"max_len", c.max_len}, {"dropout", c.dropout}};
}

}  // namespace

std::string ExperimentConfig::to_json() const {
    json j{{"world", json::parse(world.to_json())},
           {"encoder", encoder_to_json(encoder)},
           {"pretrain_docs", pretrain_docs},
           {"corpus_docs", corpus_docs},
           {"fractions", fractions},
           {"pretrain", phase_to_json(pretrain)},
           {"adaptation", phase_to_json(adaptation)},
           {"finetune", phase_to_json(finetune)},
           {"mask", {{"ratio", mask.ratio}, {"p_mask", mask.p_mask}, {"p_random", mask.p_random}}},
           {"regimes", regimes},
           {"seeds", seeds},
           {"geo_clusters", geo_clusters},
           {"save_snapshots", save_snapshots},
           {"epoch_curve", epoch_curve},
           {"curve_eval_docs", curve_eval_docs},
           {"emit_svg", emit_svg}};
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    ExperimentConfig cfg;
    try {
        json j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
        if (j.contains("world")) cfg.world = world::WorldSpec::from_json(j["world"].dump());
        if (j.contains("encoder")) {
            const json& e = j["encoder"];
            cfg.encoder.n_layers = e.value("n_layers", cfg.encoder.n_layers);
            cfg.encoder.d_model = e.value("d_model", cfg.encoder.d_model);
            cfg.encoder.n_heads = e.value("n_heads", cfg.encoder.n_heads);
            cfg.encoder.d_ff = e.value("d_ff", cfg.encoder.d_ff);
            cfg.encoder.max_len = e.value("max_len", cfg.encoder.max_len);
            cfg.encoder.dropout = e.value("dropout", cfg.encoder.dropout);
        }
        cfg.pretrain_docs = j.value("pretrain_docs", cfg.pretrain_docs);
        cfg.corpus_docs = j.value("corpus_docs", cfg.corpus_docs);
        cfg.fractions = j.value("fractions", cfg.fractions);
        if (j.contains("pretrain")) cfg.pretrain = phase_from_json(j["pretrain"], cfg.pretrain);
        if (j.contains("adaptation"))
            cfg.adaptation = phase_from_json(j["adaptation"], cfg.adaptation);
        if (j.contains("finetune")) cfg.finetune = phase_from_json(j["finetune"], cfg.finetune);
        if (j.contains("mask")) {
            const json& m = j["mask"];
            cfg.mask.ratio = m.value("ratio", cfg.mask.ratio);
            cfg.mask.p_mask = m.value("p_mask", cfg.mask.p_mask);
            cfg.mask.p_random = m.value("p_random", cfg.mask.p_random);
        }
        cfg.regimes = j.value("regimes", cfg.regimes);
        cfg.seeds = j.value("seeds", cfg.seeds);
        cfg.geo_clusters = j.value("geo_clusters", cfg.geo_clusters);
        cfg.save_snapshots = j.value("save_snapshots", cfg.save_snapshots);
        cfg.epoch_curve = j.value("epoch_curve", cfg.epoch_curve);
        cfg.curve_eval_docs = j.value("curve_eval_docs", cfg.curve_eval_docs);
        cfg.emit_svg = j.value("emit_svg", cfg.emit_svg);
    } catch (const json::exception& e) {
        throw Error(std::string("experiment config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string ExperimentConfig::sample_jsonc() {
    return R"(// Experiment configuration. Comments are allowed; omitted keys fall back
// to defaults, unknown keys are ignored.
{
  // "world": { ... }           // full world spec; defaults to the built-in world
  "pretrain_docs": 1600,        // synthetic documents for MLM pretraining
  "corpus_docs": 1600,          // documents split into train/dev/test
  "fractions": [0.75, 0.10, 0.15],
  "encoder": { "n_layers": 2, "d_model": 64, "n_heads": 4, "max_len": 64, "dropout": 0.1 },
  "pretrain":   { "epochs": 6,  "batch_size": 32, "lr": 0.001 },
  "adaptation": { "epochs": 25, "batch_size": 32, "lr": 0.001 },
  "finetune":   { "epochs": 3,  "batch_size": 32, "lr": 0.001 },
  "mask": { "ratio": 0.15, "p_mask": 0.8, "p_random": 0.1 },
  "regimes": ["mlm", "geo-w", "geo-seq"],  // also available: "geo-s"
  "seeds": [1, 2, 3],
  "geo_clusters": 0,            // 0 = one cluster per city
  "save_snapshots": false,      // per-epoch checkpoints (large)
  "epoch_curve": true,          // zero-shot accuracy after every epoch
  "curve_eval_docs": 96,
  "emit_svg": true
}
)";
}

// ---- artifact bookkeeping ----

namespace {

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Artifacts {
public:
    explicit Artifacts(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

    const fs::path& root() const { return root_; }

    fs::path ensure_dir(const std::string& rel) {
        fs::path dir = root_ / rel;
        fs::create_directories(dir);
        return dir;
    }

    void write_text(const std::string& rel, const std::string& content) {
        fs::path path = root_ / rel;
        fs::create_directories(path.parent_path());
        plots::save_text(path.string(), content);
        note(rel, content);
    }

    /// Registers a file already written by other code (checkpoints).
    void note_file(const std::string& rel) { note(rel, read_file(root_ / rel)); }

    std::string manifest_json() const {
        auto rows = rows_;
        std::sort(rows.begin(), rows.end());
        json files = json::array();
        for (const auto& [path, bytes, hash] : rows)
            files.push_back({{"path", path}, {"bytes", bytes}, {"fnv1a64", hash}});
        return json{{"files", files}}.dump(2);
    }

private:
    void note(const std::string& rel, const std::string& content) {
        rows_.emplace_back(rel, content.size(), hex64(fnv1a64(content.data(), content.size())));
    }

    fs::path root_;
    std::vector<std::tuple<std::string, uint64_t, std::string>> rows_;
};

// ---- per-seed data ----

struct SeedData {
    world::CorpusSplit split;
    std::vector<world::GeoDocument> pretrain_corpus;
    std::vector<std::vector<int>> train_ids, dev_ids, test_ids, pretrain_ids;
    std::vector<cluster::GeoPoint> train_geo, dev_geo, test_geo, pretrain_geo;
    cluster::ClusterModel clusters;
    std::vector<int> ft_geo_labels;          // train cluster ids
    std::vector<int> ft_lang_labels;         // train region ids
    std::vector<size_t> dev_lang_gold, test_lang_gold;
    std::vector<size_t> test_city_gold;
    std::vector<eval::DialectItem> test_dialect;
};

std::vector<cluster::GeoPoint> doc_geos(const std::vector<world::GeoDocument>& docs) {
    std::vector<cluster::GeoPoint> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back({d.lon, d.lat});
    return out;
}

SeedData build_seed_data(const ExperimentConfig& cfg, const text::Vocabulary& vocab,
                         uint64_t seed) {
    SeedData d;
    auto corpus = world::generate_corpus(cfg.world, cfg.corpus_docs, seed * 1000 + 2);
    d.split = world::split_corpus(corpus, cfg.fractions, seed * 1000 + 3);
    d.pretrain_corpus = world::generate_corpus(cfg.world, cfg.pretrain_docs, seed * 1000 + 1);

    d.train_ids = text::encode_corpus(d.split.train, vocab);
    d.dev_ids = text::encode_corpus(d.split.dev, vocab);
    d.test_ids = text::encode_corpus(d.split.test, vocab);
    d.pretrain_ids = text::encode_corpus(d.pretrain_corpus, vocab);
    d.train_geo = doc_geos(d.split.train);
    d.dev_geo = doc_geos(d.split.dev);
    d.test_geo = doc_geos(d.split.test);
    d.pretrain_geo = doc_geos(d.pretrain_corpus);

    size_t k = cfg.geo_clusters ? cfg.geo_clusters : cfg.world.cities.size();
    d.clusters = cluster::fit_kmeans(d.train_geo, k, seed * 1000 + 4);
    for (const auto& p : d.train_geo)
        d.ft_geo_labels.push_back(static_cast<int>(cluster::assign(d.clusters, p[0], p[1])));
    for (const auto& doc : d.split.train)
        d.ft_lang_labels.push_back(static_cast<int>(cfg.world.region_index(doc.gold_region)));
    for (const auto& doc : d.split.dev)
        d.dev_lang_gold.push_back(cfg.world.region_index(doc.gold_region));
    for (const auto& doc : d.split.test)
        d.test_lang_gold.push_back(cfg.world.region_index(doc.gold_region));
    for (const auto& doc : d.split.test)
        d.test_city_gold.push_back(world::reverse_geocode(doc.lon, doc.lat, cfg.world));
    d.test_dialect = eval::dialect_items(d.split.test, cfg.world, vocab);
    return d;
}

/// The default cloze prompt: a bare [MASK] appended to the document; the
/// neutral prior prompt is the mask alone.
eval::PromptSpec bare_mask_prompt(const std::vector<std::string>& candidates,
                                  const text::Vocabulary& vocab) {
    return eval::make_prompt({text::kMaskToken}, {text::kMaskToken}, candidates, vocab);
}

double median_of(std::vector<double> v) { return cluster::median(v); }

// Expected error when every document draws a uniformly random cluster.
double random_cluster_baseline_km(const cluster::ClusterModel& clusters,
                                  const std::vector<cluster::GeoPoint>& gold) {
    std::vector<double> expected;
    expected.reserve(gold.size());
    for (const auto& g : gold) {
        double sum = 0.0;
        for (size_t c = 0; c < clusters.k; ++c)
            sum += cluster::geodesic_km(cluster::centroid_geo(clusters, c), g);
        expected.push_back(sum / static_cast<double>(clusters.k));
    }
    return median_of(expected);
}

// ---- retrofitting analysis per run ----

struct RetrofitArtifacts {
    RetrofitMetrics metrics;
    std::string cities_csv;
    std::string pca_svg;
    std::string weat_svg;
};

RetrofitArtifacts run_retrofit(const ExperimentConfig& cfg, const eval::Bundle& bundle,
                               const SeedData& data, const text::Vocabulary& vocab) {
    const auto& cities = cfg.world.cities;
    std::vector<int> city_ids;
    for (const auto& c : cities) city_ids.push_back(vocab.id_of(c.name));
    std::vector<int> form_ids;
    for (const auto& p : cfg.world.variant_pairs) {
        form_ids.push_back(vocab.id_of(p.form_a));
        form_ids.push_back(vocab.id_of(p.form_b));
    }
    std::vector<int> all_ids = city_ids;
    all_ids.insert(all_ids.end(), form_ids.begin(), form_ids.end());
    auto embs = retrofit::type_embeddings(bundle, data.train_ids, all_ids);

    std::vector<std::vector<double>> city_vecs;
    std::vector<cluster::GeoPoint> city_locs;
    std::vector<size_t> city_kept;
    for (size_t i = 0; i < cities.size(); ++i) {
        if (embs[i].occurrences == 0) continue;
        city_vecs.push_back(embs[i].vec);
        city_locs.push_back({cities[i].lon, cities[i].lat});
        city_kept.push_back(i);
    }

    RetrofitArtifacts out;
    if (city_vecs.size() >= 3)
        out.metrics.distance_correlation =
            retrofit::geo_embedding_correlation(city_vecs, city_locs);

    // WEAT: targets are toponyms, attributes the two variant-form groups.
    std::vector<std::vector<double>> set_a, set_b;
    for (size_t p = 0; p < cfg.world.variant_pairs.size(); ++p) {
        const auto& ea = embs[cities.size() + 2 * p];
        const auto& eb = embs[cities.size() + 2 * p + 1];
        if (ea.occurrences) set_a.push_back(ea.vec);
        if (eb.occurrences) set_b.push_back(eb.vec);
    }
    std::vector<double> weat(city_kept.size(), 0.0);
    size_t agree = 0;
    if (!set_a.empty() && !set_b.empty()) {
        for (size_t i = 0; i < city_kept.size(); ++i) {
            weat[i] = retrofit::weat_association(city_vecs[i], set_a, set_b);
            double side = 0.0;
            for (const auto& pair : cfg.world.variant_pairs)
                side += pair.isogloss.signed_distance(cities[city_kept[i]].lon,
                                                      cities[city_kept[i]].lat);
            if ((weat[i] > 0.0) == (side > 0.0)) ++agree;
        }
        out.metrics.weat_sign_agreement =
            city_kept.empty() ? 0.0
                              : static_cast<double>(agree) / static_cast<double>(city_kept.size());
    }

    std::vector<std::array<double, 2>> pca;
    if (city_vecs.size() >= 3) {
        pca = retrofit::pca_2d(city_vecs);
        std::vector<std::array<double, 2>> target;
        for (const auto& loc : city_locs) target.push_back({loc[0], loc[1]});
        retrofit::ProcrustesResult proc = retrofit::procrustes_2d(pca, target);
        out.metrics.procrustes_rmsd = proc.rmsd;
        out.metrics.procrustes_reflection = proc.reflection;
    }

    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return std::string(buf);
    };
    std::vector<std::vector<std::string>> rows;
    for (size_t i = 0; i < city_kept.size(); ++i) {
        const auto& c = cities[city_kept[i]];
        rows.push_back({c.name, fmt(c.lon), fmt(c.lat),
                        std::to_string(embs[city_kept[i]].occurrences),
                        pca.empty() ? "" : fmt(pca[i][0]), pca.empty() ? "" : fmt(pca[i][1]),
                        fmt(weat[i])});
    }
    out.cities_csv = plots::to_csv({"city", "lon", "lat", "occurrences", "pca_x", "pca_y", "weat"},
                                   rows);

    std::vector<plots::ScatterPoint> pts;
    for (size_t i = 0; i < pca.size(); ++i) {
        const auto& c = cities[city_kept[i]];
        pts.push_back({pca[i][0], pca[i][1], c.name, cfg.world.region_index(c.region)});
    }
    out.pca_svg = plots::svg_scatter("Toponym embeddings, top-2 PCA", pts);
    std::vector<std::string> labels;
    for (size_t i : city_kept) labels.push_back(cities[i].name);
    out.weat_svg = plots::svg_bars("WEAT differential association by city", labels, weat);
    return out;
}

// ---- significance ----

void add_significance(std::vector<PairwiseTest>& out, const ExperimentConfig& cfg,
                      const std::vector<RunResult>& runs, uint64_t seed) {
    auto find_run = [&](const std::string& regime) -> const RunResult* {
        for (const auto& r : runs)
            if (r.seed == seed && r.regime == regime) return &r;
        return nullptr;
    };
    struct TaskDef {
        const char* name;
        bool is_km;
    };
    const TaskDef tasks[] = {{"zs-geoloc", false},
                             {"zs-lang", false},
                             {"zs-dialect", false},
                             {"ft-lang", false},
                             {"ft-geoloc", true}};
    for (const auto& task : tasks) {
        std::vector<PairwiseTest> family;
        for (size_t i = 0; i < cfg.regimes.size(); ++i)
            for (size_t j = i + 1; j < cfg.regimes.size(); ++j) {
                const RunResult* a = find_run(cfg.regimes[i]);
                const RunResult* b = find_run(cfg.regimes[j]);
                if (!a || !b) continue;
                PairwiseTest t;
                t.seed = seed;
                t.task = task.name;
                t.baseline = cfg.regimes[i];
                t.contender = cfg.regimes[j];
                if (task.is_km) {
                    t.method = "paired-t";
                    const auto& x = a->ft_geoloc_km;
                    const auto& y = b->ft_geoloc_km;
                    t.p_raw = stats::paired_t_test(x, y);
                    double mean = 0.0;
                    for (size_t n = 0; n < x.size(); ++n) mean += x[n] - y[n];
                    mean /= static_cast<double>(x.size());
                    double var = 0.0;
                    for (size_t n = 0; n < x.size(); ++n) {
                        double dd = x[n] - y[n] - mean;
                        var += dd * dd;
                    }
                    var /= static_cast<double>(x.size() - 1);
                    t.statistic = var > 0.0
                                      ? mean / std::sqrt(var / static_cast<double>(x.size()))
                                      : 0.0;
                } else {
                    t.method = "mcnemar";
                    const std::vector<uint8_t>* ca = nullptr;
                    const std::vector<uint8_t>* cb = nullptr;
                    if (t.task == "zs-geoloc") {
                        ca = &a->zs_geoloc_correct;
                        cb = &b->zs_geoloc_correct;
                    } else if (t.task == "zs-lang") {
                        ca = &a->zs_lang_correct;
                        cb = &b->zs_lang_correct;
                    } else if (t.task == "zs-dialect") {
                        ca = &a->zs_dialect_correct;
                        cb = &b->zs_dialect_correct;
                    } else {
                        ca = &a->ft_lang_correct;
                        cb = &b->ft_lang_correct;
                    }
                    t.p_raw = stats::mcnemar(*ca, *cb);
                    size_t discordant = 0;
                    for (size_t n = 0; n < ca->size(); ++n)
                        if ((*ca)[n] != (*cb)[n]) ++discordant;
                    t.statistic = static_cast<double>(discordant);
                }
                family.push_back(t);
            }
        std::vector<double> raw;
        for (const auto& t : family) raw.push_back(t.p_raw);
        if (raw.empty()) continue;
        std::vector<double> adjusted = stats::holm_bonferroni(raw);
        for (size_t i = 0; i < family.size(); ++i) {
            family[i].p_holm = adjusted[i];
            out.push_back(family[i]);
        }
    }
}

// ---- report ----

json run_to_json(const RunResult& r) {
    return json{
        {"seed", r.seed},
        {"regime", r.regime},
        {"final_l_mlm", r.final_l_mlm},
        {"final_l_geo", std::isnan(r.final_l_geo) ? json() : json(r.final_l_geo)},
        {"eta_mlm", r.final_eta_mlm},
        {"eta_geo", r.final_eta_geo},
        {"tasks",
         {{"ft-geoloc",
           {{"median_km", r.tasks.ft_geoloc_median_km},
            {"best_epoch", r.tasks.ft_geoloc_best_epoch}}},
          {"ft-lang", {{"accuracy", r.tasks.ft_lang_accuracy}}},
          {"zs-geoloc",
           {{"accuracy", r.tasks.zs_geoloc_accuracy},
            {"accuracy_calibrated", r.tasks.zs_geoloc_accuracy_cal}}},
          {"zs-lang",
           {{"accuracy", r.tasks.zs_lang_accuracy},
            {"accuracy_calibrated", r.tasks.zs_lang_accuracy_cal}}},
          {"zs-dialect",
           {{"accuracy", r.tasks.zs_dialect_accuracy},
            {"accuracy_calibrated", r.tasks.zs_dialect_accuracy_cal}}}}},
        {"retrofit",
         {{"distance_correlation", r.retrofit.distance_correlation},
          {"weat_sign_agreement", r.retrofit.weat_sign_agreement},
          {"procrustes_rmsd", r.retrofit.procrustes_rmsd},
          {"procrustes_reflection", r.retrofit.procrustes_reflection}}}};
}

double median_over_seeds(const std::vector<RunResult>& runs, const std::string& regime,
                         const std::function<double(const RunResult&)>& pick) {
    std::vector<double> vals;
    for (const auto& r : runs)
        if (r.regime == regime) vals.push_back(pick(r));
    if (vals.empty()) throw Error("no runs for regime " + regime);
    return median_of(vals);
}

}  // namespace

std::string default_out_root() {
    const char* env = std::getenv(kOutRootEnvVar);
    if (env && *env) return env;
    return "./geoadapt-out";
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    text::Vocabulary vocab = text::build_vocab(cfg.world);
    model::EncoderConfig enc = cfg.encoder;
    enc.vocab_size = vocab.size();
    enc.validate();
    size_t k_geo = cfg.geo_clusters ? cfg.geo_clusters : cfg.world.cities.size();
    size_t n_regions = cfg.world.regions.size();

    Artifacts art{fs::path(out_dir)};
    art.write_text("config.resolved.json", cfg.to_json());
    art.write_text("world.json", cfg.world.to_json());
    art.write_text("vocab.json", vocab.to_json());

    std::vector<std::string> city_names, region_names;
    for (const auto& c : cfg.world.cities) city_names.push_back(c.name);
    for (const auto& r : cfg.world.regions) region_names.push_back(r);
    eval::PromptSpec geo_prompt = bare_mask_prompt(city_names, vocab);
    eval::PromptSpec lang_prompt = bare_mask_prompt(region_names, vocab);

    ExperimentResult result;
    std::vector<double> ft_baselines;

    for (uint64_t seed : cfg.seeds) {
        std::string seed_dir = "seed-" + std::to_string(seed);
        SeedData data = build_seed_data(cfg, vocab, seed);
        art.ensure_dir(seed_dir + "/corpus");
        auto save_split = [&](const char* name, const std::vector<world::GeoDocument>& docs) {
            std::string rel = seed_dir + "/corpus/" + name + ".jsonl";
            world::save_corpus(docs, (art.root() / rel).string());
            art.note_file(rel);
        };
        save_split("pretrain", data.pretrain_corpus);
        save_split("train", data.split.train);
        save_split("dev", data.split.dev);
        save_split("test", data.split.test);
        ft_baselines.push_back(random_cluster_baseline_km(data.clusters, data.test_geo));
        result.ft_baseline_by_seed[seed] = ft_baselines.back();

        // One pretrained encoder per seed, shared by all regimes.
        eval::Bundle pretrained =
            model::init_bundle<float>(enc, vocab, k_geo, n_regions, seed * 1000 + 5);
        {
            adapt::AdaptConfig pcfg;
            pcfg.regime = adapt::Regime::MlmAda;
            pcfg.epochs = cfg.pretrain.epochs;
            pcfg.batch_size = cfg.pretrain.batch_size;
            pcfg.lr = cfg.pretrain.lr;
            pcfg.mask = cfg.mask;
            pcfg.seed = seed * 1000 + 6;
            adapt::train_adapt(pretrained, data.pretrain_ids, data.pretrain_geo, pcfg);
            pretrained.meta.regime = "pretrain";
        }
        persist::save_checkpoint(pretrained, (art.root() / seed_dir / "pretrain.ckpt").string());
        art.note_file(seed_dir + "/pretrain.ckpt");

        for (size_t ri = 0; ri < cfg.regimes.size(); ++ri) {
            const std::string& regime_str = cfg.regimes[ri];
            adapt::Regime regime = adapt::parse_regime(regime_str);
            std::string run_dir = seed_dir + "/" + regime_str;
            art.ensure_dir(run_dir);

            eval::Bundle bundle = pretrained;
            std::vector<std::array<double, 3>> curve_rows;  // epoch, zs-geo, zs-lang
            size_t curve_n = std::min(cfg.curve_eval_docs, data.test_ids.size());
            std::vector<std::vector<int>> curve_docs(data.test_ids.begin(),
                                                     data.test_ids.begin() +
                                                         static_cast<ptrdiff_t>(curve_n));
            std::vector<size_t> curve_city(data.test_city_gold.begin(),
                                           data.test_city_gold.begin() +
                                               static_cast<ptrdiff_t>(curve_n));
            std::vector<size_t> curve_lang(data.test_lang_gold.begin(),
                                           data.test_lang_gold.begin() +
                                               static_cast<ptrdiff_t>(curve_n));

            adapt::AdaptConfig acfg;
            acfg.regime = regime;
            acfg.epochs = cfg.adaptation.epochs;
            acfg.batch_size = cfg.adaptation.batch_size;
            acfg.lr = cfg.adaptation.lr;
            acfg.mask = cfg.mask;
            acfg.seed = seed * 1000 + 7 + ri;
            if (cfg.epoch_curve || cfg.save_snapshots) {
                acfg.on_epoch = [&](size_t epoch, const eval::Bundle& m) {
                    if (cfg.epoch_curve && curve_n > 0) {
                        auto zg = eval::zero_shot(m, curve_docs, curve_city, geo_prompt, false);
                        auto zl = eval::zero_shot(m, curve_docs, curve_lang, lang_prompt, false);
                        curve_rows.push_back({static_cast<double>(epoch), zg.accuracy,
                                              zl.accuracy});
                    }
                    if (cfg.save_snapshots) {
                        char name[32];
                        std::snprintf(name, sizeof(name), "snapshots/epoch_%03zu.ckpt", epoch);
                        std::string rel = run_dir + "/" + name;
                        fs::create_directories((art.root() / run_dir / "snapshots"));
                        persist::save_checkpoint(m, (art.root() / rel).string());
                        art.note_file(rel);
                    }
                };
            }
            auto curve = adapt::train_adapt(bundle, data.train_ids, data.train_geo, acfg);
            persist::save_checkpoint(bundle, (art.root() / run_dir / "adapt.ckpt").string());
            art.note_file(run_dir + "/adapt.ckpt");
            art.write_text(run_dir + "/loss_curve.csv", adapt::curve_to_csv(curve));

            if (cfg.emit_svg) {
                std::vector<plots::Series> series(3);
                series[0].name = "mlm loss";
                series[1].name = "geo loss";
                series[2].name = "total";
                for (const auto& e : curve) {
                    series[0].points.push_back({static_cast<double>(e.epoch), e.l_mlm});
                    series[1].points.push_back({static_cast<double>(e.epoch), e.l_geo});
                    series[2].points.push_back({static_cast<double>(e.epoch), e.l_total});
                }
                art.write_text(run_dir + "/loss_curve.svg",
                               plots::svg_line_chart("Adaptation losses (" + regime_str + ")",
                                                     "epoch", "loss", series));
            }
            if (cfg.epoch_curve && !curve_rows.empty()) {
                std::vector<std::vector<std::string>> rows;
                for (const auto& r : curve_rows) {
                    char a[32], b[32];
                    std::snprintf(a, sizeof(a), "%.6g", r[1]);
                    std::snprintf(b, sizeof(b), "%.6g", r[2]);
                    rows.push_back({std::to_string(static_cast<size_t>(r[0])), a, b});
                }
                art.write_text(run_dir + "/zs_epoch_curve.csv",
                               plots::to_csv({"epoch", "zs_geoloc", "zs_lang"}, rows));
                if (cfg.emit_svg) {
                    std::vector<plots::Series> series(2);
                    series[0].name = "zs-geoloc";
                    series[1].name = "zs-lang";
                    for (const auto& r : curve_rows) {
                        series[0].points.push_back({r[0], r[1]});
                        series[1].points.push_back({r[0], r[2]});
                    }
                    art.write_text(run_dir + "/zs_epoch_curve.svg",
                                   plots::svg_line_chart("Zero-shot accuracy across epochs (" +
                                                             regime_str + ")",
                                                         "epoch", "accuracy", series));
                }
            }

            RunResult run;
            run.seed = seed;
            run.regime = regime_str;
            run.final_l_mlm = curve.back().l_mlm;
            run.final_l_geo = curve.back().l_geo;
            run.final_eta_mlm = curve.back().eta_mlm;
            run.final_eta_geo = curve.back().eta_geo;

            // Fine-tuned geolocation.
            {
                eval::FinetuneConfig fcfg;
                fcfg.epochs = cfg.finetune.epochs;
                fcfg.batch_size = cfg.finetune.batch_size;
                fcfg.lr = cfg.finetune.lr;
                fcfg.seed = seed * 1000 + 100 + ri;
                auto dev_metric = [&](const eval::Bundle& m) {
                    return eval::score_geoloc(m, data.clusters, data.dev_ids, data.dev_geo)
                        .median_km;
                };
                auto ft = eval::finetune_cls(bundle, data.train_ids, data.ft_geo_labels,
                                             model::ClsHead::Geo, dev_metric, false, fcfg);
                auto score =
                    eval::score_geoloc(ft.best, data.clusters, data.test_ids, data.test_geo);
                run.tasks.ft_geoloc_median_km = score.median_km;
                run.tasks.ft_geoloc_best_epoch = ft.best_epoch;
                run.ft_geoloc_km = score.km;
            }
            // Fine-tuned language identification.
            {
                eval::FinetuneConfig fcfg;
                fcfg.epochs = cfg.finetune.epochs;
                fcfg.batch_size = cfg.finetune.batch_size;
                fcfg.lr = cfg.finetune.lr;
                fcfg.seed = seed * 1000 + 200 + ri;
                auto dev_metric = [&](const eval::Bundle& m) {
                    return eval::score_cls_head(m, data.dev_ids, data.dev_lang_gold,
                                                model::ClsHead::Lang, n_regions)
                        .accuracy;
                };
                auto ft = eval::finetune_cls(bundle, data.train_ids, data.ft_lang_labels,
                                             model::ClsHead::Lang, dev_metric, true, fcfg);
                auto score = eval::score_cls_head(ft.best, data.test_ids, data.test_lang_gold,
                                                  model::ClsHead::Lang, n_regions);
                run.tasks.ft_lang_accuracy = score.accuracy;
                run.ft_lang_correct = score.correct;
            }
            // Zero-shot tasks, plain and calibrated.
            {
                auto zs = eval::zero_shot(bundle, data.test_ids, data.test_city_gold, geo_prompt,
                                          false);
                auto zs_cal = eval::zero_shot(bundle, data.test_ids, data.test_city_gold,
                                              geo_prompt, true);
                run.tasks.zs_geoloc_accuracy = zs.accuracy;
                run.tasks.zs_geoloc_accuracy_cal = zs_cal.accuracy;
                run.zs_geoloc_correct = zs.correct;

                auto zl = eval::zero_shot(bundle, data.test_ids, data.test_lang_gold, lang_prompt,
                                          false);
                auto zl_cal = eval::zero_shot(bundle, data.test_ids, data.test_lang_gold,
                                              lang_prompt, true);
                run.tasks.zs_lang_accuracy = zl.accuracy;
                run.tasks.zs_lang_accuracy_cal = zl_cal.accuracy;
                run.zs_lang_correct = zl.correct;

                if (!data.test_dialect.empty()) {
                    auto zd = eval::zero_shot_dialect(bundle, data.test_dialect, false);
                    auto zd_cal = eval::zero_shot_dialect(bundle, data.test_dialect, true);
                    run.tasks.zs_dialect_accuracy = zd.accuracy;
                    run.tasks.zs_dialect_accuracy_cal = zd_cal.accuracy;
                    run.zs_dialect_correct = zd.correct;
                }
            }
            // Retrofitting analysis of type-level embeddings.
            {
                RetrofitArtifacts ra = run_retrofit(cfg, bundle, data, vocab);
                run.retrofit = ra.metrics;
                art.write_text(run_dir + "/retrofit_cities.csv", ra.cities_csv);
                if (cfg.emit_svg) {
                    art.write_text(run_dir + "/pca_map.svg", ra.pca_svg);
                    art.write_text(run_dir + "/weat.svg", ra.weat_svg);
                }
            }
            art.write_text(run_dir + "/metrics.json", run_to_json(run).dump(2));
            result.runs.push_back(std::move(run));
        }
    }

    for (uint64_t seed : cfg.seeds) add_significance(result.significance, cfg, result.runs, seed);
    result.baseline_ft_geoloc_km = median_of(ft_baselines);
    result.baseline_zs_geoloc = 1.0 / static_cast<double>(cfg.world.cities.size());
    result.baseline_zs_lang = 1.0 / static_cast<double>(cfg.world.regions.size());

    // Aggregate report.
    json runs_json = json::array();
    for (const auto& r : result.runs) runs_json.push_back(run_to_json(r));
    json sig_json = json::array();
    for (const auto& t : result.significance)
        sig_json.push_back({{"seed", t.seed},
                            {"task", t.task},
                            {"baseline", t.baseline},
                            {"contender", t.contender},
                            {"method", t.method},
                            {"statistic", t.statistic},
                            {"p_raw", t.p_raw},
                            {"p_holm", t.p_holm}});
    json medians = json::object();
    for (const auto& regime : cfg.regimes) {
        medians[regime] = {
            {"ft_geoloc_median_km",
             median_over_seeds(result.runs, regime,
                               [](const RunResult& r) { return r.tasks.ft_geoloc_median_km; })},
            {"ft_lang_accuracy",
             median_over_seeds(result.runs, regime,
                               [](const RunResult& r) { return r.tasks.ft_lang_accuracy; })},
            {"zs_geoloc_accuracy",
             median_over_seeds(result.runs, regime,
                               [](const RunResult& r) { return r.tasks.zs_geoloc_accuracy; })},
            {"zs_lang_accuracy",
             median_over_seeds(result.runs, regime,
                               [](const RunResult& r) { return r.tasks.zs_lang_accuracy; })},
            {"zs_dialect_accuracy",
             median_over_seeds(result.runs, regime,
                               [](const RunResult& r) { return r.tasks.zs_dialect_accuracy; })},
            {"distance_correlation",
             median_over_seeds(result.runs, regime, [](const RunResult& r) {
                 return r.retrofit.distance_correlation;
             })}};
    }
    json baselines{{"ft_geoloc_random_km", result.baseline_ft_geoloc_km},
                   {"zs_geoloc_uniform", result.baseline_zs_geoloc},
                   {"zs_lang_uniform", result.baseline_zs_lang}};
    json per_seed = json::array();
    for (uint64_t seed : cfg.seeds)
        per_seed.push_back(
            {{"seed", seed}, {"ft_geoloc_random_km", result.ft_baseline_by_seed.at(seed)}});
    baselines["per_seed"] = per_seed;

    json report{{"config", json::parse(cfg.to_json())},
                {"runs", runs_json},
                {"medians", medians},
                {"significance", sig_json},
                {"baselines", baselines}};
    result.report_json = report.dump(2);
    art.write_text("report.json", result.report_json);

    if (cfg.emit_svg) {
        std::vector<std::string> labels;
        std::vector<double> zs_vals, ft_vals;
        for (const auto& regime : cfg.regimes) {
            labels.push_back(regime);
            zs_vals.push_back(median_over_seeds(
                result.runs, regime,
                [](const RunResult& r) { return r.tasks.zs_geoloc_accuracy; }));
            ft_vals.push_back(median_over_seeds(
                result.runs, regime,
                [](const RunResult& r) { return r.tasks.ft_geoloc_median_km; }));
        }
        art.ensure_dir("plots");
        art.write_text("plots/summary_zs_geoloc.svg",
                       plots::svg_bars("Zero-shot geolocation accuracy (median over seeds)",
                                       labels, zs_vals));
        art.write_text("plots/summary_ft_geoloc.svg",
                       plots::svg_bars("Fine-tuned geolocation median error km (median over "
                                       "seeds)",
                                       labels, ft_vals));
    }
    art.write_text("manifest.json", art.manifest_json());
    return result;
}

std::string format_report(const std::string& report_json) {
    json report = json::parse(report_json, nullptr, false);
    if (report.is_discarded()) throw Error("report: invalid JSON");
    std::ostringstream out;
    out << "geoadaptation experiment report\n";
    out << "===============================\n\n";

    const json& medians = report.at("medians");
    out << "median metrics over seeds\n";
    char line[256];
    std::snprintf(line, sizeof(line), "  %-10s %12s %12s %12s %12s %12s %10s\n", "regime",
                  "ft-geo km", "ft-lang", "zs-geo", "zs-lang", "zs-dialect", "distcorr");
    out << line;
    for (auto it = medians.begin(); it != medians.end(); ++it) {
        const json& m = it.value();
        std::snprintf(line, sizeof(line), "  %-10s %12.2f %12.3f %12.3f %12.3f %12.3f %10.3f\n",
                      it.key().c_str(), m.at("ft_geoloc_median_km").get<double>(),
                      m.at("ft_lang_accuracy").get<double>(),
                      m.at("zs_geoloc_accuracy").get<double>(),
                      m.at("zs_lang_accuracy").get<double>(),
                      m.at("zs_dialect_accuracy").get<double>(),
                      m.at("distance_correlation").get<double>());
        out << line;
    }
    const json& baselines = report.at("baselines");
    out << "\nbaselines: random-cluster ft-geoloc "
        << baselines.at("ft_geoloc_random_km").get<double>() << " km, uniform zs-geoloc "
        << baselines.at("zs_geoloc_uniform").get<double>() << ", uniform zs-lang "
        << baselines.at("zs_lang_uniform").get<double>() << "\n";

    out << "\nper-run uncertainty weights (final epoch)\n";
    for (const auto& r : report.at("runs")) {
        std::snprintf(line, sizeof(line), "  seed %llu %-10s eta_mlm %7.3f eta_geo %7.3f\n",
                      static_cast<unsigned long long>(r.at("seed").get<uint64_t>()),
                      r.at("regime").get<std::string>().c_str(),
                      r.at("eta_mlm").get<double>(), r.at("eta_geo").get<double>());
        out << line;
    }

    out << "\nsignificance (Holm-adjusted within seed and task)\n";
    for (const auto& t : report.at("significance")) {
        std::snprintf(line, sizeof(line),
                      "  seed %llu %-11s %-8s vs %-8s %-9s p=%.4g (holm %.4g)\n",
                      static_cast<unsigned long long>(t.at("seed").get<uint64_t>()),
                      t.at("task").get<std::string>().c_str(),
                      t.at("baseline").get<std::string>().c_str(),
                      t.at("contender").get<std::string>().c_str(),
                      t.at("method").get<std::string>().c_str(), t.at("p_raw").get<double>(),
                      t.at("p_holm").get<double>());
        out << line;
    }
    return out.str();
}

}  // namespace geoadapt::experiment
