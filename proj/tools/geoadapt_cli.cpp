#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "geoadapt/adapt.hpp"
#include "geoadapt/evalharness.hpp"
#include "geoadapt/experiment.hpp"
#include "geoadapt/geocluster.hpp"
#include "geoadapt/geoworld.hpp"
#include "geoadapt/model.hpp"
#include "geoadapt/persist.hpp"
#include "geoadapt/plots.hpp"
#include "geoadapt/retrofit.hpp"
#include "geoadapt/textenc.hpp"

namespace ga = geoadapt;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ga::Error("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ga::world::WorldSpec load_world(const std::string& path) {
    if (path.empty()) return ga::world::default_world();
    return ga::world::WorldSpec::from_json(slurp(path));
}

std::vector<ga::cluster::GeoPoint> corpus_geos(const std::vector<ga::world::GeoDocument>& docs) {
    std::vector<ga::cluster::GeoPoint> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back({d.lon, d.lat});
    return out;
}

ga::eval::PromptSpec bare_mask_prompt(const std::vector<std::string>& candidates,
                                      const ga::text::Vocabulary& vocab) {
    return ga::eval::make_prompt({ga::text::kMaskToken}, {ga::text::kMaskToken}, candidates,
                                 vocab);
}

std::vector<std::string> city_names(const ga::world::WorldSpec& w) {
    std::vector<std::string> out;
    for (const auto& c : w.cities) out.push_back(c.name);
    return out;
}

// ---- subcommand options ----

struct GenerateOpts {
    std::string world_path, out = "corpus.jsonl", vocab_out, world_out;
    size_t docs = 1600;
    uint64_t seed = 1;
};

struct TrainOpts {
    std::string checkpoint, corpus, world_path, out, curve, regime = "mlm";
    size_t epochs = 0, batch_size = 32;
    double lr = 1e-3, mask_ratio = 0.15;
    uint64_t seed = 1;
    // pretrain only: fresh-model shape
    size_t layers = 2, d_model = 64, heads = 4, d_ff = 0, max_len = 64, geo_clusters = 0;
    double dropout = 0.1;
};

struct FinetuneOpts {
    std::string checkpoint, task, train, dev, world_path, clusters, save_clusters, out;
    size_t epochs = 3, batch_size = 32;
    double lr = 1e-3;
    uint64_t seed = 11;
};

struct EvalOpts {
    std::string checkpoint, corpus, task, world_path, clusters;
    bool calibrated = false;
};

struct AnalyzeOpts {
    std::string checkpoint, corpus, world_path, csv;
    bool weat = false, distcorr = false, procrustes = false;
};

// ---- handlers ----

void run_generate(const GenerateOpts& o) {
    ga::world::WorldSpec world = load_world(o.world_path);
    ga::world::validate(world);
    auto docs = ga::world::generate_corpus(world, o.docs, o.seed);
    ga::world::save_corpus(docs, o.out);
    if (!o.vocab_out.empty())
        ga::plots::save_text(o.vocab_out, ga::text::build_vocab(world).to_json());
    if (!o.world_out.empty()) ga::plots::save_text(o.world_out, world.to_json());
    std::cout << "wrote " << docs.size() << " documents to " << o.out << "\n";
}

void print_curve_tail(const std::vector<ga::adapt::EpochLoss>& curve) {
    const auto& e = curve.back();
    std::cout << "final epoch " << e.epoch << ": l_mlm " << e.l_mlm;
    if (!std::isnan(e.l_geo)) std::cout << ", l_geo " << e.l_geo;
    std::cout << ", l_total " << e.l_total << ", eta_mlm " << e.eta_mlm << ", eta_geo "
              << e.eta_geo << "\n";
}

void run_pretrain(const TrainOpts& o) {
    ga::world::WorldSpec world = load_world(o.world_path);
    ga::text::Vocabulary vocab = ga::text::build_vocab(world);
    auto docs = ga::world::load_corpus(o.corpus);
    auto ids = ga::text::encode_corpus(docs, vocab);

    ga::model::EncoderConfig enc;
    enc.vocab_size = vocab.size();
    enc.n_layers = o.layers;
    enc.d_model = o.d_model;
    enc.n_heads = o.heads;
    enc.d_ff = o.d_ff;
    enc.max_len = o.max_len;
    enc.dropout = o.dropout;
    size_t k = o.geo_clusters ? o.geo_clusters : world.cities.size();
    auto bundle = ga::model::init_bundle<float>(enc, vocab, k, world.regions.size(), o.seed);

    ga::adapt::AdaptConfig cfg;
    cfg.regime = ga::adapt::Regime::MlmAda;
    cfg.epochs = o.epochs ? o.epochs : 6;
    cfg.batch_size = o.batch_size;
    cfg.lr = o.lr;
    cfg.mask.ratio = o.mask_ratio;
    cfg.seed = o.seed;
    auto curve = ga::adapt::train_adapt(bundle, ids, corpus_geos(docs), cfg);
    bundle.meta.regime = "pretrain";
    ga::persist::save_checkpoint(bundle, o.out);
    if (!o.curve.empty()) ga::plots::save_text(o.curve, ga::adapt::curve_to_csv(curve));
    print_curve_tail(curve);
    std::cout << "saved checkpoint " << o.out << "\n";
}

void run_adapt(const TrainOpts& o) {
    auto bundle = ga::persist::load_checkpoint(o.checkpoint);
    auto docs = ga::world::load_corpus(o.corpus);
    auto ids = ga::text::encode_corpus(docs, bundle.vocab);

    ga::adapt::AdaptConfig cfg;
    cfg.regime = ga::adapt::parse_regime(o.regime);
    cfg.epochs = o.epochs ? o.epochs : 25;
    cfg.batch_size = o.batch_size;
    cfg.lr = o.lr;
    cfg.mask.ratio = o.mask_ratio;
    cfg.seed = o.seed;
    auto curve = ga::adapt::train_adapt(bundle, ids, corpus_geos(docs), cfg);
    ga::persist::save_checkpoint(bundle, o.out);
    if (!o.curve.empty()) ga::plots::save_text(o.curve, ga::adapt::curve_to_csv(curve));
    print_curve_tail(curve);
    std::cout << "saved checkpoint " << o.out << "\n";
}

void run_finetune(const FinetuneOpts& o) {
    auto bundle = ga::persist::load_checkpoint(o.checkpoint);
    ga::world::WorldSpec world = load_world(o.world_path);
    auto train_docs = ga::world::load_corpus(o.train);
    auto dev_docs = ga::world::load_corpus(o.dev);
    auto train_ids = ga::text::encode_corpus(train_docs, bundle.vocab);
    auto dev_ids = ga::text::encode_corpus(dev_docs, bundle.vocab);

    ga::eval::FinetuneConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.lr = o.lr;
    cfg.seed = o.seed;

    ga::eval::FinetuneResult ft;
    if (o.task == "geoloc") {
        ga::cluster::ClusterModel clusters;
        if (!o.clusters.empty()) {
            clusters = ga::cluster::ClusterModel::from_json(slurp(o.clusters));
        } else {
            clusters =
                ga::cluster::fit_kmeans(corpus_geos(train_docs), bundle.geo_classes, o.seed);
        }
        if (clusters.k != bundle.geo_classes)
            throw ga::Error("finetune: cluster count " + std::to_string(clusters.k) +
                            " does not match the checkpoint's geolocation head (" +
                            std::to_string(bundle.geo_classes) + ")");
        if (!o.save_clusters.empty())
            ga::plots::save_text(o.save_clusters, clusters.to_json());
        std::vector<int> labels;
        for (const auto& d : train_docs)
            labels.push_back(static_cast<int>(ga::cluster::assign(clusters, d.lon, d.lat)));
        auto dev_geo = corpus_geos(dev_docs);
        auto metric = [&](const ga::eval::Bundle& m) {
            return ga::eval::score_geoloc(m, clusters, dev_ids, dev_geo).median_km;
        };
        ft = ga::eval::finetune_cls(bundle, train_ids, labels, ga::model::ClsHead::Geo, metric,
                                    false, cfg);
        std::cout << "best epoch " << ft.best_epoch << ", dev median " << ft.best_dev << " km\n";
    } else if (o.task == "langid") {
        if (world.regions.size() != bundle.lang_classes)
            throw ga::Error("finetune: region count does not match the checkpoint's head");
        std::vector<int> labels;
        for (const auto& d : train_docs)
            labels.push_back(static_cast<int>(world.region_index(d.gold_region)));
        std::vector<size_t> dev_gold;
        for (const auto& d : dev_docs) dev_gold.push_back(world.region_index(d.gold_region));
        auto metric = [&](const ga::eval::Bundle& m) {
            return ga::eval::score_cls_head(m, dev_ids, dev_gold, ga::model::ClsHead::Lang,
                                            bundle.lang_classes)
                .accuracy;
        };
        ft = ga::eval::finetune_cls(bundle, train_ids, labels, ga::model::ClsHead::Lang, metric,
                                    true, cfg);
        std::cout << "best epoch " << ft.best_epoch << ", dev accuracy " << ft.best_dev << "\n";
    } else {
        throw ga::Error("finetune: unknown task '" + o.task + "' (expected geoloc or langid)");
    }
    ga::persist::save_checkpoint(ft.best, o.out);
    std::cout << "saved checkpoint " << o.out << "\n";
}

void run_eval(const EvalOpts& o) {
    auto bundle = ga::persist::load_checkpoint(o.checkpoint);
    ga::world::WorldSpec world = load_world(o.world_path);
    auto docs = ga::world::load_corpus(o.corpus);
    auto ids = ga::text::encode_corpus(docs, bundle.vocab);
    json out{{"task", o.task}, {"n", docs.size()}};

    if (o.calibrated && (o.task == "ft-geoloc" || o.task == "ft-lang"))
        throw ga::Error("eval: --calibrated only applies to zero-shot tasks");

    if (o.task == "ft-geoloc") {
        if (o.clusters.empty()) throw ga::Error("eval: ft-geoloc requires --clusters");
        auto clusters = ga::cluster::ClusterModel::from_json(slurp(o.clusters));
        if (clusters.k != bundle.geo_classes)
            throw ga::Error("eval: cluster count does not match the checkpoint's head");
        auto score = ga::eval::score_geoloc(bundle, clusters, ids, corpus_geos(docs));
        out["median_km"] = score.median_km;
    } else if (o.task == "ft-lang") {
        if (world.regions.size() != bundle.lang_classes)
            throw ga::Error("eval: region count does not match the checkpoint's head");
        std::vector<size_t> gold;
        for (const auto& d : docs) gold.push_back(world.region_index(d.gold_region));
        auto score =
            ga::eval::score_cls_head(bundle, ids, gold, ga::model::ClsHead::Lang,
                                     bundle.lang_classes);
        out["accuracy"] = score.accuracy;
    } else if (o.task == "zs-geoloc") {
        std::vector<size_t> gold;
        for (const auto& d : docs) gold.push_back(ga::world::reverse_geocode(d.lon, d.lat, world));
        auto prompt = bare_mask_prompt(city_names(world), bundle.vocab);
        auto score = ga::eval::zero_shot(bundle, ids, gold, prompt, o.calibrated);
        out["accuracy"] = score.accuracy;
        out["calibrated"] = o.calibrated;
    } else if (o.task == "zs-lang") {
        std::vector<size_t> gold;
        for (const auto& d : docs) gold.push_back(world.region_index(d.gold_region));
        auto prompt = bare_mask_prompt(world.regions, bundle.vocab);
        auto score = ga::eval::zero_shot(bundle, ids, gold, prompt, o.calibrated);
        out["accuracy"] = score.accuracy;
        out["calibrated"] = o.calibrated;
    } else if (o.task == "zs-dialect") {
        auto items = ga::eval::dialect_items(docs, world, bundle.vocab);
        if (items.empty()) throw ga::Error("eval: corpus has no dialect-variant slots");
        auto score = ga::eval::zero_shot_dialect(bundle, items, o.calibrated);
        out["n_items"] = items.size();
        out["accuracy"] = score.accuracy;
        out["calibrated"] = o.calibrated;
    } else {
        throw ga::Error("eval: unknown task '" + o.task +
                        "' (expected ft-geoloc, zs-geoloc, ft-lang, zs-lang, or zs-dialect)");
    }
    std::cout << out.dump(2) << "\n";
}

void run_analyze(const AnalyzeOpts& o) {
    if (!o.weat && !o.distcorr && !o.procrustes)
        throw ga::Error("analyze: pass at least one of --weat, --distcorr, --procrustes");
    auto bundle = ga::persist::load_checkpoint(o.checkpoint);
    ga::world::WorldSpec world = load_world(o.world_path);
    auto docs = ga::world::load_corpus(o.corpus);
    auto ids = ga::text::encode_corpus(docs, bundle.vocab);

    std::vector<int> word_ids;
    for (const auto& c : world.cities) word_ids.push_back(bundle.vocab.id_of(c.name));
    for (const auto& p : world.variant_pairs) {
        word_ids.push_back(bundle.vocab.id_of(p.form_a));
        word_ids.push_back(bundle.vocab.id_of(p.form_b));
    }
    auto embs = ga::retrofit::type_embeddings(bundle, ids, word_ids);

    std::vector<std::vector<double>> city_vecs;
    std::vector<ga::cluster::GeoPoint> city_locs;
    std::vector<size_t> kept;
    for (size_t i = 0; i < world.cities.size(); ++i) {
        if (embs[i].occurrences == 0) continue;
        city_vecs.push_back(embs[i].vec);
        city_locs.push_back({world.cities[i].lon, world.cities[i].lat});
        kept.push_back(i);
    }
    if (city_vecs.size() < 3)
        throw ga::Error("analyze: need at least 3 toponyms attested in the corpus");

    json out = json::object();
    std::vector<double> weat(kept.size(), 0.0);
    if (o.weat) {
        std::vector<std::vector<double>> set_a, set_b;
        for (size_t p = 0; p < world.variant_pairs.size(); ++p) {
            const auto& ea = embs[world.cities.size() + 2 * p];
            const auto& eb = embs[world.cities.size() + 2 * p + 1];
            if (ea.occurrences) set_a.push_back(ea.vec);
            if (eb.occurrences) set_b.push_back(eb.vec);
        }
        if (set_a.empty() || set_b.empty())
            throw ga::Error("analyze: variant forms are not attested in the corpus");
        json per_city = json::object();
        size_t agree = 0;
        for (size_t i = 0; i < kept.size(); ++i) {
            weat[i] = ga::retrofit::weat_association(city_vecs[i], set_a, set_b);
            per_city[world.cities[kept[i]].name] = weat[i];
            double side = 0.0;
            for (const auto& pair : world.variant_pairs)
                side += pair.isogloss.signed_distance(world.cities[kept[i]].lon,
                                                      world.cities[kept[i]].lat);
            if ((weat[i] > 0.0) == (side > 0.0)) ++agree;
        }
        out["weat"] = per_city;
        out["weat_sign_agreement"] = static_cast<double>(agree) / static_cast<double>(kept.size());
    }
    if (o.distcorr)
        out["distance_correlation"] = ga::retrofit::geo_embedding_correlation(city_vecs, city_locs);
    std::vector<std::array<double, 2>> pca;
    if (o.procrustes || !o.csv.empty()) pca = ga::retrofit::pca_2d(city_vecs);
    if (o.procrustes) {
        std::vector<std::array<double, 2>> target;
        for (const auto& loc : city_locs) target.push_back({loc[0], loc[1]});
        auto proc = ga::retrofit::procrustes_2d(pca, target);
        out["procrustes_rmsd"] = proc.rmsd;
        out["procrustes_reflection"] = proc.reflection;
    }
    if (!o.csv.empty()) {
        auto fmt = [](double v) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6g", v);
            return std::string(buf);
        };
        std::vector<std::vector<std::string>> rows;
        for (size_t i = 0; i < kept.size(); ++i) {
            const auto& c = world.cities[kept[i]];
            rows.push_back({c.name, fmt(c.lon), fmt(c.lat),
                            std::to_string(embs[kept[i]].occurrences), fmt(pca[i][0]),
                            fmt(pca[i][1]), fmt(weat[i])});
        }
        ga::plots::save_text(o.csv,
                             ga::plots::to_csv({"city", "lon", "lat", "occurrences", "pca_x",
                                                "pca_y", "weat"},
                                               rows));
    }
    std::cout << out.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"geolinguistic adaptation toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "geoadapt 0.1.0");
    std::string stage = "cli";

    GenerateOpts gen;
    auto* sc_gen = app.add_subcommand("generate-corpus", "Sample a synthetic geotagged corpus");
    sc_gen->add_option("--world", gen.world_path, "World spec JSON (default: built-in world)");
    sc_gen->add_option("--docs", gen.docs, "Number of documents")->capture_default_str();
    sc_gen->add_option("--seed", gen.seed, "RNG seed")->capture_default_str();
    sc_gen->add_option("--out", gen.out, "Output JSONL path")->capture_default_str();
    sc_gen->add_option("--vocab", gen.vocab_out, "Also write the vocabulary JSON here");
    sc_gen->add_option("--world-out", gen.world_out, "Also write the resolved world JSON here");
    sc_gen->callback([&] { stage = "generate-corpus"; run_generate(gen); });

    TrainOpts pre;
    auto* sc_pre = app.add_subcommand("pretrain", "Masked-language-model pretraining from scratch");
    sc_pre->add_option("--corpus", pre.corpus, "Training corpus JSONL")->required();
    sc_pre->add_option("--world", pre.world_path, "World spec JSON (default: built-in world)");
    sc_pre->add_option("--out", pre.out, "Output checkpoint path")->required();
    sc_pre->add_option("--epochs", pre.epochs, "Training epochs (default 6)");
    sc_pre->add_option("--batch-size", pre.batch_size, "Batch size")->capture_default_str();
    sc_pre->add_option("--lr", pre.lr, "Adam learning rate")->capture_default_str();
    sc_pre->add_option("--seed", pre.seed, "RNG seed")->capture_default_str();
    sc_pre->add_option("--mask-ratio", pre.mask_ratio, "Masking ratio")->capture_default_str();
    sc_pre->add_option("--layers", pre.layers, "Encoder layers")->capture_default_str();
    sc_pre->add_option("--d-model", pre.d_model, "Hidden width")->capture_default_str();
    sc_pre->add_option("--heads", pre.heads, "Attention heads")->capture_default_str();
    sc_pre->add_option("--d-ff", pre.d_ff, "Feed-forward width (0 = 4x hidden)")
        ->capture_default_str();
    sc_pre->add_option("--max-len", pre.max_len, "Maximum sequence length")->capture_default_str();
    sc_pre->add_option("--dropout", pre.dropout, "Dropout rate")->capture_default_str();
    sc_pre->add_option("--geo-clusters", pre.geo_clusters,
                       "Geolocation head classes (0 = one per city)")
        ->capture_default_str();
    sc_pre->add_option("--curve", pre.curve, "Write the loss curve CSV here");
    sc_pre->callback([&] { stage = "pretrain"; run_pretrain(pre); });

    TrainOpts ada;
    auto* sc_ada = app.add_subcommand("adapt", "Continue training under an adaptation regime");
    sc_ada->add_option("--checkpoint", ada.checkpoint, "Input checkpoint")->required();
    sc_ada->add_option("--corpus", ada.corpus, "Adaptation corpus JSONL")->required();
    sc_ada->add_option("--regime", ada.regime, "mlm, geo-s, geo-w, or geo-seq")->required();
    sc_ada->add_option("--out", ada.out, "Output checkpoint path")->required();
    sc_ada->add_option("--epochs", ada.epochs, "Training epochs (default 25)");
    sc_ada->add_option("--batch-size", ada.batch_size, "Batch size")->capture_default_str();
    sc_ada->add_option("--lr", ada.lr, "Adam learning rate")->capture_default_str();
    sc_ada->add_option("--seed", ada.seed, "RNG seed")->capture_default_str();
    sc_ada->add_option("--mask-ratio", ada.mask_ratio, "Masking ratio")->capture_default_str();
    sc_ada->add_option("--curve", ada.curve, "Write the loss curve CSV here");
    sc_ada->callback([&] { stage = "adapt"; run_adapt(ada); });

    FinetuneOpts ft;
    auto* sc_ft = app.add_subcommand("finetune", "Supervised fine-tuning of a [CLS] head");
    sc_ft->add_option("--checkpoint", ft.checkpoint, "Input checkpoint")->required();
    sc_ft->add_option("--task", ft.task, "geoloc or langid")->required();
    sc_ft->add_option("--train", ft.train, "Training corpus JSONL")->required();
    sc_ft->add_option("--dev", ft.dev, "Development corpus JSONL for model selection")
        ->required();
    sc_ft->add_option("--world", ft.world_path, "World spec JSON (default: built-in world)");
    sc_ft->add_option("--clusters", ft.clusters,
                      "Cluster model JSON for geoloc (default: fit k-means on the train set)");
    sc_ft->add_option("--save-clusters", ft.save_clusters, "Write the cluster model JSON here");
    sc_ft->add_option("--epochs", ft.epochs, "Training epochs")->capture_default_str();
    sc_ft->add_option("--batch-size", ft.batch_size, "Batch size")->capture_default_str();
    sc_ft->add_option("--lr", ft.lr, "Adam learning rate")->capture_default_str();
    sc_ft->add_option("--seed", ft.seed, "RNG seed")->capture_default_str();
    sc_ft->add_option("--out", ft.out, "Output checkpoint path")->required();
    sc_ft->callback([&] { stage = "finetune"; run_finetune(ft); });

    EvalOpts ev;
    auto* sc_ev = app.add_subcommand("eval", "Evaluate a checkpoint on one task");
    sc_ev->add_option("--checkpoint", ev.checkpoint, "Input checkpoint")->required();
    sc_ev->add_option("--corpus", ev.corpus, "Evaluation corpus JSONL")->required();
    sc_ev->add_option("--task", ev.task, "ft-geoloc, zs-geoloc, ft-lang, zs-lang, or zs-dialect")
        ->required();
    sc_ev->add_option("--world", ev.world_path, "World spec JSON (default: built-in world)");
    sc_ev->add_option("--clusters", ev.clusters, "Cluster model JSON (ft-geoloc only)");
    sc_ev->add_flag("--calibrated", ev.calibrated,
                    "Divide zero-shot scores by neutral-prompt priors");
    sc_ev->callback([&] { stage = "eval"; run_eval(ev); });

    AnalyzeOpts an;
    auto* sc_an = app.add_subcommand("analyze", "Retrofitting analysis of type-level embeddings");
    sc_an->add_option("--checkpoint", an.checkpoint, "Input checkpoint")->required();
    sc_an->add_option("--corpus", an.corpus, "Corpus JSONL the embeddings are averaged over")
        ->required();
    sc_an->add_option("--world", an.world_path, "World spec JSON (default: built-in world)");
    sc_an->add_flag("--weat", an.weat, "Differential association of toponyms with variant forms");
    sc_an->add_flag("--distcorr", an.distcorr,
                    "Correlation of geodesic and embedding-cosine distances");
    sc_an->add_flag("--procrustes", an.procrustes,
                    "Orthogonal alignment of the embedding map to true coordinates");
    sc_an->add_option("--csv", an.csv, "Write the per-city table here");
    sc_an->callback([&] { stage = "analyze"; run_analyze(an); });

    std::string cfg_path, out_dir = ga::experiment::default_out_root();
    bool sample_cfg = false;
    auto* sc_run = app.add_subcommand("run-experiment",
                                      "Full multi-seed, multi-regime pipeline with artifacts");
    sc_run->add_option("--config", cfg_path, "Experiment config JSON (comments allowed)");
    sc_run->add_option("--out", out_dir, "Artifact directory")->capture_default_str();
    sc_run->add_flag("--print-sample-config", sample_cfg, "Print a sample config and exit");
    sc_run->callback([&] {
        stage = "run-experiment";
        if (sample_cfg) {
            std::cout << ga::experiment::ExperimentConfig::sample_jsonc();
            return;
        }
        ga::experiment::ExperimentConfig cfg;
        if (!cfg_path.empty())
            cfg = ga::experiment::ExperimentConfig::from_json_text(slurp(cfg_path));
        auto result = ga::experiment::run_experiment(cfg, out_dir);
        std::cout << ga::experiment::format_report(result.report_json);
        std::cout << "\nartifacts under " << out_dir << "\n";
    });

    std::string report_dir = ga::experiment::default_out_root(), report_file;
    auto* sc_rep = app.add_subcommand("report", "Render a stored experiment report");
    sc_rep->add_option("--dir", report_dir, "Artifact directory holding report.json")
        ->capture_default_str();
    sc_rep->add_option("--file", report_file, "Explicit report.json path (overrides --dir)");
    sc_rep->callback([&] {
        stage = "report";
        std::string path = report_file.empty() ? report_dir + "/report.json" : report_file;
        std::cout << ga::experiment::format_report(slurp(path));
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "geoadapt " << stage << ": error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
