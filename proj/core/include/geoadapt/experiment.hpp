#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "geoadapt/adapt.hpp"
#include "geoadapt/evalharness.hpp"
#include "geoadapt/geoworld.hpp"
#include "geoadapt/model.hpp"

namespace geoadapt::experiment {

struct PhaseConfig {
    size_t epochs = 0;
    size_t batch_size = 32;
    double lr = 1e-3;
};

/// Everything a full experiment needs; parsed from JSON (comments allowed)
/// with defaults for every field.
struct ExperimentConfig {
    world::WorldSpec world = world::default_world();
    model::EncoderConfig encoder;  // vocab_size resolved from the world
    size_t pretrain_docs = 1600;
    size_t corpus_docs = 1600;
    std::array<double, 3> fractions = {0.75, 0.10, 0.15};
    PhaseConfig pretrain{6, 32, 1e-3};
    PhaseConfig adaptation{25, 32, 1e-3};
    PhaseConfig finetune{3, 32, 1e-3};
    adapt::MaskPolicy mask;
    std::vector<std::string> regimes = {"mlm", "geo-w", "geo-seq"};
    std::vector<uint64_t> seeds = {1, 2, 3};
    size_t geo_clusters = 0;  // 0 selects the number of cities
    bool save_snapshots = false;
    bool epoch_curve = true;      // zero-shot accuracy after every epoch
    size_t curve_eval_docs = 96;  // test subset for the epoch curve
    bool emit_svg = true;

    void validate() const;
    std::string to_json() const;
    static ExperimentConfig from_json_text(const std::string& text);
    static std::string sample_jsonc();
};

/// Per-run evaluation numbers; one run is (seed, regime).
struct TaskMetrics {
    double ft_geoloc_median_km = 0.0;
    size_t ft_geoloc_best_epoch = 0;
    double ft_lang_accuracy = 0.0;
    double zs_geoloc_accuracy = 0.0;
    double zs_geoloc_accuracy_cal = 0.0;
    double zs_lang_accuracy = 0.0;
    double zs_lang_accuracy_cal = 0.0;
    double zs_dialect_accuracy = 0.0;
    double zs_dialect_accuracy_cal = 0.0;
};

struct RetrofitMetrics {
    double distance_correlation = 0.0;
    double weat_sign_agreement = 0.0;  // fraction of cities
    double procrustes_rmsd = 0.0;
    bool procrustes_reflection = false;
};

struct RunResult {
    uint64_t seed = 0;
    std::string regime;
    TaskMetrics tasks;
    RetrofitMetrics retrofit;
    double final_eta_mlm = 0.0;
    double final_eta_geo = 0.0;
    double final_l_mlm = 0.0;
    double final_l_geo = 0.0;
    // Raw per-example outcomes kept for significance testing.
    std::vector<double> ft_geoloc_km;
    std::vector<uint8_t> ft_lang_correct;
    std::vector<uint8_t> zs_geoloc_correct;
    std::vector<uint8_t> zs_lang_correct;
    std::vector<uint8_t> zs_dialect_correct;
};

struct PairwiseTest {
    uint64_t seed = 0;
    std::string task;
    std::string baseline;   // regime names
    std::string contender;
    std::string method;     // "mcnemar" or "paired-t"
    double statistic = 0.0; // b+c for McNemar, t for the t-test
    double p_raw = 1.0;
    double p_holm = 1.0;
};

struct ExperimentResult {
    std::vector<RunResult> runs;
    std::vector<PairwiseTest> significance;
    double baseline_ft_geoloc_km = 0.0;  // expected km under uniform cluster choice
    double baseline_zs_geoloc = 0.0;     // uniform accuracy over cities
    double baseline_zs_lang = 0.0;
    std::map<uint64_t, double> ft_baseline_by_seed;
    std::string report_json;
};

/// Runs the full pipeline (corpora, pretraining, adaptation per regime,
/// fine-tuning, zero-shot evaluation, retrofitting analysis, significance)
/// and writes all artifacts plus report.json and manifest.json under
/// out_dir. Byte-identical artifacts on reruns with the same config.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

/// Renders a stored report.json as a readable text summary.
std::string format_report(const std::string& report_json);

/// Default output root: the geoadaptation out-root environment variable if
/// set, else "./geoadapt-out".
std::string default_out_root();
inline constexpr const char* kOutRootEnvVar = "GEOADAPT_OUT_ROOT";

}  // namespace geoadapt::experiment
