#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "geoadapt/adapt.hpp"
#include "geoadapt/geocluster.hpp"
#include "geoadapt/geoworld.hpp"
#include "geoadapt/model.hpp"

namespace geoadapt::eval {

using Bundle = model::ModelBundle<float>;

// ---- supervised fine-tuning ----

struct FinetuneConfig {
    size_t epochs = 3;
    size_t batch_size = 32;
    double lr = 1e-3;
    uint64_t seed = 11;
};

struct FinetuneResult {
    Bundle best;              // weights at the best dev epoch
    size_t best_epoch = 0;    // 1-based epoch the best weights come from
    double best_dev = 0.0;
    std::vector<double> dev_curve;
};

/// Cross-entropy training of a [CLS] head (full model updated). Epoch
/// selection by the dev metric; ties keep the earlier epoch.
FinetuneResult finetune_cls(const Bundle& start, const std::vector<std::vector<int>>& train_docs,
                            const std::vector<int>& train_labels, model::ClsHead head,
                            const std::function<double(const Bundle&)>& dev_metric,
                            bool higher_is_better, const FinetuneConfig& cfg);

/// Argmax class per document from a [CLS] head; ties to the lowest class.
std::vector<size_t> predict_cls(const Bundle& m, const std::vector<std::vector<int>>& docs,
                                model::ClsHead head, size_t eval_batch = 64);

struct GeolocScore {
    double median_km = 0.0;
    std::vector<double> km;            // per-document geodesic error
    std::vector<size_t> predictions;   // predicted cluster ids
};

/// Predicted cluster centroid vs the gold geotag, in kilometers.
GeolocScore score_geoloc(const Bundle& m, const cluster::ClusterModel& clusters,
                         const std::vector<std::vector<int>>& docs,
                         const std::vector<cluster::GeoPoint>& gold_geo, size_t eval_batch = 64);

struct ClassificationScore {
    double accuracy = 0.0;
    std::vector<size_t> predictions;
    std::vector<uint8_t> correct;
    std::vector<std::vector<size_t>> confusion;  // [gold][pred]
};

ClassificationScore score_classification(const std::vector<size_t>& predictions,
                                         const std::vector<size_t>& gold, size_t n_classes);

ClassificationScore score_cls_head(const Bundle& m, const std::vector<std::vector<int>>& docs,
                                   const std::vector<size_t>& gold, model::ClsHead head,
                                   size_t n_classes, size_t eval_batch = 64);

// ---- zero-shot prompting ----

/// A cloze prompt appended to the document plus a document-free neutral
/// variant. Each must contain exactly one [MASK]; predictions are
/// restricted to the candidate tokens.
struct PromptSpec {
    std::vector<int> prompt_ids;
    std::vector<int> neutral_ids;
    std::vector<int> candidates;

    void validate(const text::Vocabulary& vocab) const;
};

/// Builds a prompt from surface tokens; every token must be in-vocabulary.
PromptSpec make_prompt(const std::vector<std::string>& prompt_tokens,
                       const std::vector<std::string>& neutral_tokens,
                       const std::vector<std::string>& candidate_tokens,
                       const text::Vocabulary& vocab);

/// Softmax probabilities over the full vocabulary at the masked slot,
/// restricted to the candidates and renormalized. One entry per candidate.
std::vector<double> candidate_scores(const Bundle& m, const std::vector<int>& doc,
                                     const PromptSpec& prompt);

/// Candidate probabilities under the neutral prompt alone; the calibration
/// priors.
std::vector<double> candidate_priors(const Bundle& m, const PromptSpec& prompt);

size_t argmax_tie_lowest(const std::vector<double>& scores);

/// Argmax of scores[i] / priors[i]. Dividing by a constant prior vector
/// leaves the argmax unchanged; non-uniform priors damp candidates the
/// model prefers regardless of the document.
size_t calibrated_argmax(const std::vector<double>& scores, const std::vector<double>& priors);

struct ZeroShotResult {
    double accuracy = 0.0;
    std::vector<size_t> predictions;
    std::vector<uint8_t> correct;
    std::vector<std::vector<size_t>> confusion;
};

ZeroShotResult zero_shot(const Bundle& m, const std::vector<std::vector<int>>& docs,
                         const std::vector<size_t>& gold, const PromptSpec& prompt,
                         bool calibrated, size_t eval_batch = 64);

/// One dialect-variant cloze item: the attested variant form is masked in
/// place and the model chooses between the pair's two forms.
struct DialectItem {
    std::vector<int> ids;
    size_t token_pos = 0;   // position within ids (no [CLS] offset)
    size_t pair_index = 0;
    std::array<int, 2> candidates{};  // form_a id, form_b id
    size_t gold = 0;                  // 0 = form_a, 1 = form_b
};

/// Expands documents into one item per variant slot; documents without
/// slots contribute nothing.
std::vector<DialectItem> dialect_items(const std::vector<world::GeoDocument>& docs,
                                       const world::WorldSpec& spec,
                                       const text::Vocabulary& vocab);

ZeroShotResult zero_shot_dialect(const Bundle& m, const std::vector<DialectItem>& items,
                                 bool calibrated, size_t eval_batch = 64);

}  // namespace geoadapt::eval
