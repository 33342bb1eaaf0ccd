#include "geoadapt/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace geoadapt::eval {

namespace {

std::vector<size_t> iota_order(size_t n) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    return order;
}

/// Row-wise softmax of one logits row in double precision, restricted to
/// candidate ids and renormalized.
std::vector<double> restricted_probs(const float* row, size_t vocab,
                                     const std::vector<int>& candidates) {
    double mx = row[0];
    for (size_t j = 1; j < vocab; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double denom = 0.0;
    for (size_t j = 0; j < vocab; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    std::vector<double> probs(candidates.size());
    double mass = 0.0;
    for (size_t c = 0; c < candidates.size(); ++c) {
        probs[c] = std::exp(static_cast<double>(row[static_cast<size_t>(candidates[c])]) - mx) /
                   denom;
        mass += probs[c];
    }
    if (mass <= 0.0) throw Error("zero probability mass over candidates");
    for (double& p : probs) p /= mass;
    return probs;
}

size_t find_single_mask(const std::vector<int>& ids, const char* what) {
    size_t pos = ids.size();
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == text::Vocabulary::kMaskId) {
            if (pos != ids.size()) throw Error(std::string(what) + ": more than one [MASK]");
            pos = i;
        }
    }
    if (pos == ids.size()) throw Error(std::string(what) + ": no [MASK] token");
    return pos;
}

}  // namespace

FinetuneResult finetune_cls(const Bundle& start, const std::vector<std::vector<int>>& train_docs,
                            const std::vector<int>& train_labels, model::ClsHead head,
                            const std::function<double(const Bundle&)>& dev_metric,
                            bool higher_is_better, const FinetuneConfig& cfg) {
    if (train_docs.empty()) throw Error("finetune_cls: empty training set");
    if (train_docs.size() != train_labels.size())
        throw Error("finetune_cls: label count does not match document count");
    if (cfg.epochs == 0) throw Error("finetune_cls: epochs must be positive");

    Bundle work = start;
    for (auto& [name, p] : work.store.entries()) {
        std::fill(p.m.data.begin(), p.m.data.end(), 0.0f);
        std::fill(p.v.data.begin(), p.v.data.end(), 0.0f);
    }
    work.store.set_step(0);

    FinetuneResult result;
    std::vector<size_t> order = iota_order(train_docs.size());
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng = Rng::stream(cfg.seed, epoch);
        rng.shuffle(order);
        for (size_t starti = 0; starti < order.size(); starti += cfg.batch_size) {
            size_t end = std::min(order.size(), starti + cfg.batch_size);
            std::vector<std::vector<int>> chunk;
            std::vector<int> labels;
            for (size_t i = starti; i < end; ++i) {
                chunk.push_back(train_docs[order[i]]);
                labels.push_back(train_labels[order[i]]);
            }
            nn::Tape<float> tape;
            model::Batch batch = model::make_batch(chunk, work.config.max_len);
            model::ForwardOptions opts;
            opts.train = true;
            opts.dropout_rng = &rng;
            model::ForwardResult<float> fwd = model::forward(tape, work, batch, opts);
            nn::Var loss = tape.cross_entropy_nll(model::cls_logits(tape, fwd, head), labels);
            if (!std::isfinite(static_cast<double>(tape.val(loss).data[0])))
                throw Error("finetune_cls: non-finite loss at epoch " + std::to_string(epoch));
            tape.backward(loss);
            nn::harvest_grads(tape, work.store);
            work.store.adam_step(cfg.lr);
        }
        double dev = dev_metric(work);
        result.dev_curve.push_back(dev);
        bool better = result.dev_curve.size() == 1 ||
                      (higher_is_better ? dev > result.best_dev : dev < result.best_dev);
        if (better) {
            result.best = work;
            result.best_epoch = epoch + 1;
            result.best_dev = dev;
        }
    }
    return result;
}

std::vector<size_t> predict_cls(const Bundle& m, const std::vector<std::vector<int>>& docs,
                                model::ClsHead head, size_t eval_batch) {
    std::vector<size_t> preds;
    preds.reserve(docs.size());
    for (size_t start = 0; start < docs.size(); start += eval_batch) {
        size_t end = std::min(docs.size(), start + eval_batch);
        std::vector<std::vector<int>> chunk(docs.begin() + static_cast<ptrdiff_t>(start),
                                            docs.begin() + static_cast<ptrdiff_t>(end));
        model::Batch batch = model::make_batch(chunk, m.config.max_len);
        nn::Tensor<float> probs = model::cls_probs_eval(m, batch, head);
        size_t k = probs.cols();
        for (size_t i = 0; i < chunk.size(); ++i) {
            const float* row = probs.data.data() + i * k;
            size_t best = 0;
            for (size_t j = 1; j < k; ++j)
                if (row[j] > row[best]) best = j;
            preds.push_back(best);
        }
    }
    return preds;
}

GeolocScore score_geoloc(const Bundle& m, const cluster::ClusterModel& clusters,
                         const std::vector<std::vector<int>>& docs,
                         const std::vector<cluster::GeoPoint>& gold_geo, size_t eval_batch) {
    if (docs.size() != gold_geo.size())
        throw Error("score_geoloc: geotag count does not match document count");
    if (docs.empty()) throw Error("score_geoloc: empty evaluation set");
    GeolocScore score;
    score.predictions = predict_cls(m, docs, model::ClsHead::Geo, eval_batch);
    score.km.reserve(docs.size());
    for (size_t i = 0; i < docs.size(); ++i) {
        cluster::GeoPoint pred = cluster::centroid_geo(clusters, score.predictions[i]);
        score.km.push_back(cluster::geodesic_km(pred, gold_geo[i]));
    }
    score.median_km = cluster::median(score.km);
    return score;
}

ClassificationScore score_classification(const std::vector<size_t>& predictions,
                                         const std::vector<size_t>& gold, size_t n_classes) {
    if (predictions.size() != gold.size())
        throw Error("score_classification: prediction and gold sizes differ");
    if (predictions.empty()) throw Error("score_classification: empty evaluation set");
    ClassificationScore s;
    s.predictions = predictions;
    s.correct.resize(predictions.size());
    s.confusion.assign(n_classes, std::vector<size_t>(n_classes, 0));
    size_t hits = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (gold[i] >= n_classes || predictions[i] >= n_classes)
            throw Error("score_classification: class id out of range");
        s.correct[i] = predictions[i] == gold[i] ? 1 : 0;
        hits += s.correct[i];
        ++s.confusion[gold[i]][predictions[i]];
    }
    s.accuracy = static_cast<double>(hits) / static_cast<double>(predictions.size());
    return s;
}

ClassificationScore score_cls_head(const Bundle& m, const std::vector<std::vector<int>>& docs,
                                   const std::vector<size_t>& gold, model::ClsHead head,
                                   size_t n_classes, size_t eval_batch) {
    return score_classification(predict_cls(m, docs, head, eval_batch), gold, n_classes);
}

void PromptSpec::validate(const text::Vocabulary& vocab) const {
    find_single_mask(prompt_ids, "prompt");
    find_single_mask(neutral_ids, "neutral prompt");
    if (candidates.empty()) throw Error("prompt: no candidate tokens");
    std::vector<int> sorted = candidates;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw Error("prompt: duplicate candidate token");
    for (int c : candidates) {
        vocab.token_of(c);  // range check
        if (c < text::Vocabulary::kNumSpecials)
            throw Error("prompt: candidate '" + vocab.token_of(c) + "' is a special token");
    }
    for (int id : prompt_ids) vocab.token_of(id);
    for (int id : neutral_ids) vocab.token_of(id);
}

PromptSpec make_prompt(const std::vector<std::string>& prompt_tokens,
                       const std::vector<std::string>& neutral_tokens,
                       const std::vector<std::string>& candidate_tokens,
                       const text::Vocabulary& vocab) {
    auto lookup = [&](const std::vector<std::string>& tokens) {
        std::vector<int> ids;
        for (const auto& t : tokens) {
            if (!vocab.contains(t)) throw Error("prompt token '" + t + "' not in vocabulary");
            ids.push_back(vocab.id_of(t));
        }
        return ids;
    };
    PromptSpec spec{lookup(prompt_tokens), lookup(neutral_tokens), lookup(candidate_tokens)};
    spec.validate(vocab);
    return spec;
}

std::vector<double> candidate_scores(const Bundle& m, const std::vector<int>& doc,
                                     const PromptSpec& prompt) {
    size_t mask_in_prompt = find_single_mask(prompt.prompt_ids, "prompt");
    std::vector<int> ids = doc;
    ids.insert(ids.end(), prompt.prompt_ids.begin(), prompt.prompt_ids.end());
    model::Batch batch = model::make_batch({ids}, m.config.max_len);
    size_t mask_pos = 1 + doc.size() + mask_in_prompt;  // +1 for [CLS]
    nn::Tensor<float> logits = model::mlm_logits_eval(m, batch, {mask_pos});
    return restricted_probs(logits.data.data(), logits.cols(), prompt.candidates);
}

std::vector<double> candidate_priors(const Bundle& m, const PromptSpec& prompt) {
    size_t mask_in_neutral = find_single_mask(prompt.neutral_ids, "neutral prompt");
    model::Batch batch = model::make_batch({prompt.neutral_ids}, m.config.max_len);
    nn::Tensor<float> logits = model::mlm_logits_eval(m, batch, {1 + mask_in_neutral});
    return restricted_probs(logits.data.data(), logits.cols(), prompt.candidates);
}

size_t argmax_tie_lowest(const std::vector<double>& scores) {
    if (scores.empty()) throw Error("argmax of empty score vector");
    size_t best = 0;
    for (size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

size_t calibrated_argmax(const std::vector<double>& scores, const std::vector<double>& priors) {
    if (scores.size() != priors.size())
        throw Error("calibrated_argmax: score and prior sizes differ");
    std::vector<double> adjusted(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!(priors[i] > 0.0)) throw Error("calibrated_argmax: prior must be positive");
        adjusted[i] = scores[i] / priors[i];
    }
    return argmax_tie_lowest(adjusted);
}

ZeroShotResult zero_shot(const Bundle& m, const std::vector<std::vector<int>>& docs,
                         const std::vector<size_t>& gold, const PromptSpec& prompt,
                         bool calibrated, size_t eval_batch) {
    if (docs.size() != gold.size()) throw Error("zero_shot: gold count does not match documents");
    if (docs.empty()) throw Error("zero_shot: empty evaluation set");
    prompt.validate(m.vocab);
    size_t mask_in_prompt = find_single_mask(prompt.prompt_ids, "prompt");
    std::vector<double> priors;
    if (calibrated) priors = candidate_priors(m, prompt);

    std::vector<size_t> predictions;
    predictions.reserve(docs.size());
    for (size_t start = 0; start < docs.size(); start += eval_batch) {
        size_t end = std::min(docs.size(), start + eval_batch);
        std::vector<std::vector<int>> chunk;
        std::vector<size_t> mask_pos;
        for (size_t i = start; i < end; ++i) {
            std::vector<int> ids = docs[i];
            ids.insert(ids.end(), prompt.prompt_ids.begin(), prompt.prompt_ids.end());
            chunk.push_back(std::move(ids));
        }
        model::Batch batch = model::make_batch(chunk, m.config.max_len);
        for (size_t i = start; i < end; ++i)
            mask_pos.push_back(batch.flat(i - start, 1 + docs[i].size() + mask_in_prompt));
        nn::Tensor<float> logits = model::mlm_logits_eval(m, batch, mask_pos);
        for (size_t i = 0; i < chunk.size(); ++i) {
            std::vector<double> scores = restricted_probs(
                logits.data.data() + i * logits.cols(), logits.cols(), prompt.candidates);
            predictions.push_back(calibrated ? calibrated_argmax(scores, priors)
                                             : argmax_tie_lowest(scores));
        }
    }

    ClassificationScore cs = score_classification(predictions, gold, prompt.candidates.size());
    return ZeroShotResult{cs.accuracy, cs.predictions, cs.correct, cs.confusion};
}

std::vector<DialectItem> dialect_items(const std::vector<world::GeoDocument>& docs,
                                       const world::WorldSpec& spec,
                                       const text::Vocabulary& vocab) {
    std::vector<DialectItem> items;
    for (const auto& doc : docs) {
        for (const auto& slot : doc.variant_slots) {
            if (slot.pair_index >= spec.variant_pairs.size())
                throw Error("dialect_items: slot pair index out of range");
            const auto& pair = spec.variant_pairs[slot.pair_index];
            DialectItem item;
            item.ids = text::encode(doc.tokens, vocab);
            item.token_pos = slot.position;
            item.pair_index = slot.pair_index;
            item.candidates = {vocab.id_of(pair.form_a), vocab.id_of(pair.form_b)};
            if (slot.chosen_form == pair.form_a)
                item.gold = 0;
            else if (slot.chosen_form == pair.form_b)
                item.gold = 1;
            else
                throw Error("dialect_items: slot form '" + slot.chosen_form +
                            "' matches neither variant");
            items.push_back(std::move(item));
        }
    }
    return items;
}

ZeroShotResult zero_shot_dialect(const Bundle& m, const std::vector<DialectItem>& items,
                                 bool calibrated, size_t eval_batch) {
    if (items.empty()) throw Error("zero_shot_dialect: no items");
    // Per-pair priors from the bare-[MASK] neutral prompt.
    std::map<size_t, std::vector<double>> priors;
    if (calibrated) {
        for (const auto& item : items) {
            if (priors.count(item.pair_index)) continue;
            PromptSpec p;
            p.prompt_ids = {text::Vocabulary::kMaskId};
            p.neutral_ids = {text::Vocabulary::kMaskId};
            p.candidates = {item.candidates[0], item.candidates[1]};
            priors[item.pair_index] = candidate_priors(m, p);
        }
    }

    std::vector<size_t> predictions, gold;
    predictions.reserve(items.size());
    for (size_t start = 0; start < items.size(); start += eval_batch) {
        size_t end = std::min(items.size(), start + eval_batch);
        std::vector<std::vector<int>> chunk;
        std::vector<size_t> mask_pos;
        for (size_t i = start; i < end; ++i) {
            std::vector<int> ids = items[i].ids;
            if (items[i].token_pos >= ids.size())
                throw Error("zero_shot_dialect: mask position out of range");
            ids[items[i].token_pos] = text::Vocabulary::kMaskId;
            chunk.push_back(std::move(ids));
        }
        model::Batch batch = model::make_batch(chunk, m.config.max_len);
        for (size_t i = start; i < end; ++i)
            mask_pos.push_back(batch.flat(i - start, 1 + items[i].token_pos));
        nn::Tensor<float> logits = model::mlm_logits_eval(m, batch, mask_pos);
        for (size_t i = start; i < end; ++i) {
            std::vector<int> cands = {items[i].candidates[0], items[i].candidates[1]};
            std::vector<double> scores = restricted_probs(
                logits.data.data() + (i - start) * logits.cols(), logits.cols(), cands);
            predictions.push_back(calibrated
                                      ? calibrated_argmax(scores, priors.at(items[i].pair_index))
                                      : argmax_tie_lowest(scores));
        }
    }
    for (const auto& item : items) gold.push_back(item.gold);
    ClassificationScore cs = score_classification(predictions, gold, 2);
    return ZeroShotResult{cs.accuracy, cs.predictions, cs.correct, cs.confusion};
}

}  // namespace geoadapt::eval
