#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "geoadapt/model.hpp"

namespace geoadapt::adapt {

enum class Regime { MlmAda, GeoAdaS, GeoAdaW, GeoAdaSeq };

inline const char* regime_name(Regime r) {
    switch (r) {
        case Regime::MlmAda: return "mlm";
        case Regime::GeoAdaS: return "geo-s";
        case Regime::GeoAdaW: return "geo-w";
        case Regime::GeoAdaSeq: return "geo-seq";
    }
    throw Error("unknown regime");
}

inline Regime parse_regime(const std::string& s) {
    if (s == "mlm") return Regime::MlmAda;
    if (s == "geo-s") return Regime::GeoAdaS;
    if (s == "geo-w") return Regime::GeoAdaW;
    if (s == "geo-seq") return Regime::GeoAdaSeq;
    throw Error("unknown adaptation regime '" + s + "' (expected mlm|geo-s|geo-w|geo-seq)");
}

inline bool regime_uses_geo(Regime r) { return r != Regime::MlmAda; }

// ---- composite objectives ----

/// Single-task uncertainty term, log-variance form: (e^-eta * L + eta) / 2.
inline double uncertainty_term(double loss, double eta) {
    return 0.5 * (std::exp(-eta) * loss + eta);
}

/// Same term in the sigma parameterization: L / (2 sigma^2) + log sigma.
/// Equal to uncertainty_term(loss, 2 log sigma) by construction.
inline double uncertainty_term_sigma(double loss, double sigma) {
    if (sigma <= 0.0) throw Error("uncertainty_term_sigma: sigma must be positive");
    return loss / (2.0 * sigma * sigma) + std::log(sigma);
}

inline double composite_sum(double l_mlm, double l_geo) { return l_mlm + l_geo; }

inline double composite_uncertainty(double l_mlm, double l_geo, double eta_mlm, double eta_geo) {
    return uncertainty_term(l_mlm, eta_mlm) + uncertainty_term(l_geo, eta_geo);
}

/// Tape version of uncertainty_term; loss and eta are scalars.
template <typename T>
nn::Var uncertainty_term(nn::Tape<T>& tape, nn::Var loss, nn::Var eta) {
    nn::Var weighted = tape.mul(tape.exp(tape.neg(eta)), loss);
    return tape.scale(tape.add(weighted, eta), 0.5);
}

// ---- masking ----

/// Devlin-style corruption: each selected position becomes [MASK] with
/// p_mask, a random content token with p_random, and stays intact
/// otherwise. Selection redraws per document until at least one position
/// is chosen.
struct MaskPolicy {
    double ratio = 0.15;
    double p_mask = 0.8;
    double p_random = 0.1;

    void validate() const {
        if (ratio <= 0.0 || ratio > 1.0) throw Error("mask policy: ratio must be in (0, 1]");
        if (p_mask < 0.0 || p_random < 0.0 || p_mask + p_random > 1.0)
            throw Error("mask policy: p_mask + p_random must be in [0, 1]");
    }
};

struct MaskedBatch {
    model::Batch batch;               // ids after corruption, [CLS] + padding
    std::vector<size_t> positions;    // flat masked positions, ascending
    std::vector<int> original_ids;    // gold ids at those positions
    std::vector<size_t> position_doc; // owning document per position
};

inline MaskedBatch mask_batch(const std::vector<std::vector<int>>& docs,
                              const text::Vocabulary& vocab, const MaskPolicy& policy,
                              size_t max_len, Rng& rng) {
    policy.validate();
    for (size_t i = 0; i < docs.size(); ++i)
        if (docs[i].empty())
            throw Error("mask_batch: document " + std::to_string(i) + " is empty");
    MaskedBatch mb;
    mb.batch = model::make_batch(docs, max_len);
    int n_content = static_cast<int>(vocab.size()) - text::Vocabulary::kNumSpecials;
    if (n_content <= 0) throw Error("mask_batch: vocabulary has no content tokens");

    for (size_t b = 0; b < docs.size(); ++b) {
        std::vector<size_t> selected;
        do {
            selected.clear();
            for (size_t t = 0; t < docs[b].size(); ++t)
                if (rng.uniform() < policy.ratio) selected.push_back(t);
        } while (selected.empty());
        for (size_t t : selected) {
            size_t flat = mb.batch.flat(b, t + 1);  // +1 skips [CLS]
            mb.positions.push_back(flat);
            mb.original_ids.push_back(docs[b][t]);
            mb.position_doc.push_back(b);
            double u = rng.uniform();
            if (u < policy.p_mask)
                mb.batch.ids[flat] = text::Vocabulary::kMaskId;
            else if (u < policy.p_mask + policy.p_random)
                mb.batch.ids[flat] =
                    text::Vocabulary::kNumSpecials + static_cast<int>(rng.uniform_int(
                                                         static_cast<size_t>(n_content)));
            // else: keep the original token
        }
    }
    return mb;
}

inline MaskedBatch mask_batch(const std::vector<std::vector<int>>& docs,
                              const text::Vocabulary& vocab, double ratio, uint64_t seed) {
    MaskPolicy policy;
    policy.ratio = ratio;
    Rng rng(seed);
    size_t longest = 0;
    for (const auto& d : docs) longest = std::max(longest, d.size());
    return mask_batch(docs, vocab, policy, longest + 1, rng);
}

// ---- loss graphs ----

template <typename T>
struct LossVars {
    std::optional<nn::Var> mlm;
    std::optional<nn::Var> geo;
    nn::Var total;
};

/// Builds the full loss graph for one masked batch under a regime.
/// doc_geo_std holds per-document standardized coordinates; it may be empty
/// for MlmAda, whose graph never touches the geolocation head.
template <typename T>
LossVars<T> build_losses(nn::Tape<T>& tape, const model::ModelBundle<T>& m,
                         const MaskedBatch& mb, Regime regime,
                         const std::vector<std::array<double, 2>>& doc_geo_std,
                         const model::ForwardOptions& opts) {
    model::ForwardResult<T> fwd = model::forward(tape, m, mb.batch, opts);
    LossVars<T> out;
    out.mlm = tape.cross_entropy_nll(model::mlm_logits(tape, fwd, mb.positions),
                                     mb.original_ids);
    if (regime == Regime::MlmAda) {
        out.total = *out.mlm;
        return out;
    }
    if (doc_geo_std.size() != mb.batch.n_docs)
        throw Error("build_losses: geotag count does not match batch");

    // Sequence-level supervision reads the [CLS] rows. Token-level
    // supervision reads the content rows the mask draw left alone, so no
    // row answers to both objectives at once and the rows the MLM head
    // reads keep a single-task mapping.
    std::vector<size_t> rows;
    std::vector<size_t> row_doc;
    if (regime == Regime::GeoAdaSeq) {
        rows = model::cls_positions<T>(mb.batch);
        for (size_t d = 0; d < mb.batch.n_docs; ++d) row_doc.push_back(d);
    } else {
        std::vector<uint8_t> drawn(mb.batch.ids.size(), 0);
        for (size_t p : mb.positions) drawn[p] = 1;
        for (size_t d = 0; d < mb.batch.n_docs; ++d)
            for (size_t t = 1; t < mb.batch.seq_len; ++t) {
                size_t flat = mb.batch.flat(d, t);
                if (!mb.batch.pad[flat] && !drawn[flat]) {
                    rows.push_back(flat);
                    row_doc.push_back(d);
                }
            }
        // Degenerate batches (every content token drawn) fall back to the
        // drawn rows so the loss always has support.
        if (rows.empty()) {
            rows = mb.positions;
            row_doc = mb.position_doc;
        }
    }
    nn::Var pred = model::geo_predict(tape, fwd, rows);
    nn::Tensor<T> target = nn::Tensor<T>::zeros({rows.size(), 2});
    for (size_t i = 0; i < rows.size(); ++i) {
        target.data[2 * i] = static_cast<T>(doc_geo_std[row_doc[i]][0]);
        target.data[2 * i + 1] = static_cast<T>(doc_geo_std[row_doc[i]][1]);
    }
    out.geo = tape.mean_abs_error(pred, tape.input(std::move(target)));

    if (regime == Regime::GeoAdaS) {
        out.total = tape.add(*out.mlm, *out.geo);
    } else {
        nn::Var term_mlm = uncertainty_term(tape, *out.mlm, fwd.bound["uncertainty.eta_mlm"]);
        nn::Var term_geo = uncertainty_term(tape, *out.geo, fwd.bound["uncertainty.eta_geo"]);
        out.total = tape.add(term_mlm, term_geo);
    }
    return out;
}

// ---- training ----

struct AdaptConfig {
    Regime regime = Regime::GeoAdaW;
    size_t epochs = 25;
    size_t batch_size = 32;
    double lr = 1e-3;
    MaskPolicy mask;
    uint64_t seed = 1;
    // Called after every epoch, e.g. for snapshots or tracking curves.
    std::function<void(size_t, const model::ModelBundle<float>&)> on_epoch;
};

struct EpochLoss {
    size_t epoch = 0;
    double l_mlm = 0.0;
    double l_geo = std::numeric_limits<double>::quiet_NaN();  // NaN when not computed
    double l_total = 0.0;
    double eta_mlm = 0.0;
    double eta_geo = 0.0;
};

/// Adam training of the composite objective over the corpus. Mutates the
/// bundle in place, resets optimizer state at the start, and records
/// per-epoch mean losses plus the uncertainty weights after each epoch.
std::vector<EpochLoss> train_adapt(model::ModelBundle<float>& m,
                                   const std::vector<std::vector<int>>& docs,
                                   const std::vector<std::array<double, 2>>& geotags,
                                   const AdaptConfig& cfg);

/// Loss-curve CSV with the header epoch,l_mlm,l_geo,l_total,eta_mlm,eta_geo.
std::string curve_to_csv(const std::vector<EpochLoss>& curve);
std::vector<EpochLoss> curve_from_csv(const std::string& text);

}  // namespace geoadapt::adapt
