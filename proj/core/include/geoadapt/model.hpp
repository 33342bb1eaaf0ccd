#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "geoadapt/common.hpp"
#include "geoadapt/geocluster.hpp"
#include "geoadapt/nn/gradcheck.hpp"
#include "geoadapt/nn/params.hpp"
#include "geoadapt/nn/tape.hpp"
#include "geoadapt/textenc.hpp"

namespace geoadapt::model {

struct EncoderConfig {
    size_t vocab_size = 0;
    size_t n_layers = 2;
    size_t d_model = 64;
    size_t n_heads = 4;
    size_t d_ff = 0;  // 0 selects 4 * d_model
    size_t max_len = 64;
    double dropout = 0.1;

    size_t ff_dim() const { return d_ff ? d_ff : 4 * d_model; }
    size_t head_dim() const { return d_model / n_heads; }

    void validate() const {
        if (vocab_size <= text::Vocabulary::kNumSpecials)
            throw Error("model config: vocab_size must exceed the special tokens");
        if (n_layers == 0 || d_model == 0 || n_heads == 0 || max_len < 2)
            throw Error("model config: layers, width, heads and max_len must be positive");
        if (d_model % n_heads != 0)
            throw Error("model config: d_model must be divisible by n_heads");
        if (dropout < 0.0 || dropout >= 1.0)
            throw Error("model config: dropout must be in [0, 1)");
    }
};

struct ModelMeta {
    std::string regime;  // empty until adaptation
    size_t epoch = 0;
    uint64_t seed = 0;
};

/// A complete trainable model: encoder parameters, both task heads, the
/// uncertainty weights, plus the vocabulary and coordinate statistics it
/// was trained with.
template <typename T>
struct ModelBundle {
    EncoderConfig config;
    text::Vocabulary vocab;
    size_t geo_classes = 0;
    size_t lang_classes = 0;
    nn::ParameterStore<T> store;
    std::optional<cluster::CoordStats> geo_stats;
    ModelMeta meta;

    template <typename U>
    ModelBundle<U> cast() const {
        return ModelBundle<U>{config,      vocab,     geo_classes, lang_classes,
                              store.template cast<U>(), geo_stats, meta};
    }
};

namespace detail {

template <typename T>
nn::Tensor<T> normal_init(std::vector<size_t> shape, Rng& rng, double stddev = 0.02) {
    nn::Tensor<T> t = nn::Tensor<T>::zeros(std::move(shape));
    for (T& v : t.data) v = static_cast<T>(stddev * rng.normal());
    return t;
}

template <typename T>
void create_layer_norm(nn::ParameterStore<T>& store, const std::string& prefix, size_t d) {
    store.create(prefix + ".g", nn::Tensor<T>::full({d}, T(1)));
    store.create(prefix + ".b", nn::Tensor<T>::zeros({d}));
}

}  // namespace detail

template <typename T>
ModelBundle<T> init_bundle(const EncoderConfig& config, text::Vocabulary vocab,
                           size_t geo_classes, size_t lang_classes, uint64_t seed) {
    EncoderConfig cfg = config;
    if (cfg.vocab_size == 0) cfg.vocab_size = vocab.size();
    cfg.validate();
    if (cfg.vocab_size != vocab.size())
        throw Error("model config vocab_size " + std::to_string(cfg.vocab_size) +
                    " != vocabulary size " + std::to_string(vocab.size()));
    if (geo_classes == 0 || lang_classes == 0)
        throw Error("init_bundle: class counts must be positive");

    ModelBundle<T> m{cfg, std::move(vocab), geo_classes, lang_classes, {}, std::nullopt, {}};
    m.meta.seed = seed;
    Rng rng(seed);
    size_t d = cfg.d_model, ff = cfg.ff_dim(), v = cfg.vocab_size;
    auto& s = m.store;

    s.create("tok_emb", detail::normal_init<T>({v, d}, rng));
    s.create("pos_emb", detail::normal_init<T>({cfg.max_len, d}, rng));
    for (size_t l = 0; l < cfg.n_layers; ++l) {
        std::string p = "enc." + std::to_string(l);
        detail::create_layer_norm(s, p + ".ln1", d);
        for (const char* w : {"wq", "wk", "wv", "wo"})
            s.create(p + ".attn." + w, detail::normal_init<T>({d, d}, rng));
        for (const char* b : {"bq", "bk", "bv", "bo"})
            s.create(p + ".attn." + b, nn::Tensor<T>::zeros({d}));
        detail::create_layer_norm(s, p + ".ln2", d);
        s.create(p + ".ff.w1", detail::normal_init<T>({d, ff}, rng));
        s.create(p + ".ff.b1", nn::Tensor<T>::zeros({ff}));
        s.create(p + ".ff.w2", detail::normal_init<T>({ff, d}, rng));
        s.create(p + ".ff.b2", nn::Tensor<T>::zeros({d}));
    }
    detail::create_layer_norm(s, "enc.final_ln", d);

    // MLM head; the decoder matrix is the token embedding (weight tying),
    // so only the transform and the output bias live here.
    s.create("mlm.w", detail::normal_init<T>({d, d}, rng));
    s.create("mlm.b", nn::Tensor<T>::zeros({d}));
    detail::create_layer_norm(s, "mlm.ln", d);
    s.create("mlm.bias_vocab", nn::Tensor<T>::zeros({v}));

    s.create("geo.w1", detail::normal_init<T>({d, d}, rng));
    s.create("geo.b1", nn::Tensor<T>::zeros({d}));
    s.create("geo.w2", detail::normal_init<T>({d, 2}, rng));
    s.create("geo.b2", nn::Tensor<T>::zeros({2}));

    s.create("geocls.w", detail::normal_init<T>({d, geo_classes}, rng));
    s.create("geocls.b", nn::Tensor<T>::zeros({geo_classes}));
    s.create("langcls.w", detail::normal_init<T>({d, lang_classes}, rng));
    s.create("langcls.b", nn::Tensor<T>::zeros({lang_classes}));

    s.create("uncertainty.eta_mlm", nn::Tensor<T>::zeros({1}));
    s.create("uncertainty.eta_geo", nn::Tensor<T>::zeros({1}));
    return m;
}

/// Documents padded to a common length with [CLS] prepended. Row-major
/// flattening: flat(doc, pos) = doc * seq_len + pos.
struct Batch {
    std::vector<int> ids;
    std::vector<uint8_t> pad;  // 1 where padded
    size_t n_docs = 0;
    size_t seq_len = 0;

    size_t flat(size_t doc, size_t pos) const { return doc * seq_len + pos; }
};

inline Batch make_batch(const std::vector<std::vector<int>>& docs, size_t max_len) {
    if (docs.empty()) throw Error("make_batch: empty batch");
    size_t longest = 0;
    for (const auto& d : docs) longest = std::max(longest, d.size());
    if (longest + 1 > max_len)
        throw Error("make_batch: document length " + std::to_string(longest) +
                    " exceeds max_len " + std::to_string(max_len) + " after [CLS]");
    Batch b;
    b.n_docs = docs.size();
    b.seq_len = longest + 1;
    b.ids.assign(b.n_docs * b.seq_len, text::Vocabulary::kPadId);
    b.pad.assign(b.n_docs * b.seq_len, 1);
    for (size_t i = 0; i < docs.size(); ++i) {
        b.ids[b.flat(i, 0)] = text::Vocabulary::kClsId;
        b.pad[b.flat(i, 0)] = 0;
        for (size_t t = 0; t < docs[i].size(); ++t) {
            b.ids[b.flat(i, t + 1)] = docs[i][t];
            b.pad[b.flat(i, t + 1)] = 0;
        }
    }
    return b;
}

struct ForwardOptions {
    bool train = false;       // enables dropout
    bool trainable = true;    // binds parameters with gradients
    Rng* dropout_rng = nullptr;
};

template <typename T>
struct ForwardResult {
    nn::Var hidden;       // (n_docs * seq_len) x d_model after the final norm
    nn::Bound<T> bound;
    const Batch* batch = nullptr;
};

namespace detail {

template <typename T>
nn::Var dropout(nn::Tape<T>& tape, nn::Var x, double p, Rng* rng) {
    if (p <= 0.0 || !rng) return x;
    nn::Tensor<T> mask = tape.val(x);
    T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (T& v : mask.data) v = rng->uniform() < p ? T(0) : keep_scale;
    return tape.mul(x, tape.input(std::move(mask)));
}

}  // namespace detail

/// Pre-LN transformer encoder over the whole batch. Token positions across
/// documents are flattened into one matrix for the dense projections;
/// attention runs per document with additive masking of padded keys.
template <typename T>
ForwardResult<T> forward(nn::Tape<T>& tape, const ModelBundle<T>& m, const Batch& batch,
                         const ForwardOptions& opts = {}) {
    const EncoderConfig& cfg = m.config;
    if (batch.seq_len > cfg.max_len)
        throw Error("forward: sequence length " + std::to_string(batch.seq_len) +
                    " exceeds max_len " + std::to_string(cfg.max_len));
    if (opts.train && cfg.dropout > 0.0 && !opts.dropout_rng)
        throw Error("forward: training mode with dropout requires an RNG");

    nn::Bound<T> bound(tape, m.store, opts.trainable);
    size_t heads = cfg.n_heads, dh = cfg.head_dim();
    size_t td = batch.seq_len;
    double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<int> pos_ids(batch.ids.size());
    for (size_t i = 0; i < pos_ids.size(); ++i) pos_ids[i] = static_cast<int>(i % td);
    nn::Var x = tape.add(tape.embedding_lookup(bound["tok_emb"], batch.ids),
                         tape.embedding_lookup(bound["pos_emb"], pos_ids));
    if (opts.train) x = detail::dropout(tape, x, cfg.dropout, opts.dropout_rng);

    // Additive key masks, one per document, shared across layers and heads.
    std::vector<nn::Var> key_mask(batch.n_docs);
    for (size_t b = 0; b < batch.n_docs; ++b) {
        nn::Tensor<T> mask = nn::Tensor<T>::zeros({td, td});
        for (size_t j = 0; j < td; ++j)
            if (batch.pad[batch.flat(b, j)])
                for (size_t i = 0; i < td; ++i) mask.data[i * td + j] = T(-1e9);
        key_mask[b] = tape.input(std::move(mask));
    }

    for (size_t l = 0; l < cfg.n_layers; ++l) {
        std::string p = "enc." + std::to_string(l);
        nn::Var h = tape.layer_norm(x, bound[p + ".ln1.g"], bound[p + ".ln1.b"]);
        nn::Var q = tape.add_bias(tape.matmul(h, bound[p + ".attn.wq"]), bound[p + ".attn.bq"]);
        nn::Var k = tape.add_bias(tape.matmul(h, bound[p + ".attn.wk"]), bound[p + ".attn.bk"]);
        nn::Var v = tape.add_bias(tape.matmul(h, bound[p + ".attn.wv"]), bound[p + ".attn.bv"]);

        std::vector<nn::Var> doc_ctx(batch.n_docs);
        for (size_t b = 0; b < batch.n_docs; ++b) {
            nn::Var qd = tape.slice_rows(q, b * td, (b + 1) * td);
            nn::Var kd = tape.slice_rows(k, b * td, (b + 1) * td);
            nn::Var vd = tape.slice_rows(v, b * td, (b + 1) * td);
            std::vector<nn::Var> head_ctx(heads);
            for (size_t hh = 0; hh < heads; ++hh) {
                nn::Var qh = tape.slice_cols(qd, hh * dh, (hh + 1) * dh);
                nn::Var kh = tape.slice_cols(kd, hh * dh, (hh + 1) * dh);
                nn::Var vh = tape.slice_cols(vd, hh * dh, (hh + 1) * dh);
                nn::Var scores = tape.add(tape.scale(tape.matmul(qh, kh, false, true),
                                                     inv_sqrt_dh),
                                          key_mask[b]);
                head_ctx[hh] = tape.matmul(tape.softmax(scores), vh);
            }
            doc_ctx[b] = tape.concat_cols(head_ctx);
        }
        nn::Var ctx = batch.n_docs == 1 ? doc_ctx[0] : tape.concat_rows(doc_ctx);
        nn::Var attn = tape.add_bias(tape.matmul(ctx, bound[p + ".attn.wo"]),
                                     bound[p + ".attn.bo"]);
        if (opts.train) attn = detail::dropout(tape, attn, cfg.dropout, opts.dropout_rng);
        x = tape.add(x, attn);

        nn::Var h2 = tape.layer_norm(x, bound[p + ".ln2.g"], bound[p + ".ln2.b"]);
        nn::Var ff = tape.add_bias(
            tape.matmul(tape.gelu(tape.add_bias(tape.matmul(h2, bound[p + ".ff.w1"]),
                                                bound[p + ".ff.b1"])),
                        bound[p + ".ff.w2"]),
            bound[p + ".ff.b2"]);
        if (opts.train) ff = detail::dropout(tape, ff, cfg.dropout, opts.dropout_rng);
        x = tape.add(x, ff);
    }
    x = tape.layer_norm(x, bound["enc.final_ln.g"], bound["enc.final_ln.b"]);
    return ForwardResult<T>{x, std::move(bound), &batch};
}

/// Vocabulary logits at the given flat positions. The decoder reuses the
/// token embedding matrix, so geolocation gradients flowing into the
/// embeddings reshape these logits as well.
template <typename T>
nn::Var mlm_logits(nn::Tape<T>& tape, const ForwardResult<T>& fwd,
                   const std::vector<size_t>& positions) {
    nn::Var h = tape.gather_rows(fwd.hidden, positions);
    nn::Var t = tape.gelu(tape.add_bias(tape.matmul(h, fwd.bound["mlm.w"]), fwd.bound["mlm.b"]));
    t = tape.layer_norm(t, fwd.bound["mlm.ln.g"], fwd.bound["mlm.ln.b"]);
    return tape.add_bias(tape.matmul(t, fwd.bound["tok_emb"], false, true),
                         fwd.bound["mlm.bias_vocab"]);
}

/// Standardized coordinate predictions at the given flat positions.
template <typename T>
nn::Var geo_predict(nn::Tape<T>& tape, const ForwardResult<T>& fwd,
                    const std::vector<size_t>& positions) {
    nn::Var h = tape.gather_rows(fwd.hidden, positions);
    nn::Var t = tape.gelu(tape.add_bias(tape.matmul(h, fwd.bound["geo.w1"]), fwd.bound["geo.b1"]));
    return tape.add_bias(tape.matmul(t, fwd.bound["geo.w2"]), fwd.bound["geo.b2"]);
}

template <typename T>
std::vector<size_t> cls_positions(const Batch& batch) {
    std::vector<size_t> rows(batch.n_docs);
    for (size_t b = 0; b < batch.n_docs; ++b) rows[b] = batch.flat(b, 0);
    return rows;
}

enum class ClsHead { Geo, Lang };

/// Per-document classification logits from the [CLS] representation.
template <typename T>
nn::Var cls_logits(nn::Tape<T>& tape, const ForwardResult<T>& fwd, ClsHead head) {
    nn::Var h = tape.gather_rows(fwd.hidden, cls_positions<T>(*fwd.batch));
    const char* w = head == ClsHead::Geo ? "geocls.w" : "langcls.w";
    const char* b = head == ClsHead::Geo ? "geocls.b" : "langcls.b";
    return tape.add_bias(tape.matmul(h, fwd.bound[w]), fwd.bound[b]);
}

// ---- evaluation conveniences (no tape surfaced) ----

template <typename T>
nn::Tensor<T> hidden_eval(const ModelBundle<T>& m, const Batch& batch) {
    nn::Tape<T> tape;
    ForwardOptions opts;
    opts.trainable = false;
    ForwardResult<T> fwd = forward(tape, m, batch, opts);
    return tape.val(fwd.hidden);
}

template <typename T>
nn::Tensor<T> mlm_logits_eval(const ModelBundle<T>& m, const Batch& batch,
                              const std::vector<size_t>& positions) {
    nn::Tape<T> tape;
    ForwardOptions opts;
    opts.trainable = false;
    ForwardResult<T> fwd = forward(tape, m, batch, opts);
    return tape.val(mlm_logits(tape, fwd, positions));
}

template <typename T>
nn::Tensor<T> geo_predict_eval(const ModelBundle<T>& m, const Batch& batch,
                               const std::vector<size_t>& positions) {
    nn::Tape<T> tape;
    ForwardOptions opts;
    opts.trainable = false;
    ForwardResult<T> fwd = forward(tape, m, batch, opts);
    return tape.val(geo_predict(tape, fwd, positions));
}

/// Softmax class probabilities from a [CLS] head.
template <typename T>
nn::Tensor<T> cls_probs_eval(const ModelBundle<T>& m, const Batch& batch, ClsHead head) {
    nn::Tape<T> tape;
    ForwardOptions opts;
    opts.trainable = false;
    ForwardResult<T> fwd = forward(tape, m, batch, opts);
    return tape.val(tape.softmax(cls_logits(tape, fwd, head)));
}

}  // namespace geoadapt::model
