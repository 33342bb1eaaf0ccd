#include <doctest.h>

#include <cmath>
#include <vector>

#include "geoadapt/adapt.hpp"
#include "geoadapt/common.hpp"

using namespace geoadapt;

namespace {

text::Vocabulary tiny_vocab() {
    return text::Vocabulary::from_id_order({text::kPadToken, text::kClsToken, text::kMaskToken,
                                            text::kUnkToken, "alpha", "beta", "delta", "eps",
                                            "gamma", "zeta"});
}

model::ModelBundle<double> tiny_bundle(uint64_t seed) {
    model::EncoderConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.max_len = 16;
    cfg.dropout = 0.0;
    return model::init_bundle<double>(cfg, tiny_vocab(), 3, 2, seed);
}

std::vector<std::vector<int>> random_docs(size_t n, size_t len, uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<int>> docs(n, std::vector<int>(len));
    for (auto& d : docs)
        for (int& t : d) t = text::Vocabulary::kNumSpecials + int(rng.uniform_int(6));
    return docs;
}

}  // namespace

TEST_CASE("regime names round-trip") {
    using adapt::Regime;
    for (Regime r : {Regime::MlmAda, Regime::GeoAdaS, Regime::GeoAdaW, Regime::GeoAdaSeq})
        CHECK(adapt::parse_regime(adapt::regime_name(r)) == r);
    CHECK(adapt::parse_regime("mlm") == Regime::MlmAda);
    CHECK(adapt::parse_regime("geo-w") == Regime::GeoAdaW);
    CHECK_THROWS_AS(adapt::parse_regime("geo"), Error);
    CHECK_THROWS_AS(adapt::parse_regime(""), Error);
    CHECK_FALSE(adapt::regime_uses_geo(Regime::MlmAda));
    CHECK(adapt::regime_uses_geo(Regime::GeoAdaSeq));
}

TEST_CASE("log-variance and sigma forms of the uncertainty term agree") {
    Rng rng(123);
    for (int i = 0; i < 100; ++i) {
        double sigma = std::exp(rng.uniform(-2.0, 2.0));
        double loss = std::exp(rng.uniform(-3.0, 3.0));
        double eta = 2.0 * std::log(sigma);
        CHECK(std::abs(adapt::uncertainty_term(loss, eta) -
                       adapt::uncertainty_term_sigma(loss, sigma)) < 1e-10);
    }
    CHECK_THROWS_AS((void)adapt::uncertainty_term_sigma(1.0, 0.0), Error);
    CHECK_THROWS_AS((void)adapt::uncertainty_term_sigma(1.0, -2.0), Error);
    CHECK(adapt::composite_sum(1.5, 2.25) == 3.75);
    CHECK(adapt::composite_uncertainty(1.0, 2.0, 0.0, 0.0) ==
          doctest::Approx(0.5 * (1.0 + 0.0) + 0.5 * (2.0 + 0.0)).epsilon(1e-15));
}

TEST_CASE("uncertainty term is stationary at eta = log(loss)") {
    // Gradient descent on eta alone for a fixed loss.
    const double fixed_loss = 2.0;
    nn::ParameterStore<double> store;
    store.create("eta", nn::Tensor<double>::scalar(0.0));
    for (int it = 0; it < 400; ++it) {
        nn::Tape<double> tape;
        nn::Bound<double> v(tape, store);
        nn::Var term = adapt::uncertainty_term(tape, tape.input(nn::Tensor<double>::scalar(fixed_loss)),
                                               v["eta"]);
        tape.backward(term);
        v.harvest_grads(store);
        auto& p = store.at("eta");
        p.value.data[0] -= 0.5 * p.grad.data[0];
    }
    CHECK(store.at("eta").value.data[0] == doctest::Approx(std::log(fixed_loss)).epsilon(1e-4));
}

TEST_CASE("mask policy validation") {
    adapt::MaskPolicy p;
    CHECK_NOTHROW(p.validate());
    p.ratio = 0.0;
    CHECK_THROWS_AS(p.validate(), Error);
    p.ratio = 1.5;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.p_mask = 0.95;
    p.p_random = 0.1;  // sums past 1
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.p_random = -0.1;
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("mask_batch structure and determinism") {
    auto vocab = tiny_vocab();
    auto docs = random_docs(6, 9, 50);

    adapt::MaskedBatch a = adapt::mask_batch(docs, vocab, 0.15, 99);
    adapt::MaskedBatch b = adapt::mask_batch(docs, vocab, 0.15, 99);
    adapt::MaskedBatch c = adapt::mask_batch(docs, vocab, 0.15, 100);
    CHECK(a.batch.ids == b.batch.ids);
    CHECK(a.positions == b.positions);
    CHECK(a.original_ids == b.original_ids);
    CHECK(a.batch.ids != c.batch.ids);

    CHECK(a.batch.seq_len == 10);  // longest + 1 for [CLS]
    REQUIRE(a.positions.size() == a.original_ids.size());
    REQUIRE(a.positions.size() == a.position_doc.size());

    std::vector<size_t> per_doc(docs.size(), 0);
    for (size_t i = 0; i < a.positions.size(); ++i) {
        size_t flat = a.positions[i];
        size_t doc = flat / a.batch.seq_len;
        size_t pos = flat % a.batch.seq_len;
        CHECK(doc == a.position_doc[i]);
        CHECK(pos >= 1);  // [CLS] is never masked
        CHECK(pos <= docs[doc].size());
        CHECK(a.original_ids[i] == docs[doc][pos - 1]);
        if (i > 0) CHECK(a.positions[i] > a.positions[i - 1]);
        per_doc[doc]++;
    }
    for (size_t n : per_doc) CHECK(n >= 1);  // redraw guarantees a mask per doc

    CHECK_THROWS_AS((void)adapt::mask_batch({{4, 5}, {}}, vocab, 0.15, 1), Error);
}

TEST_CASE("mask_batch corruption statistics") {
    auto vocab = tiny_vocab();
    const size_t n_docs = 2000, len = 12;
    auto docs = random_docs(n_docs, len, 77);
    adapt::MaskedBatch mb = adapt::mask_batch(docs, vocab, 0.15, 7);

    // Redraw-until-nonempty selection: expected fraction is
    // p / (1 - (1-p)^n), not the raw ratio.
    double expect_frac = 0.15 / (1.0 - std::pow(0.85, double(len)));
    double got_frac = double(mb.positions.size()) / double(n_docs * len);
    CHECK(got_frac == doctest::Approx(expect_frac).epsilon(0.06));

    size_t n_masked = 0, n_same = 0, n_other = 0;
    for (size_t i = 0; i < mb.positions.size(); ++i) {
        int id = mb.batch.ids[mb.positions[i]];
        if (id == text::Vocabulary::kMaskId)
            n_masked++;
        else if (id == mb.original_ids[i])
            n_same++;
        else
            n_other++;
    }
    double n = double(mb.positions.size());
    CHECK(n_masked / n == doctest::Approx(0.8).epsilon(0.03));
    // Random replacement samples uniformly over the 6 content tokens, so it
    // hits the original 1/6 of the time.
    CHECK(n_other / n == doctest::Approx(0.1 * (1.0 - 1.0 / 6.0)).epsilon(0.25));
    CHECK(n_same / n == doctest::Approx(0.1 + 0.1 / 6.0).epsilon(0.25));
}

TEST_CASE("loss graphs compose per regime") {
    auto bundle = tiny_bundle(21);
    bundle.store.at("uncertainty.eta_mlm").value.data[0] = 0.3;
    bundle.store.at("uncertainty.eta_geo").value.data[0] = -0.2;

    auto docs = random_docs(4, 7, 5);
    adapt::MaskedBatch mb = adapt::mask_batch(docs, bundle.vocab, 0.2, 31);
    std::vector<std::array<double, 2>> geo = {{0.1, -0.2}, {1.0, 0.5}, {-0.3, 0.8}, {0.0, 0.0}};
    model::ForwardOptions opts;

    nn::Tape<double> t1;
    auto mlm_only = adapt::build_losses(t1, bundle, mb, adapt::Regime::MlmAda, {}, opts);
    CHECK_FALSE(mlm_only.geo.has_value());
    CHECK(t1.val(mlm_only.total).data[0] == t1.val(*mlm_only.mlm).data[0]);

    nn::Tape<double> t2;
    auto sum = adapt::build_losses(t2, bundle, mb, adapt::Regime::GeoAdaS, geo, opts);
    REQUIRE(sum.geo.has_value());
    double l_mlm = t2.val(*sum.mlm).data[0];
    double l_geo = t2.val(*sum.geo).data[0];
    CHECK(t2.val(sum.total).data[0] ==
          doctest::Approx(adapt::composite_sum(l_mlm, l_geo)).epsilon(1e-12));

    nn::Tape<double> t3;
    auto unc = adapt::build_losses(t3, bundle, mb, adapt::Regime::GeoAdaW, geo, opts);
    double u_mlm = t3.val(*unc.mlm).data[0];
    double u_geo = t3.val(*unc.geo).data[0];
    CHECK(t3.val(unc.total).data[0] ==
          doctest::Approx(adapt::composite_uncertainty(u_mlm, u_geo, 0.3, -0.2)).epsilon(1e-12));
    // Same forward pass, so the raw task losses agree across regimes.
    CHECK(u_mlm == doctest::Approx(l_mlm).epsilon(1e-12));
    CHECK(u_geo == doctest::Approx(l_geo).epsilon(1e-12));

    // Sequence-level supervision averages |pred - target| over [CLS] rows,
    // token-level over the undrawn content rows; distinct rows, distinct
    // losses.
    nn::Tape<double> t4;
    auto seq = adapt::build_losses(t4, bundle, mb, adapt::Regime::GeoAdaSeq, geo, opts);
    REQUIRE(seq.geo.has_value());
    double s_geo = t4.val(*seq.geo).data[0];
    CHECK(s_geo != doctest::Approx(l_geo).epsilon(1e-9));
    CHECK(t4.val(seq.total).data[0] ==
          doctest::Approx(adapt::composite_uncertainty(t4.val(*seq.mlm).data[0], s_geo, 0.3,
                                                       -0.2))
              .epsilon(1e-12));

    nn::Tape<double> t5;
    CHECK_THROWS_AS(
        (void)adapt::build_losses(t5, bundle, mb, adapt::Regime::GeoAdaW, {{0.0, 0.0}}, opts),
        Error);
}

TEST_CASE("training decreases the loss and moves the right parameters") {
    model::EncoderConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.max_len = 16;
    cfg.dropout = 0.0;
    auto docs = random_docs(24, 8, 13);
    Rng grng(14);
    std::vector<std::array<double, 2>> geotags(docs.size());
    for (auto& g : geotags) g = {grng.uniform(5.0, 15.0), grng.uniform(45.0, 55.0)};

    adapt::AdaptConfig ac;
    ac.epochs = 8;
    ac.batch_size = 8;
    ac.lr = 5e-3;
    ac.seed = 3;

    SUBCASE("mlm-only leaves geolocation machinery untouched") {
        auto m = model::init_bundle<float>(cfg, tiny_vocab(), 3, 2, 1);
        ac.regime = adapt::Regime::MlmAda;
        auto curve = adapt::train_adapt(m, docs, {}, ac);
        REQUIRE(curve.size() == 8);
        CHECK(curve.front().l_mlm > curve.back().l_mlm);
        for (const auto& e : curve) {
            CHECK(std::isnan(e.l_geo));
            CHECK(e.eta_mlm == 0.0);
            CHECK(e.eta_geo == 0.0);
        }
        CHECK_FALSE(m.geo_stats.has_value());
        CHECK(m.meta.regime == "mlm");
        CHECK(m.meta.epoch == 8);
    }

    SUBCASE("plain sum trains geo but freezes the uncertainty weights") {
        auto m = model::init_bundle<float>(cfg, tiny_vocab(), 3, 2, 1);
        ac.regime = adapt::Regime::GeoAdaS;
        auto curve = adapt::train_adapt(m, docs, geotags, ac);
        CHECK(curve.front().l_total > curve.back().l_total);
        CHECK_FALSE(std::isnan(curve.back().l_geo));
        CHECK(m.store.at("uncertainty.eta_mlm").value.data[0] == 0.0f);
        CHECK(m.store.at("uncertainty.eta_geo").value.data[0] == 0.0f);
        CHECK(m.geo_stats.has_value());
        CHECK(m.meta.regime == "geo-s");
    }

    SUBCASE("uncertainty weighting learns the etas") {
        auto m = model::init_bundle<float>(cfg, tiny_vocab(), 3, 2, 1);
        ac.regime = adapt::Regime::GeoAdaW;
        auto curve = adapt::train_adapt(m, docs, geotags, ac);
        CHECK(curve.front().l_total > curve.back().l_total);
        CHECK(m.store.at("uncertainty.eta_mlm").value.data[0] != 0.0f);
        CHECK(m.store.at("uncertainty.eta_geo").value.data[0] != 0.0f);
        CHECK(curve.back().eta_mlm ==
              doctest::Approx(double(m.store.at("uncertainty.eta_mlm").value.data[0])));
        CHECK(m.meta.regime == "geo-w");

        // Reproducible: same config, same inputs, same curve.
        auto m2 = model::init_bundle<float>(cfg, tiny_vocab(), 3, 2, 1);
        auto curve2 = adapt::train_adapt(m2, docs, geotags, ac);
        CHECK(curve2.back().l_total == curve.back().l_total);
    }

    SUBCASE("epoch callback fires in order") {
        auto m = model::init_bundle<float>(cfg, tiny_vocab(), 3, 2, 1);
        ac.regime = adapt::Regime::MlmAda;
        ac.epochs = 3;
        std::vector<size_t> seen;
        ac.on_epoch = [&](size_t epoch, const model::ModelBundle<float>& snap) {
            seen.push_back(epoch);
            CHECK(snap.meta.epoch == epoch + 1);
        };
        adapt::train_adapt(m, docs, {}, ac);
        CHECK(seen == std::vector<size_t>{0, 1, 2});
    }

    SUBCASE("geotag mismatch is rejected for geo regimes") {
        auto m = model::init_bundle<float>(cfg, tiny_vocab(), 3, 2, 1);
        ac.regime = adapt::Regime::GeoAdaW;
        CHECK_THROWS_AS((void)adapt::train_adapt(m, docs, {}, ac), Error);
        ac.regime = adapt::Regime::MlmAda;
        CHECK_NOTHROW((void)adapt::train_adapt(m, docs, {}, ac));
    }
}

TEST_CASE("loss curves round-trip through CSV") {
    std::vector<adapt::EpochLoss> curve(3);
    curve[0] = {0, 5.5, std::numeric_limits<double>::quiet_NaN(), 5.5, 0.0, 0.0};
    curve[1] = {1, 4.25, 1.125, 5.375, 0.125, -0.25};
    curve[2] = {2, 3.0, 0.75, 3.75, 0.5, -0.5};

    std::string csv = adapt::curve_to_csv(curve);
    CHECK(csv.rfind("epoch,l_mlm,l_geo,l_total,eta_mlm,eta_geo\n", 0) == 0);

    auto back = adapt::curve_from_csv(csv);
    REQUIRE(back.size() == 3);
    CHECK(back[0].epoch == 0);
    CHECK(std::isnan(back[0].l_geo));
    CHECK(back[1].l_geo == doctest::Approx(1.125).epsilon(1e-12));
    CHECK(back[2].eta_geo == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(back[2].l_total == doctest::Approx(3.75).epsilon(1e-12));

    CHECK_THROWS_AS((void)adapt::curve_from_csv("bogus\n1,2,3\n"), Error);
}
