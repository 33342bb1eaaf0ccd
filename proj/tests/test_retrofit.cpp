#include <doctest.h>

#include <cmath>
#include <vector>

#include "geoadapt/retrofit.hpp"

using namespace geoadapt;

namespace {

text::Vocabulary tiny_vocab() {
    return text::Vocabulary::from_id_order({text::kPadToken, text::kClsToken, text::kMaskToken,
                                            text::kUnkToken, "alpha", "beta", "delta", "eps",
                                            "gamma", "zeta"});
}

eval::Bundle tiny_bundle(uint64_t seed) {
    model::EncoderConfig cfg;
    cfg.n_layers = 1;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.max_len = 16;
    cfg.dropout = 0.0;
    return model::init_bundle<float>(cfg, tiny_vocab(), 3, 2, seed);
}

}  // namespace

TEST_CASE("cosine similarity") {
    CHECK(retrofit::cosine({1.0, 0.0}, {1.0, 0.0}) == doctest::Approx(1.0));
    CHECK(retrofit::cosine({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0));
    CHECK(retrofit::cosine({1.0, 2.0}, {-1.0, -2.0}) == doctest::Approx(-1.0));
    CHECK(retrofit::cosine({3.0, 4.0}, {4.0, 3.0}) == doctest::Approx(24.0 / 25.0));
    CHECK_THROWS_AS((void)retrofit::cosine({1.0}, {1.0, 2.0}), Error);
    CHECK_THROWS_AS((void)retrofit::cosine({0.0, 0.0}, {1.0, 0.0}), Error);
}

TEST_CASE("pearson correlation") {
    std::vector<double> x = {1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> y = {2.0, 4.0, 6.0, 8.0, 10.0};
    CHECK(retrofit::pearson(x, y) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> z = {10.0, 8.0, 6.0, 4.0, 2.0};
    CHECK(retrofit::pearson(x, z) == doctest::Approx(-1.0).epsilon(1e-12));

    // Hand value: x = {1,2,3}, w = {1,3,2} -> r = 0.5.
    CHECK(retrofit::pearson({1.0, 2.0, 3.0}, {1.0, 3.0, 2.0}) ==
          doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS((void)retrofit::pearson({1.0}, {1.0, 2.0}), Error);
    CHECK_THROWS_AS((void)retrofit::pearson({1.0}, {1.0}), Error);             // n < 2
    CHECK_THROWS_AS((void)retrofit::pearson({1.0, 1.0}, {1.0, 2.0}), Error);   // zero variance
}

TEST_CASE("weat differential association") {
    std::vector<double> w = {1.0, 0.0};
    std::vector<std::vector<double>> a = {{1.0, 0.0}, {1.0, 0.1}};
    std::vector<std::vector<double>> b = {{0.0, 1.0}, {-1.0, 0.0}};

    double mean_a = (retrofit::cosine(w, a[0]) + retrofit::cosine(w, a[1])) / 2.0;
    double mean_b = (retrofit::cosine(w, b[0]) + retrofit::cosine(w, b[1])) / 2.0;
    CHECK(retrofit::weat_association(w, a, b) == doctest::Approx(mean_a - mean_b).epsilon(1e-12));
    CHECK(retrofit::weat_association(w, a, b) > 0.0);
    CHECK(retrofit::weat_association(w, b, a) == doctest::Approx(mean_b - mean_a).epsilon(1e-12));

    CHECK_THROWS_AS((void)retrofit::weat_association(w, {}, b), Error);
    CHECK_THROWS_AS((void)retrofit::weat_association(w, a, {}), Error);
}

TEST_CASE("type embeddings average contextual states") {
    auto m = tiny_bundle(41);
    const auto& vocab = m.vocab;
    int alpha = vocab.id_of("alpha"), beta = vocab.id_of("beta"), zeta = vocab.id_of("zeta");
    std::vector<std::vector<int>> docs = {{alpha, beta, alpha}, {beta, beta}};

    auto embs = retrofit::type_embeddings(m, docs, {alpha, beta, zeta});
    REQUIRE(embs.size() == 3);
    CHECK(embs[0].word == "alpha");
    CHECK(embs[0].occurrences == 2);
    CHECK(embs[1].occurrences == 3);
    CHECK(embs[2].occurrences == 0);
    for (double v : embs[2].vec) CHECK(v == 0.0);

    // Oracle: average the hidden rows directly.
    model::Batch b0 = model::make_batch({docs[0]}, 16);
    model::Batch b1 = model::make_batch({docs[1]}, 16);
    nn::Tensor<float> h0 = model::hidden_eval(m, b0);
    nn::Tensor<float> h1 = model::hidden_eval(m, b1);
    size_t d = m.config.d_model;
    for (size_t c = 0; c < d; ++c) {
        double expect_alpha = (double(h0.at(b0.flat(0, 1), c)) + double(h0.at(b0.flat(0, 3), c))) / 2.0;
        CHECK(embs[0].vec[c] == doctest::Approx(expect_alpha).epsilon(1e-5));
        double expect_beta = (double(h0.at(b0.flat(0, 2), c)) + double(h1.at(b1.flat(0, 1), c)) +
                              double(h1.at(b1.flat(0, 2), c))) /
                             3.0;
        CHECK(embs[1].vec[c] == doctest::Approx(expect_beta).epsilon(1e-5));
    }
}

TEST_CASE("pca recovers a planar configuration") {
    // Points on a plane embedded in 5 dimensions: top-2 components capture
    // everything, and projected pairwise distances match the originals.
    Rng rng(55);
    std::vector<std::array<double, 2>> plane(20);
    for (auto& p : plane) p = {rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0)};

    // Orthonormal pair in 5d.
    std::vector<double> u = {0.5, 0.5, 0.5, 0.5, 0.0};
    std::vector<double> v = {0.5, -0.5, 0.5, -0.5, 0.0};
    std::vector<std::vector<double>> emb(20, std::vector<double>(5, 0.0));
    for (size_t i = 0; i < 20; ++i)
        for (size_t c = 0; c < 5; ++c)
            emb[i][c] = plane[i][0] * u[c] + plane[i][1] * v[c] + 3.0;  // constant offset

    std::vector<std::array<double, 2>> proj = retrofit::pca_2d(emb);
    REQUIRE(proj.size() == 20);
    for (size_t i = 0; i < 20; ++i)
        for (size_t j = i + 1; j < 20; ++j) {
            double orig = std::hypot(plane[i][0] - plane[j][0], plane[i][1] - plane[j][1]);
            double got = std::hypot(proj[i][0] - proj[j][0], proj[i][1] - proj[j][1]);
            CHECK(got == doctest::Approx(orig).epsilon(1e-8));
        }

    // First component carries at least as much variance as the second.
    double var0 = 0.0, var1 = 0.0, m0 = 0.0, m1 = 0.0;
    for (const auto& p : proj) {
        m0 += p[0];
        m1 += p[1];
    }
    m0 /= 20.0;
    m1 /= 20.0;
    for (const auto& p : proj) {
        var0 += (p[0] - m0) * (p[0] - m0);
        var1 += (p[1] - m1) * (p[1] - m1);
    }
    CHECK(var0 >= var1);

    CHECK_THROWS_AS((void)retrofit::pca_2d({}), Error);
    CHECK_THROWS_AS((void)retrofit::pca_2d({{1.0, 2.0}}), Error);  // a single point
}

TEST_CASE("pca sign convention is deterministic") {
    std::vector<std::vector<double>> emb = {
        {1.0, 0.0}, {2.0, 0.1}, {3.0, -0.1}, {4.0, 0.0}, {5.0, 0.05}};
    auto proj = retrofit::pca_2d(emb);
    // Largest-magnitude coordinate of each component is positive, so the
    // dominant axis keeps its natural order.
    double lo = proj[0][0], hi = proj[4][0];
    CHECK(hi > lo);
    // Flipping the input data flips the projection deterministically too.
    auto proj2 = retrofit::pca_2d(emb);
    for (size_t i = 0; i < emb.size(); ++i) {
        CHECK(proj[i][0] == proj2[i][0]);
        CHECK(proj[i][1] == proj2[i][1]);
    }
}

TEST_CASE("procrustes recovers a pure rotation") {
    Rng rng(66);
    std::vector<std::array<double, 2>> src(12);
    for (auto& p : src) p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};

    double theta = 0.7;
    double c = std::cos(theta), s = std::sin(theta);
    std::vector<std::array<double, 2>> dst(12);
    for (size_t i = 0; i < 12; ++i)
        // Row-vector convention: dst = src R with R = [[c, s], [-s, c]],
        // plus a translation that centering must cancel.
        dst[i] = {src[i][0] * c - src[i][1] * s + 5.0, src[i][0] * s + src[i][1] * c - 2.0};

    retrofit::ProcrustesResult r = retrofit::procrustes_2d(src, dst);
    CHECK(r.rmsd == doctest::Approx(0.0).epsilon(1e-9));
    CHECK_FALSE(r.reflection);
    CHECK(r.rotation[0][0] == doctest::Approx(c).epsilon(1e-9));
    CHECK(r.rotation[0][1] == doctest::Approx(s).epsilon(1e-9));
    CHECK(r.rotation[1][0] == doctest::Approx(-s).epsilon(1e-9));

    // Aligned points match the centered target.
    double mx = 0.0, my = 0.0;
    for (const auto& p : dst) {
        mx += p[0];
        my += p[1];
    }
    mx /= 12.0;
    my /= 12.0;
    for (size_t i = 0; i < 12; ++i) {
        CHECK(r.aligned[i][0] == doctest::Approx(dst[i][0] - mx).epsilon(1e-9));
        CHECK(r.aligned[i][1] == doctest::Approx(dst[i][1] - my).epsilon(1e-9));
    }
}

TEST_CASE("procrustes flags reflections") {
    Rng rng(67);
    std::vector<std::array<double, 2>> src(10);
    for (auto& p : src) p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    std::vector<std::array<double, 2>> dst(10);
    for (size_t i = 0; i < 10; ++i) dst[i] = {src[i][0], -src[i][1]};  // mirror

    retrofit::ProcrustesResult r = retrofit::procrustes_2d(src, dst);
    CHECK(r.reflection);
    CHECK(r.rmsd == doctest::Approx(0.0).epsilon(1e-9));

    CHECK_THROWS_AS((void)retrofit::procrustes_2d(src, std::vector<std::array<double, 2>>{}),
                    Error);
    CHECK_THROWS_AS((void)retrofit::procrustes_2d({{1.0, 1.0}}, {{1.0, 1.0}}), Error);
}

TEST_CASE("geo embedding correlation on a constructed geometry") {
    // Cities on a small circle; embeddings placed on a matching circle in
    // 3d so that cosine distance grows with geodesic distance.
    const size_t n = 10;
    std::vector<cluster::GeoPoint> locs(n);
    std::vector<std::vector<double>> embs(n, std::vector<double>(3, 0.0));
    for (size_t i = 0; i < n; ++i) {
        double phi = 2.0 * M_PI * double(i) / double(n);
        // Cluster around lon 10, lat 50 with a 2-degree ring.
        locs[i] = {10.0 + 2.0 * std::cos(phi), 50.0 + 2.0 * std::sin(phi)};
        // Unit vectors on a cone: angle between embeddings increases with
        // ring separation.
        embs[i] = {std::cos(phi), std::sin(phi), 2.0};
    }
    double r = retrofit::geo_embedding_correlation(embs, locs);
    CHECK(r > 0.9);

    // Shuffled locations destroy the relationship.
    std::vector<cluster::GeoPoint> shuffled = locs;
    Rng rng(5);
    rng.shuffle(shuffled);
    double r2 = retrofit::geo_embedding_correlation(embs, shuffled);
    CHECK(r2 < r);

    std::vector<cluster::GeoPoint> short_locs(locs.begin(), locs.begin() + 3);
    CHECK_THROWS_AS((void)retrofit::geo_embedding_correlation(embs, short_locs), Error);
    std::vector<std::vector<double>> two(embs.begin(), embs.begin() + 2);
    std::vector<cluster::GeoPoint> two_locs(locs.begin(), locs.begin() + 2);
    CHECK_THROWS_AS((void)retrofit::geo_embedding_correlation(two, two_locs), Error);
}
