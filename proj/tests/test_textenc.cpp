#include <doctest.h>

#include <algorithm>

#include "geoadapt/textenc.hpp"

using namespace geoadapt;
using text::Vocabulary;

TEST_CASE("vocabulary reserves the special ids") {
    Vocabulary v = Vocabulary::from_content_tokens({"banana", "apple", "cherry"});
    CHECK(v.size() == 3 + Vocabulary::kNumSpecials);
    CHECK(v.id_of(text::kPadToken) == Vocabulary::kPadId);
    CHECK(v.id_of(text::kClsToken) == Vocabulary::kClsId);
    CHECK(v.id_of(text::kMaskToken) == Vocabulary::kMaskId);
    CHECK(v.id_of(text::kUnkToken) == Vocabulary::kUnkId);
    // Content tokens are sorted lexicographically after the specials.
    CHECK(v.token_of(Vocabulary::kNumSpecials) == "apple");
    CHECK(v.token_of(Vocabulary::kNumSpecials + 1) == "banana");
    CHECK(v.token_of(Vocabulary::kNumSpecials + 2) == "cherry");
}

TEST_CASE("id lookups round-trip and fall back to [UNK]") {
    Vocabulary v = Vocabulary::from_content_tokens({"x", "y"});
    for (int id = 0; id < static_cast<int>(v.size()); ++id)
        CHECK(v.id_of(v.token_of(id)) == id);
    CHECK(v.id_of("unseen") == Vocabulary::kUnkId);
    CHECK_THROWS_AS((void)v.token_of(-1), Error);
    CHECK_THROWS_AS((void)v.token_of(static_cast<int>(v.size())), Error);
}

TEST_CASE("duplicate content tokens are collapsed") {
    Vocabulary v = Vocabulary::from_content_tokens({"b", "a", "b", "a"});
    CHECK(v.size() == 2 + Vocabulary::kNumSpecials);
}

TEST_CASE("from_id_order validates its input") {
    std::vector<std::string> good{text::kPadToken, text::kClsToken, text::kMaskToken,
                                  text::kUnkToken, "alpha", "beta"};
    Vocabulary v = Vocabulary::from_id_order(good);
    CHECK(v.token_of(4) == "alpha");

    std::vector<std::string> swapped = good;
    std::swap(swapped[0], swapped[1]);
    CHECK_THROWS_AS((void)Vocabulary::from_id_order(swapped), Error);

    std::vector<std::string> dup = good;
    dup.push_back("alpha");
    CHECK_THROWS_AS((void)Vocabulary::from_id_order(dup), Error);

    CHECK_THROWS_AS((void)Vocabulary::from_id_order({text::kPadToken}), Error);
}

TEST_CASE("vocabulary JSON round-trip preserves ids") {
    world::WorldSpec w = world::default_world();
    Vocabulary v = text::build_vocab(w);
    Vocabulary back = Vocabulary::from_json(v.to_json());
    REQUIRE(back.size() == v.size());
    for (int id = 0; id < static_cast<int>(v.size()); ++id)
        CHECK(back.token_of(id) == v.token_of(id));
    CHECK_THROWS_AS((void)Vocabulary::from_json("{\"nope\":1}"), Error);
}

TEST_CASE("world vocabulary covers every emittable surface form") {
    world::WorldSpec w = world::default_world();
    Vocabulary v = text::build_vocab(w);
    for (const auto& c : w.cities) CHECK(v.id_of(c.name) != Vocabulary::kUnkId);
    for (const auto& r : w.regions) CHECK(v.id_of(r) != Vocabulary::kUnkId);
    for (const auto& p : w.variant_pairs) {
        CHECK(v.id_of(p.form_a) != Vocabulary::kUnkId);
        CHECK(v.id_of(p.form_b) != Vocabulary::kUnkId);
    }
    // Generated corpora never hit [UNK].
    auto corpus = world::generate_corpus(w, 300, 6);
    auto ids = text::encode_corpus(corpus, v);
    REQUIRE(ids.size() == corpus.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        REQUIRE(ids[i].size() == corpus[i].tokens.size());
        for (size_t t = 0; t < ids[i].size(); ++t) {
            CHECK(ids[i][t] != Vocabulary::kUnkId);
            CHECK(ids[i][t] >= Vocabulary::kNumSpecials);
            CHECK(v.token_of(ids[i][t]) == corpus[i].tokens[t]);
        }
    }
}

TEST_CASE("encode and decode are inverse on known tokens") {
    Vocabulary v = Vocabulary::from_content_tokens({"north", "south", "river"});
    std::vector<std::string> tokens{"river", "north", "mystery", "south"};
    std::vector<int> ids = text::encode(tokens, v);
    REQUIRE(ids.size() == 4);
    CHECK(ids[2] == Vocabulary::kUnkId);
    std::vector<std::string> back = text::decode(ids, v);
    CHECK(back[0] == "river");
    CHECK(back[2] == text::kUnkToken);
}
