#include "geoadapt/textenc.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace geoadapt::text {

using nlohmann::json;

namespace {

const char* kSpecials[] = {kPadToken, kClsToken, kMaskToken, kUnkToken};

}  // namespace

Vocabulary Vocabulary::from_content_tokens(std::vector<std::string> tokens) {
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    std::vector<std::string> order(std::begin(kSpecials), std::end(kSpecials));
    order.insert(order.end(), tokens.begin(), tokens.end());
    return from_id_order(std::move(order));
}

Vocabulary Vocabulary::from_id_order(std::vector<std::string> tokens) {
    if (tokens.size() < kNumSpecials)
        throw Error("vocabulary must contain the four special tokens");
    for (int i = 0; i < kNumSpecials; ++i)
        if (tokens[static_cast<size_t>(i)] != kSpecials[i])
            throw Error(std::string("vocabulary id ") + std::to_string(i) + " must be " +
                        kSpecials[i] + ", got '" + tokens[static_cast<size_t>(i)] + "'");
    Vocabulary v;
    v.id_to_token_ = std::move(tokens);
    v.token_to_id_.reserve(v.id_to_token_.size());
    for (size_t i = 0; i < v.id_to_token_.size(); ++i) {
        auto [it, inserted] = v.token_to_id_.emplace(v.id_to_token_[i], static_cast<int>(i));
        if (!inserted) throw Error("duplicate token '" + v.id_to_token_[i] + "' in vocabulary");
    }
    return v;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
    return token_to_id_.count(token) != 0;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= id_to_token_.size())
        throw Error("token id " + std::to_string(id) + " out of range (vocab size " +
                    std::to_string(id_to_token_.size()) + ")");
    return id_to_token_[static_cast<size_t>(id)];
}

std::string Vocabulary::to_json() const { return json(id_to_token_).dump(); }

Vocabulary Vocabulary::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_array()) throw Error("vocabulary JSON must be an array");
    return from_id_order(j.get<std::vector<std::string>>());
}

Vocabulary build_vocab(const world::WorldSpec& spec) {
    return Vocabulary::from_content_tokens(world::all_world_tokens(spec));
}

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(vocab.id_of(t));
    return ids;
}

std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (int id : ids) tokens.push_back(vocab.token_of(id));
    return tokens;
}

std::vector<std::vector<int>> encode_corpus(const std::vector<world::GeoDocument>& docs,
                                            const Vocabulary& vocab) {
    std::vector<std::vector<int>> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back(encode(d.tokens, vocab));
    return out;
}

}  // namespace geoadapt::text
