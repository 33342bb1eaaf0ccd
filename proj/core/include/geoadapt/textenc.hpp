#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "geoadapt/common.hpp"
#include "geoadapt/geoworld.hpp"

namespace geoadapt::text {

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kMaskToken = "[MASK]";
inline constexpr const char* kUnkToken = "[UNK]";

/// Closed token inventory with fixed special ids: [PAD]=0, [CLS]=1,
/// [MASK]=2, [UNK]=3, followed by content tokens in lexicographic order.
class Vocabulary {
public:
    static constexpr int kPadId = 0;
    static constexpr int kClsId = 1;
    static constexpr int kMaskId = 2;
    static constexpr int kUnkId = 3;
    static constexpr int kNumSpecials = 4;

    /// Builds from content tokens; sorts, rejects duplicates and any token
    /// that collides with a special.
    static Vocabulary from_content_tokens(std::vector<std::string> tokens);

    /// Restores an exact id order, e.g. from a checkpoint; validates
    /// specials occupy ids 0..3 and there are no duplicates.
    static Vocabulary from_id_order(std::vector<std::string> tokens);

    size_t size() const { return id_to_token_.size(); }
    int id_of(const std::string& token) const;        // [UNK] id if absent
    bool contains(const std::string& token) const;
    const std::string& token_of(int id) const;        // throws on bad id

    const std::vector<std::string>& tokens() const { return id_to_token_; }

    std::string to_json() const;
    static Vocabulary from_json(const std::string& text);

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

/// All surface forms of a world as a vocabulary; content ids are stable
/// across runs because the order is lexicographic.
Vocabulary build_vocab(const world::WorldSpec& spec);

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab);
std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab);

/// Encodes every document's token list (no [CLS]; batching adds it).
std::vector<std::vector<int>> encode_corpus(const std::vector<world::GeoDocument>& docs,
                                            const Vocabulary& vocab);

}  // namespace geoadapt::text
