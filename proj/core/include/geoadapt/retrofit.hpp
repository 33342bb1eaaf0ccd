#pragma once

#include <array>
#include <string>
#include <vector>

#include "geoadapt/evalharness.hpp"
#include "geoadapt/geocluster.hpp"
#include "geoadapt/model.hpp"

namespace geoadapt::retrofit {

/// Type-level embedding: mean of a token's contextual representations over
/// every occurrence in a reference corpus.
struct TypeEmbedding {
    std::string word;
    std::vector<double> vec;
    size_t occurrences = 0;
};

/// One encoder pass per document; words without occurrences come back with
/// occurrences == 0 and a zero vector.
std::vector<TypeEmbedding> type_embeddings(const eval::Bundle& m,
                                           const std::vector<std::vector<int>>& docs,
                                           const std::vector<int>& word_ids,
                                           size_t eval_batch = 64);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// WEAT differential association: mean cosine to attribute set A minus mean
/// cosine to attribute set B.
double weat_association(const std::vector<double>& w,
                        const std::vector<std::vector<double>>& set_a,
                        const std::vector<std::vector<double>>& set_b);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Pearson correlation between pairwise geodesic distances and pairwise
/// cosine distances (1 - cos) over all unordered pairs.
double geo_embedding_correlation(const std::vector<std::vector<double>>& embeddings,
                                 const std::vector<cluster::GeoPoint>& locations);

/// Projection onto the top-2 principal components (covariance eigenvectors,
/// descending eigenvalue). Deterministic sign: each component's largest-
/// magnitude coordinate is positive.
std::vector<std::array<double, 2>> pca_2d(const std::vector<std::vector<double>>& embeddings);

struct ProcrustesResult {
    std::array<std::array<double, 2>, 2> rotation{};  // applied as row-vector times matrix
    double rmsd = 0.0;
    bool reflection = false;
    std::vector<std::array<double, 2>> aligned;  // centered source after rotation
};

/// Orthogonal Procrustes: the orthogonal matrix (reflections allowed, no
/// scaling) minimizing ||centered(source) Q - centered(target)||_F.
ProcrustesResult procrustes_2d(const std::vector<std::array<double, 2>>& source,
                               const std::vector<std::array<double, 2>>& target);

}  // namespace geoadapt::retrofit
