#include "geoadapt/retrofit.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace geoadapt::retrofit {

std::vector<TypeEmbedding> type_embeddings(const eval::Bundle& m,
                                           const std::vector<std::vector<int>>& docs,
                                           const std::vector<int>& word_ids,
                                           size_t eval_batch) {
    std::unordered_map<int, size_t> slot;
    for (size_t i = 0; i < word_ids.size(); ++i) {
        if (!slot.emplace(word_ids[i], i).second)
            throw Error("type_embeddings: duplicate word id " + std::to_string(word_ids[i]));
    }
    size_t d = m.config.d_model;
    std::vector<TypeEmbedding> out(word_ids.size());
    for (size_t i = 0; i < word_ids.size(); ++i) {
        out[i].word = m.vocab.token_of(word_ids[i]);
        out[i].vec.assign(d, 0.0);
    }

    for (size_t start = 0; start < docs.size(); start += eval_batch) {
        size_t end = std::min(docs.size(), start + eval_batch);
        std::vector<std::vector<int>> chunk(docs.begin() + static_cast<ptrdiff_t>(start),
                                            docs.begin() + static_cast<ptrdiff_t>(end));
        model::Batch batch = model::make_batch(chunk, m.config.max_len);
        nn::Tensor<float> hidden = model::hidden_eval(m, batch);
        for (size_t b = 0; b < chunk.size(); ++b) {
            for (size_t t = 0; t < chunk[b].size(); ++t) {
                auto it = slot.find(chunk[b][t]);
                if (it == slot.end()) continue;
                const float* row = hidden.data.data() + batch.flat(b, t + 1) * d;
                TypeEmbedding& e = out[it->second];
                for (size_t j = 0; j < d; ++j) e.vec[j] += static_cast<double>(row[j]);
                ++e.occurrences;
            }
        }
    }
    for (auto& e : out)
        if (e.occurrences)
            for (double& v : e.vec) v /= static_cast<double>(e.occurrences);
    return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw Error("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error("cosine: zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double weat_association(const std::vector<double>& w,
                        const std::vector<std::vector<double>>& set_a,
                        const std::vector<std::vector<double>>& set_b) {
    if (set_a.empty() || set_b.empty()) throw Error("weat_association: empty attribute set");
    double mean_a = 0.0, mean_b = 0.0;
    for (const auto& a : set_a) mean_a += cosine(w, a);
    for (const auto& b : set_b) mean_b += cosine(w, b);
    return mean_a / static_cast<double>(set_a.size()) - mean_b / static_cast<double>(set_b.size());
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error("pearson: length mismatch");
    size_t n = x.size();
    if (n < 2) throw Error("pearson: need at least two points");
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error("pearson: zero variance");
    return sxy / std::sqrt(sxx * syy);
}

double geo_embedding_correlation(const std::vector<std::vector<double>>& embeddings,
                                 const std::vector<cluster::GeoPoint>& locations) {
    if (embeddings.size() != locations.size())
        throw Error("geo_embedding_correlation: size mismatch");
    if (embeddings.size() < 3)
        throw Error("geo_embedding_correlation: need at least three points");
    std::vector<double> geo, emb;
    for (size_t i = 0; i < embeddings.size(); ++i)
        for (size_t j = i + 1; j < embeddings.size(); ++j) {
            geo.push_back(cluster::geodesic_km(locations[i], locations[j]));
            emb.push_back(1.0 - cosine(embeddings[i], embeddings[j]));
        }
    return pearson(geo, emb);
}

namespace {

/// Jacobi eigendecomposition of a symmetric matrix; returns eigenvalues
/// descending with matching eigenvector columns.
void jacobi_eigen(std::vector<std::vector<double>> a, std::vector<double>& values,
                  std::vector<std::vector<double>>& vectors) {
    size_t n = a.size();
    vectors.assign(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) vectors[i][i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (size_t p = 0; p < n; ++p)
            for (size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-24) break;
        for (size_t p = 0; p < n; ++p)
            for (size_t q = p + 1; q < n; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (size_t k = 0; k < n; ++k) {
                    double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (size_t k = 0; k < n; ++k) {
                    double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (size_t k = 0; k < n; ++k) {
                    double vkp = vectors[k][p], vkq = vectors[k][q];
                    vectors[k][p] = c * vkp - s * vkq;
                    vectors[k][q] = s * vkp + c * vkq;
                }
            }
    }
    values.resize(n);
    for (size_t i = 0; i < n; ++i) values[i] = a[i][i];
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t x, size_t y) { return values[x] > values[y]; });
    std::vector<double> sorted_values(n);
    std::vector<std::vector<double>> sorted_vectors(n, std::vector<double>(n));
    for (size_t i = 0; i < n; ++i) {
        sorted_values[i] = values[order[i]];
        for (size_t k = 0; k < n; ++k) sorted_vectors[k][i] = vectors[k][order[i]];
    }
    values = std::move(sorted_values);
    vectors = std::move(sorted_vectors);
}

}  // namespace

std::vector<std::array<double, 2>> pca_2d(const std::vector<std::vector<double>>& embeddings) {
    if (embeddings.size() < 2) throw Error("pca_2d: need at least two points");
    size_t n = embeddings.size(), d = embeddings[0].size();
    if (d < 2) throw Error("pca_2d: need at least two dimensions");
    for (const auto& e : embeddings)
        if (e.size() != d) throw Error("pca_2d: ragged input");

    std::vector<double> mean(d, 0.0);
    for (const auto& e : embeddings)
        for (size_t j = 0; j < d; ++j) mean[j] += e[j];
    for (double& v : mean) v /= static_cast<double>(n);

    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0.0));
    for (const auto& e : embeddings)
        for (size_t i = 0; i < d; ++i) {
            double di = e[i] - mean[i];
            for (size_t j = i; j < d; ++j) cov[i][j] += di * (e[j] - mean[j]);
        }
    for (size_t i = 0; i < d; ++i)
        for (size_t j = i; j < d; ++j) {
            cov[i][j] /= static_cast<double>(n);
            cov[j][i] = cov[i][j];
        }

    std::vector<double> values;
    std::vector<std::vector<double>> vectors;
    jacobi_eigen(cov, values, vectors);

    // Sign convention for reproducible plots.
    for (size_t comp = 0; comp < 2; ++comp) {
        size_t arg = 0;
        for (size_t k = 1; k < d; ++k)
            if (std::abs(vectors[k][comp]) > std::abs(vectors[arg][comp])) arg = k;
        if (vectors[arg][comp] < 0.0)
            for (size_t k = 0; k < d; ++k) vectors[k][comp] = -vectors[k][comp];
    }

    std::vector<std::array<double, 2>> out(n);
    for (size_t i = 0; i < n; ++i)
        for (size_t comp = 0; comp < 2; ++comp) {
            double acc = 0.0;
            for (size_t k = 0; k < d; ++k) acc += (embeddings[i][k] - mean[k]) * vectors[k][comp];
            out[i][comp] = acc;
        }
    return out;
}

ProcrustesResult procrustes_2d(const std::vector<std::array<double, 2>>& source,
                               const std::vector<std::array<double, 2>>& target) {
    if (source.size() != target.size()) throw Error("procrustes_2d: size mismatch");
    size_t n = source.size();
    if (n < 2) throw Error("procrustes_2d: need at least two points");

    auto center = [](const std::vector<std::array<double, 2>>& pts) {
        std::array<double, 2> mu = {0.0, 0.0};
        for (const auto& p : pts) {
            mu[0] += p[0];
            mu[1] += p[1];
        }
        mu[0] /= static_cast<double>(pts.size());
        mu[1] /= static_cast<double>(pts.size());
        std::vector<std::array<double, 2>> out(pts.size());
        for (size_t i = 0; i < pts.size(); ++i) out[i] = {pts[i][0] - mu[0], pts[i][1] - mu[1]};
        return out;
    };
    std::vector<std::array<double, 2>> s = center(source), t = center(target);
    auto spread = [](const std::vector<std::array<double, 2>>& pts) {
        double total = 0.0;
        for (const auto& p : pts) total += p[0] * p[0] + p[1] * p[1];
        return total;
    };
    if (spread(s) == 0.0 || spread(t) == 0.0)
        throw Error("procrustes_2d: degenerate point cloud");

    // Cross-covariance M = S^T T, then Q = U V^T from the SVD of M; V from
    // the eigenvectors of the symmetric M^T M, U recovered column-wise.
    double m00 = 0.0, m01 = 0.0, m10 = 0.0, m11 = 0.0;
    for (size_t i = 0; i < n; ++i) {
        m00 += s[i][0] * t[i][0];
        m01 += s[i][0] * t[i][1];
        m10 += s[i][1] * t[i][0];
        m11 += s[i][1] * t[i][1];
    }
    double a = m00 * m00 + m10 * m10;  // (M^T M)[0][0]
    double b = m00 * m01 + m10 * m11;  // off-diagonal
    double c = m01 * m01 + m11 * m11;  // (M^T M)[1][1]
    double tr = a + c;
    double disc = std::sqrt(std::max(0.0, (a - c) * (a - c) + 4.0 * b * b));
    double l1 = 0.5 * (tr + disc), l2 = 0.5 * (tr - disc);

    auto eigvec = [&](double lambda) -> std::array<double, 2> {
        // (M^T M - lambda I) v = 0; pick the better-conditioned row.
        double r1x = a - lambda, r1y = b;
        double r2x = b, r2y = c - lambda;
        std::array<double, 2> v{};
        if (r1x * r1x + r1y * r1y >= r2x * r2x + r2y * r2y)
            v = {-r1y, r1x};
        else
            v = {-r2y, r2x};
        double norm = std::hypot(v[0], v[1]);
        if (norm < 1e-300) return {1.0, 0.0};
        return {v[0] / norm, v[1] / norm};
    };

    std::array<double, 2> v1 = eigvec(l1);
    std::array<double, 2> v2 = {-v1[1], v1[0]};  // orthogonal complement
    double s1 = std::sqrt(std::max(0.0, l1)), s2 = std::sqrt(std::max(0.0, l2));

    auto matvec = [&](const std::array<double, 2>& v) -> std::array<double, 2> {
        return {m00 * v[0] + m01 * v[1], m10 * v[0] + m11 * v[1]};
    };
    std::array<double, 2> u1{}, u2{};
    if (s1 > 1e-12 * (s1 + s2 + 1e-300)) {
        std::array<double, 2> mv = matvec(v1);
        u1 = {mv[0] / s1, mv[1] / s1};
    } else {
        u1 = {1.0, 0.0};
    }
    if (s2 > 1e-9 * s1) {
        std::array<double, 2> mv = matvec(v2);
        u2 = {mv[0] / s2, mv[1] / s2};
    } else {
        // Rank-deficient M: the second direction contributes nothing to the
        // objective, so any orthonormal completion is optimal.
        u2 = {-u1[1], u1[0]};
    }

    // Q = U V^T, the trace maximizer of <Q, M>; rows indexed by source axes.
    ProcrustesResult result;
    result.rotation[0][0] = u1[0] * v1[0] + u2[0] * v2[0];
    result.rotation[0][1] = u1[0] * v1[1] + u2[0] * v2[1];
    result.rotation[1][0] = u1[1] * v1[0] + u2[1] * v2[0];
    result.rotation[1][1] = u1[1] * v1[1] + u2[1] * v2[1];

    auto residual = [&](const std::array<std::array<double, 2>, 2>& q) {
        double total = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double x = s[i][0] * q[0][0] + s[i][1] * q[1][0] - t[i][0];
            double y = s[i][0] * q[0][1] + s[i][1] * q[1][1] - t[i][1];
            total += x * x + y * y;
        }
        return total;
    };
    result.rmsd = std::sqrt(residual(result.rotation) / static_cast<double>(n));
    double det = result.rotation[0][0] * result.rotation[1][1] -
                 result.rotation[0][1] * result.rotation[1][0];
    result.reflection = det < 0.0;
    result.aligned.resize(n);
    for (size_t i = 0; i < n; ++i)
        result.aligned[i] = {
            s[i][0] * result.rotation[0][0] + s[i][1] * result.rotation[1][0],
            s[i][0] * result.rotation[0][1] + s[i][1] * result.rotation[1][1]};
    return result;
}

}  // namespace geoadapt::retrofit
