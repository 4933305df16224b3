#include "suplid/lid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "suplid/parallel.hpp"

namespace suplid::lid {

Metric parse_metric(std::string_view name) {
    if (name == "euclidean") return Metric::euclidean;
    if (name == "cosine") return Metric::cosine;
    throw ValidationError("unknown distance metric '" + std::string(name) + "' (expected euclidean|cosine)");
}

std::string_view metric_name(Metric metric) {
    return metric == Metric::cosine ? "cosine" : "euclidean";
}

void LidParams::validate() const {
    if (k < 2) throw ValidationError("LID neighbor count k must be >= 2, got " + std::to_string(k));
    if (!(distance_floor > 0.0) || !std::isfinite(distance_floor))
        throw ValidationError("LID distance floor must be > 0");
    if (!(lid_cap > 0.0) || !std::isfinite(lid_cap)) throw ValidationError("LID cap must be > 0");
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
    const std::size_t n = a.size();
    const float* x = a.data();
    const float* y = b.data();
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        for (std::size_t l = 0; l < 4; ++l) {
            const double d = static_cast<double>(x[i + l]) - static_cast<double>(y[i + l]);
            acc[l] += d * d;
        }
    }
    for (; i < n; ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        acc[0] += d * d;
    }
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

NeighborResult knn_search(std::span<const float> query, MatrixView pool, std::size_t k) {
    if (pool.rows() == 0) throw ValidationError("knn_search: empty pool");
    if (k == 0) throw ValidationError("knn_search: k must be >= 1");
    if (query.size() != pool.cols())
        throw ValidationError("knn_search: query dimension " + std::to_string(query.size()) +
                              " does not match pool dimension " + std::to_string(pool.cols()));

    const std::size_t m = pool.rows();
    std::vector<std::pair<double, std::uint32_t>> cand(m);
    for (std::size_t j = 0; j < m; ++j) cand[j] = {squared_distance(query, pool.row(j)), static_cast<std::uint32_t>(j)};

    const std::size_t take = std::min(k, m);
    if (take < m) std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
    std::sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take));

    NeighborResult out;
    out.distances.reserve(take);
    out.indices.reserve(take);
    for (std::size_t j = 0; j < take; ++j) {
        out.distances.push_back(std::sqrt(cand[j].first));
        out.indices.push_back(cand[j].second);
    }
    return out;
}

double lid_mle(std::span<const double> distances, const LidParams& params) {
    const std::size_t k = distances.size();
    if (k < 2) throw ValidationError("lid_mle: need at least 2 distances, got " + std::to_string(k));
    for (std::size_t i = 0; i < k; ++i) {
        if (!(distances[i] >= 0.0) || !std::isfinite(distances[i]))
            throw ValidationError("lid_mle: distances must be finite and non-negative");
        if (i > 0 && distances[i] < distances[i - 1]) throw ValidationError("lid_mle: distances must be ascending");
    }

    const double rk = std::max(distances[k - 1], params.distance_floor);
    double sum = 0.0;
    for (double r : distances) sum += std::log(std::max(r, params.distance_floor) / rk);
    const double mean = sum / static_cast<double>(k);
    if (mean >= 0.0) return params.lid_cap;
    return std::min(-1.0 / mean, params.lid_cap);
}

std::vector<double> batch_lid(MatrixView queries, MatrixView pool, const LidParams& params, bool exclude_self) {
    params.validate();
    if (queries.rows() > 0 && queries.cols() != pool.cols())
        throw ValidationError("batch_lid: query dimension " + std::to_string(queries.cols()) +
                              " does not match pool dimension " + std::to_string(pool.cols()));
    if (exclude_self && queries.rows() > pool.rows())
        throw ValidationError("batch_lid: exclude_self requires queries to be rows of the pool");

    const std::size_t available = exclude_self ? pool.rows() - std::min<std::size_t>(pool.rows(), 1) : pool.rows();
    const std::size_t k = std::min(params.k, available);
    if (k < 2)
        throw ValidationError("batch_lid: pool of " + std::to_string(pool.rows()) + " rows is too small for LID (" +
                              (exclude_self ? "excluding self, " : "") + "need >= 2 neighbors)");
    if (k < params.k)
        warn("batch_lid: k clamped from " + std::to_string(params.k) + " to " + std::to_string(k) +
             " (pool size " + std::to_string(pool.rows()) + ")");

    Matrix q_norm;
    Matrix p_norm;
    if (params.metric == Metric::cosine) {
        q_norm = normalize_rows(queries);
        p_norm = normalize_rows(pool);
        queries = q_norm;
        pool = p_norm;
    }

    std::vector<double> out(queries.rows());
    parallel_for(queries.rows(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t q = begin; q < end; ++q) {
            NeighborResult nn = knn_search(queries.row(q), pool, exclude_self ? k + 1 : k);
            if (exclude_self) {
                auto it = std::find(nn.indices.begin(), nn.indices.end(), static_cast<std::uint32_t>(q));
                // Enough zero-distance duplicates with lower indices can push
                // self out of the list; then the extra neighbor is dropped.
                const auto pos = it == nn.indices.end() ? nn.indices.size() - 1
                                                        : static_cast<std::size_t>(it - nn.indices.begin());
                nn.distances.erase(nn.distances.begin() + static_cast<std::ptrdiff_t>(pos));
            }
            out[q] = lid_mle(nn.distances, params);
        }
    });
    return out;
}

Matrix normalize_rows(MatrixView m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto src = m.row(i);
        double norm = 0.0;
        for (float v : src) norm += static_cast<double>(v) * v;
        norm = std::sqrt(norm);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < src.size(); ++j)
            dst[j] = norm > 0.0 ? static_cast<float>(src[j] / norm) : 0.0f;
    }
    return out;
}

}  // namespace suplid::lid
