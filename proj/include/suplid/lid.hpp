#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "suplid/matrix.hpp"

namespace suplid::lid {

enum class Metric : std::uint8_t {
    euclidean = 0,
    // Euclidean distance between L2-normalized vectors (chord length).
    cosine = 1,
};

Metric parse_metric(std::string_view name);
std::string_view metric_name(Metric metric);

struct LidParams {
    std::size_t k = 400;
    double distance_floor = 1e-12;
    double lid_cap = 1e6;
    Metric metric = Metric::euclidean;

    void validate() const;
};

struct NeighborResult {
    std::vector<double> distances;  // ascending
    std::vector<std::uint32_t> indices;
};

double squared_distance(std::span<const float> a, std::span<const float> b);

// Exact k nearest rows of `pool` by Euclidean distance, ascending, ties broken
// by lower pool index. Returns min(k, pool.rows()) neighbors.
NeighborResult knn_search(std::span<const float> query, MatrixView pool, std::size_t k);

// Maximum-likelihood LID from ascending neighbor distances r_1..r_k:
//   -1 / mean_i log(r_i / r_k)
// Distances are floored at params.distance_floor. A non-negative mean log-ratio
// (all distances equal) returns params.lid_cap; finite estimates are capped too.
double lid_mle(std::span<const double> distances, const LidParams& params);

// One LID estimate per query row. With exclude_self, query q must be row q of
// the pool and its own entry is removed from the neighbor list. k is clamped to
// the available pool size with a warning.
std::vector<double> batch_lid(MatrixView queries, MatrixView pool, const LidParams& params, bool exclude_self);

// Row-wise L2 normalization (zero rows stay zero); used for Metric::cosine.
Matrix normalize_rows(MatrixView m);

}  // namespace suplid::lid
