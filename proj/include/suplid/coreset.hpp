#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "suplid/lid.hpp"
#include "suplid/matrix.hpp"
#include "suplid/superpixel.hpp"

namespace suplid::coreset {

inline constexpr std::int32_t kUnlabeled = -1;
inline constexpr std::uint8_t kIgnoreLabel = 255;

struct SuperpixelRecord {
    std::uint32_t superpixel = 0;  // index in the source partition
    std::vector<float> embedding;
    std::int32_t class_label = kUnlabeled;
    double purity = 1.0;
    // Aggregated classifier confidence; required by Strategy::energy.
    std::optional<double> confidence;
};

enum class Strategy : std::uint8_t { lid = 0, random = 1, energy = 2, diverse = 3 };

Strategy parse_strategy(std::string_view name);
std::string_view strategy_name(Strategy strategy);

struct CoresetParams {
    std::size_t m = 400;
    std::size_t k = 400;
    double purity_threshold = 0.75;
    Strategy strategy = Strategy::lid;
    std::uint64_t seed = 0;
    lid::Metric metric = lid::Metric::euclidean;
    // 0 infers the class count from the largest label seen.
    std::size_t num_classes = 0;

    void validate() const;
};

struct Coreset {
    Matrix embeddings;                        // [R, D], rows grouped by class
    std::vector<float> weights;               // R LID weights, all > 0
    std::vector<std::uint32_t> class_labels;  // R, non-decreasing
    std::uint32_t num_classes = 0;
    std::uint32_t k_used = 0;
    Strategy strategy = Strategy::lid;
    // Per-predicted-class mean softmax vectors, [K, K], when built with logits.
    std::optional<Matrix> kl_templates;

    std::size_t rows() const { return embeddings.rows(); }
    std::size_t dim() const { return embeddings.cols(); }

    // Throws ValidationError describing the first violated invariant.
    void validate() const;

    friend bool operator==(const Coreset&, const Coreset&) = default;
};

struct CoresetBuild {
    Coreset coreset;
    // For each coreset row, its position in the flattened (image, record) input.
    std::vector<std::size_t> source_index;
    // For each class, the flattened indices forming its pool and their LIDs.
    std::vector<std::vector<std::size_t>> class_pools;
    std::vector<std::vector<double>> class_lids;
};

// Projects the superpixel map onto the (possibly coarser) feature grid and
// averages the covered feature vectors. With train_labels, records get the
// majority class and its purity; superpixels whose pixels are all ignored are
// dropped with a warning.
std::vector<SuperpixelRecord> superpixel_embed(const Tensor& features, const slic::SuperpixelPartition& partition,
                                               const Tensor* train_labels = nullptr);

// Pixel coordinate sampled by feature cell `index` when projecting a label map
// of extent `pixels` onto a feature grid of extent `cells`.
std::size_t feature_cell_to_pixel(std::size_t index, std::size_t pixels, std::size_t cells);

// Indices of the `count` smallest values, ordered by (value, index).
std::vector<std::size_t> select_lowest(const std::vector<double>& values, std::size_t count);

// Greedy k-center selection starting from the medoid of the pool.
std::vector<std::size_t> select_diverse(MatrixView pool, std::size_t count);

CoresetBuild build_coreset_detailed(const std::vector<std::vector<SuperpixelRecord>>& records,
                                    const CoresetParams& params);
Coreset build_coreset(const std::vector<std::vector<SuperpixelRecord>>& records, const CoresetParams& params);

// SLCR container, little-endian:
//   "SLCR", u16 version=1, u8 strategy, u8 reserved=0, u32 K, u32 R, u32 D,
//   u32 k_used, R x u32 labels, R x f32 weights, R x D f32 embeddings,
//   u32 template flag, [K x K f32 templates].
std::size_t save_coreset(const Coreset& coreset, std::ostream& out);
Coreset load_coreset(std::istream& in);

// Coreset rows scaled elementwise by their weights.
Matrix weighted_pool(const Coreset& coreset);

}  // namespace suplid::coreset
