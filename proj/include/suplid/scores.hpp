#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "suplid/coreset.hpp"
#include "suplid/matrix.hpp"
#include "suplid/superpixel.hpp"
#include "suplid/tensor.hpp"

// All scores are oriented so that higher means more in-distribution.
namespace suplid::scores {

enum class ConfidenceMethod : std::uint8_t { msp, maxlogit, energy, entropy, kl_match };
enum class GuidanceMethod : std::uint8_t { weighted_lid, unweighted_lid, knn_distance, none };

ConfidenceMethod parse_confidence(std::string_view name);
std::string_view confidence_name(ConfidenceMethod method);
GuidanceMethod parse_guidance(std::string_view name);
std::string_view guidance_name(GuidanceMethod method);

struct FusionConfig {
    ConfidenceMethod confidence_method = ConfidenceMethod::energy;
    GuidanceMethod guidance_method = GuidanceMethod::weighted_lid;
    double rectify_floor = 1e-6;
    // Minimum superpixel confidence seen while building the coreset.
    double calibration_min = 0.0;
    std::size_t k_guidance = 400;

    void validate() const;
};

// Per-class mean softmax vectors d_c, [K, K].
struct KlTemplates {
    Matrix templates;

    std::size_t num_classes() const { return templates.rows(); }
};

// Accumulates mean softmax per predicted class over a stream of logit maps.
class KlTemplateBuilder {
public:
    void add(const Tensor& logits);
    std::size_t pixels() const { return pixels_; }
    // Classes never predicted get the uniform distribution and a warning.
    // Throws ValidationError when nothing was added.
    KlTemplates finish() const;

private:
    std::size_t classes_ = 0;
    std::size_t pixels_ = 0;
    std::vector<double> sums_;
    std::vector<std::size_t> counts_;
};

// Single-pass convenience over a list of logit maps.
KlTemplates build_kl_templates(std::span<const Tensor> logits);

// Confidence for one logit vector.
double confidence(std::span<const float> logits, ConfidenceMethod method, const KlTemplates* templates);

// Per-pixel confidence of an f32 [H, W, K] logit map -> f32 [H, W].
Tensor confidence_from_logits(const Tensor& logits, ConfidenceMethod method, const KlTemplates* templates);

// Mean of the pixel map over each superpixel.
std::vector<double> aggregate_confidence(const Tensor& pixel_conf, const slic::SuperpixelPartition& partition);

// max(s - calibration_min, 0) + rectify_floor.
std::vector<double> rectify(std::span<const double> s, const FusionConfig& config);

// Guidance D_l per superpixel embedding row. weighted_lid searches the coreset
// scaled by its weights; the queries are not scaled.
std::vector<double> guidance_score(MatrixView embeddings, const coreset::Coreset& coreset, GuidanceMethod method,
                                   std::size_t k, double floor = 1e-6);

std::vector<double> fuse(std::span<const double> confidence, std::span<const double> guidance);

Tensor broadcast_to_pixels(std::span<const double> per_superpixel, const slic::SuperpixelPartition& partition);

// Negated distance to the k-th nearest raw coreset embedding.
std::vector<double> knn_baseline(MatrixView embeddings, const coreset::Coreset& coreset, std::size_t k);

// rectified confidence times the mean inner product with the k nearest raw
// coreset embeddings.
std::vector<double> nnguide_baseline(std::span<const double> rectified, MatrixView embeddings,
                                     const coreset::Coreset& coreset, std::size_t k);

// 0 (ID) where score >= tau, 1 (OOD) elsewhere. u8 [H, W].
Tensor threshold_map(const Tensor& score_map, double tau);

}  // namespace suplid::scores
