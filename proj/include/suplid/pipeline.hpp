#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "suplid/coreset.hpp"
#include "suplid/scores.hpp"
#include "suplid/superpixel.hpp"

namespace suplid::pipeline {

inline constexpr std::size_t kNumConfidenceMethods = 5;

// Minimum superpixel confidence per confidence method over a training pass.
struct Calibration {
    std::array<std::optional<double>, kNumConfidenceMethods> min_confidence{};

    std::optional<double> get(scores::ConfidenceMethod m) const {
        return min_confidence[static_cast<std::size_t>(m)];
    }
};

struct TrainingSample {
    Tensor image;     // u8 [H, W, 3]
    Tensor features;  // f32 [Hf, Wf, D]
    std::optional<Tensor> logits;  // f32 [H, W, K]
    Tensor labels;    // u8 [H, W], class ids or 255
};

// Loads training sample `index`. When logits_only is set only `logits` is
// read (the KL-template pass).
using SampleLoader = std::function<TrainingSample(std::size_t index, bool logits_only)>;

struct TrainingPass {
    std::vector<std::vector<coreset::SuperpixelRecord>> records;  // per image
    Calibration calibration;
    std::optional<scores::KlTemplates> templates;
    std::size_t num_classes = 0;  // from logits when present, else 0
};

// Segments every training image and produces labeled superpixel records.
// With logits, it also builds KL templates, sets each record's confidence to
// its aggregated energy, and records the per-method calibration minimum.
TrainingPass run_training_pass(std::size_t count, const SampleLoader& load, const slic::SlicParams& slic);

enum class Method : std::uint8_t {
    suplid,   // rectified superpixel confidence x guidance
    pixel,    // raw per-pixel confidence, no superpixels
    knn,      // kNN distance baseline
    nnguide,  // NNGuide baseline
};

Method parse_method(std::string_view name);
std::string_view method_name(Method method);

struct ScoringPlan {
    Method method = Method::suplid;
    // When false the confidence term is the constant 1 (guidance alone).
    bool use_confidence = true;
    scores::FusionConfig fusion;
    slic::SlicParams slic;
};

struct ScoreResult {
    std::optional<slic::SuperpixelPartition> partition;
    std::vector<double> per_superpixel;
    Tensor per_pixel;  // f32 [H, W]
};

// Checks the ingestion contract: u8 [H,W,3] image, f32 [H,W,K] logits at image
// resolution, f32 [Hf,Wf,D] features no finer than the image.
void check_inputs(const Tensor& image, const Tensor& features, const Tensor* logits);

ScoreResult score_image(const Tensor& image, const Tensor& features, const Tensor& logits,
                        const coreset::Coreset& coreset, const ScoringPlan& plan);

}  // namespace suplid::pipeline
