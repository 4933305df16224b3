#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "suplid/config.hpp"
#include "suplid/eval.hpp"
#include "suplid/pipeline.hpp"

namespace suplid::experiment {

// One scoring configuration of an ablation table.
struct Variant {
    std::string name;
    pipeline::Method method = pipeline::Method::suplid;
    bool use_confidence = true;
    scores::ConfidenceMethod confidence = scores::ConfidenceMethod::energy;
    scores::GuidanceMethod guidance = scores::GuidanceMethod::weighted_lid;
    coreset::Strategy strategy = coreset::Strategy::lid;
};

// Rows of the component ablation: energy alone (pixel and superpixel), LID
// alone with and without coreset scaling, w/o LID, the three alternative
// coreset strategies, and full SupLID.
std::vector<Variant> component_variants();

// Cross product confidence x guidance x strategy, all with Method::suplid.
std::vector<Variant> grid_variants(const std::vector<scores::ConfidenceMethod>& confidences,
                                   const std::vector<scores::GuidanceMethod>& guidances,
                                   const std::vector<coreset::Strategy>& strategies);

struct TestSample {
    Tensor image;     // u8 [H, W, 3]
    Tensor features;  // f32 [Hf, Wf, D]
    Tensor logits;    // f32 [H, W, K]
    Tensor mask;      // u8 [H, W], 0 / 1 / 255
};

using TestLoader = std::function<TestSample(std::size_t index)>;

// Builds a coreset from a training pass with the config's parameters and the
// given strategy. Attaches the pass's KL templates when present.
coreset::Coreset coreset_from_pass(const pipeline::TrainingPass& pass, const Config& config,
                                   coreset::Strategy strategy);

pipeline::ScoringPlan plan_for(const Variant& variant, const Config& config,
                               const pipeline::Calibration& calibration);

struct VariantResult {
    Variant variant;
    eval::EvalReport report;
};

// Scores every test image under every variant and evaluates the pooled maps.
// One coreset is built per distinct strategy. A failing variant rethrows with
// its name prefixed.
std::vector<VariantResult> run_variants(const pipeline::TrainingPass& pass, std::size_t test_count,
                                        const TestLoader& load, const Config& config,
                                        const std::vector<Variant>& variants);

}  // namespace suplid::experiment
