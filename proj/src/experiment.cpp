#include "suplid/experiment.hpp"

#include <map>
#include <string>

#include "suplid/parallel.hpp"

namespace suplid::experiment {

using scores::ConfidenceMethod;
using scores::GuidanceMethod;
using coreset::Strategy;
using pipeline::Method;

std::vector<Variant> component_variants() {
    return {
        {"energy_alone", Method::pixel, true, ConfidenceMethod::energy, GuidanceMethod::none, Strategy::lid},
        {"energy_superpixel", Method::suplid, true, ConfidenceMethod::energy, GuidanceMethod::none, Strategy::lid},
        {"lid_alone", Method::suplid, false, ConfidenceMethod::energy, GuidanceMethod::unweighted_lid, Strategy::lid},
        {"lid_scaled", Method::suplid, false, ConfidenceMethod::energy, GuidanceMethod::weighted_lid, Strategy::lid},
        {"wo_lid", Method::suplid, true, ConfidenceMethod::energy, GuidanceMethod::knn_distance, Strategy::lid},
        {"coreset_random", Method::suplid, true, ConfidenceMethod::energy, GuidanceMethod::weighted_lid,
         Strategy::random},
        {"coreset_energy", Method::suplid, true, ConfidenceMethod::energy, GuidanceMethod::weighted_lid,
         Strategy::energy},
        {"coreset_diverse", Method::suplid, true, ConfidenceMethod::energy, GuidanceMethod::weighted_lid,
         Strategy::diverse},
        {"suplid", Method::suplid, true, ConfidenceMethod::energy, GuidanceMethod::weighted_lid, Strategy::lid},
    };
}

std::vector<Variant> grid_variants(const std::vector<ConfidenceMethod>& confidences,
                                   const std::vector<GuidanceMethod>& guidances,
                                   const std::vector<Strategy>& strategies) {
    std::vector<Variant> out;
    for (auto c : confidences) {
        for (auto g : guidances) {
            for (auto s : strategies) {
                Variant v;
                v.name = std::string(scores::confidence_name(c)) + "+" + std::string(scores::guidance_name(g)) + "+" +
                         std::string(coreset::strategy_name(s));
                v.confidence = c;
                v.guidance = g;
                v.strategy = s;
                out.push_back(std::move(v));
            }
        }
    }
    return out;
}

coreset::Coreset coreset_from_pass(const pipeline::TrainingPass& pass, const Config& config, Strategy strategy) {
    auto params = config.coreset();
    params.strategy = strategy;
    params.num_classes = pass.num_classes;
    auto cs = coreset::build_coreset(pass.records, params);
    if (pass.templates) cs.kl_templates = pass.templates->templates;
    return cs;
}

pipeline::ScoringPlan plan_for(const Variant& v, const Config& config, const pipeline::Calibration& calibration) {
    Config c = config;
    c.confidence_method = v.confidence;
    c.guidance_method = v.guidance;
    pipeline::ScoringPlan plan;
    plan.method = v.method;
    plan.use_confidence = v.use_confidence;
    plan.fusion = c.fusion(calibration.get(v.confidence).value_or(0.0));
    plan.slic = c.slic();
    return plan;
}

std::vector<VariantResult> run_variants(const pipeline::TrainingPass& pass, std::size_t test_count,
                                        const TestLoader& load, const Config& config,
                                        const std::vector<Variant>& variants) {
    if (variants.empty()) throw ValidationError("ablation: no variants to run");
    if (test_count == 0) throw ValidationError("ablation: no test images");

    std::map<Strategy, coreset::Coreset> coresets;
    for (const auto& v : variants) {
        if (v.method != Method::pixel && !coresets.contains(v.strategy)) {
            try {
                coresets.emplace(v.strategy, coreset_from_pass(pass, config, v.strategy));
            } catch (const Error& e) {
                throw ValidationError("ablation variant '" + v.name + "': " + e.what());
            }
        }
    }
    // Any coreset serves the pixel method, which never reads it.
    const coreset::Coreset* fallback = coresets.empty() ? nullptr : &coresets.begin()->second;
    coreset::Coreset empty;

    std::vector<TestSample> tests(test_count);
    parallel_for(test_count, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) tests[i] = load(i);
    });

    std::vector<VariantResult> results;
    for (const auto& v : variants) {
        try {
            const auto plan = plan_for(v, config, pass.calibration);
            const coreset::Coreset& cs =
                v.method == Method::pixel ? (fallback ? *fallback : empty) : coresets.at(v.strategy);
            std::vector<Tensor> maps(test_count), masks(test_count);
            parallel_for(test_count, [&](std::size_t begin, std::size_t end) {
                for (std::size_t i = begin; i < end; ++i) {
                    if (v.method == Method::pixel) {
                        pipeline::check_inputs(tests[i].image, tests[i].features, &tests[i].logits);
                        const scores::KlTemplates* tpl = nullptr;
                        scores::KlTemplates local;
                        if (v.confidence == ConfidenceMethod::kl_match) {
                            if (!pass.templates) throw ValidationError("kl_match needs training logits");
                            local = *pass.templates;
                            tpl = &local;
                        }
                        maps[i] = scores::confidence_from_logits(tests[i].logits, v.confidence, tpl);
                    } else {
                        maps[i] = pipeline::score_image(tests[i].image, tests[i].features, tests[i].logits, cs, plan)
                                      .per_pixel;
                    }
                    masks[i] = tests[i].mask;
                }
            });
            results.push_back({v, eval::evaluate(maps, masks)});
        } catch (const Error& e) {
            throw ValidationError("ablation variant '" + v.name + "': " + e.what());
        }
    }
    return results;
}

}  // namespace suplid::experiment
