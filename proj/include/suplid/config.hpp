#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "suplid/coreset.hpp"
#include "suplid/lid.hpp"
#include "suplid/scores.hpp"
#include "suplid/superpixel.hpp"

namespace suplid {

// Run configuration shared by every subcommand.
struct Config {
    std::size_t k = 400;
    std::size_t m = 400;
    std::size_t pixels_per_superpixel = 200;
    double compactness = 10.0;
    std::size_t slic_iterations = 10;
    double purity_threshold = 0.75;
    scores::ConfidenceMethod confidence_method = scores::ConfidenceMethod::energy;
    scores::GuidanceMethod guidance_method = scores::GuidanceMethod::weighted_lid;
    coreset::Strategy coreset_strategy = coreset::Strategy::lid;
    double rectify_floor = 1e-6;
    std::uint64_t seed = 0;

    // Expected embedding dimension; inputs of another width only warn.
    std::size_t feature_dim = 304;
    lid::Metric lid_metric = lid::Metric::euclidean;
    double min_region_fraction = 0.25;

    void validate() const;

    slic::SlicParams slic() const;
    coreset::CoresetParams coreset() const;
    scores::FusionConfig fusion(double calibration_min) const;

    friend bool operator==(const Config&, const Config&) = default;
};

nlohmann::json to_json(const Config& config);

// Starts from the defaults and overrides the keys present. Unknown keys,
// wrong types and invalid values throw ValidationError.
Config config_from_json(const nlohmann::json& j);

// Accepts either a bare config object or a run manifest carrying one under
// "config".
Config load_config(const std::filesystem::path& path);

// FNV-1a 64 over the canonical JSON serialization.
std::uint64_t config_hash(const Config& config);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

// Warns when an input's embedding width differs from config.feature_dim.
void check_feature_dim(const Config& config, std::size_t dim, std::string_view what);

}  // namespace suplid
