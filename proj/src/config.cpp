#include "suplid/config.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "suplid/tensorio.hpp"

namespace suplid {

using nlohmann::json;

namespace {

template <typename T>
T get_number(const json& j, const std::string& key) {
    if constexpr (std::is_floating_point_v<T>) {
        if (!j.is_number()) throw ValidationError("config: '" + key + "' must be a number");
        const double v = j.get<double>();
        if (!std::isfinite(v)) throw ValidationError("config: '" + key + "' must be finite");
        return static_cast<T>(v);
    } else {
        if (!j.is_number_integer()) throw ValidationError("config: '" + key + "' must be an integer");
        if (j.is_number_unsigned()) return static_cast<T>(j.get<std::uint64_t>());
        const auto v = j.get<std::int64_t>();
        if (v < 0) throw ValidationError("config: '" + key + "' must be non-negative");
        return static_cast<T>(v);
    }
}

std::string get_string(const json& j, const std::string& key) {
    if (!j.is_string()) throw ValidationError("config: '" + key + "' must be a string");
    return j.get<std::string>();
}

}  // namespace

void Config::validate() const {
    if (k < 2) throw ValidationError("config: k must be >= 2, got " + std::to_string(k));
    if (feature_dim < 1) throw ValidationError("config: feature_dim must be >= 1");
    slic().validate();
    coreset().validate();
    fusion(0.0).validate();
}

slic::SlicParams Config::slic() const {
    return {.pixels_per_superpixel = pixels_per_superpixel,
            .compactness = compactness,
            .max_iterations = slic_iterations,
            .min_region_fraction = min_region_fraction};
}

coreset::CoresetParams Config::coreset() const {
    return {.m = m,
            .k = k,
            .purity_threshold = purity_threshold,
            .strategy = coreset_strategy,
            .seed = seed,
            .metric = lid_metric,
            .num_classes = 0};
}

scores::FusionConfig Config::fusion(double calibration_min) const {
    return {.confidence_method = confidence_method,
            .guidance_method = guidance_method,
            .rectify_floor = rectify_floor,
            .calibration_min = calibration_min,
            .k_guidance = k};
}

json to_json(const Config& c) {
    return json{
        {"k", c.k},
        {"m", c.m},
        {"pixels_per_superpixel", c.pixels_per_superpixel},
        {"compactness", c.compactness},
        {"slic_iterations", c.slic_iterations},
        {"purity_threshold", c.purity_threshold},
        {"confidence_method", scores::confidence_name(c.confidence_method)},
        {"guidance_method", scores::guidance_name(c.guidance_method)},
        {"coreset_strategy", coreset::strategy_name(c.coreset_strategy)},
        {"rectify_floor", c.rectify_floor},
        {"seed", c.seed},
        {"feature_dim", c.feature_dim},
        {"lid_metric", lid::metric_name(c.lid_metric)},
        {"min_region_fraction", c.min_region_fraction},
    };
}

Config config_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("config: expected a JSON object");
    Config c;
    for (const auto& [key, value] : j.items()) {
        if (key == "k") c.k = get_number<std::size_t>(value, key);
        else if (key == "m") c.m = get_number<std::size_t>(value, key);
        else if (key == "pixels_per_superpixel") c.pixels_per_superpixel = get_number<std::size_t>(value, key);
        else if (key == "compactness") c.compactness = get_number<double>(value, key);
        else if (key == "slic_iterations") c.slic_iterations = get_number<std::size_t>(value, key);
        else if (key == "purity_threshold") c.purity_threshold = get_number<double>(value, key);
        else if (key == "confidence_method") c.confidence_method = scores::parse_confidence(get_string(value, key));
        else if (key == "guidance_method") c.guidance_method = scores::parse_guidance(get_string(value, key));
        else if (key == "coreset_strategy") c.coreset_strategy = coreset::parse_strategy(get_string(value, key));
        else if (key == "rectify_floor") c.rectify_floor = get_number<double>(value, key);
        else if (key == "seed") c.seed = get_number<std::uint64_t>(value, key);
        else if (key == "feature_dim") c.feature_dim = get_number<std::size_t>(value, key);
        else if (key == "lid_metric") c.lid_metric = lid::parse_metric(get_string(value, key));
        else if (key == "min_region_fraction") c.min_region_fraction = get_number<double>(value, key);
        else throw ValidationError("config: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

Config load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": invalid JSON: " + e.what());
    }
    try {
        if (j.is_object() && j.contains("config") && j.contains("tool")) return config_from_json(j.at("config"));
        return config_from_json(j);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state) {
    for (unsigned char b : bytes) {
        state ^= b;
        state *= 0x100000001b3ULL;
    }
    return state;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::uint64_t config_hash(const Config& config) { return fnv1a64(to_json(config).dump()); }

void check_feature_dim(const Config& config, std::size_t dim, std::string_view what) {
    if (dim != config.feature_dim)
        warn(std::string(what) + ": embedding dimension " + std::to_string(dim) + " differs from feature_dim " +
             std::to_string(config.feature_dim));
}

}  // namespace suplid
