#include "suplid/export_contract.hpp"

#include "suplid/tensorio.hpp"

namespace suplid {

namespace {

std::size_t positive(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(std::string("export sidecar: missing '") + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() <= 0)
        throw ValidationError(std::string("export sidecar: '") + key + "' must be a positive integer");
    return v.get<std::size_t>();
}

void same(std::size_t declared, std::size_t actual, const char* key, const char* what) {
    if (declared != actual)
        throw ValidationError(std::string("export sidecar declares ") + key + "=" + std::to_string(declared) +
                              " but the " + what + " has " + std::to_string(actual));
}

}  // namespace

ExportShapes parse_export_sidecar(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("export sidecar: expected a JSON object");
    ExportShapes s;
    if (j.contains("model")) {
        if (!j["model"].is_string()) throw ValidationError("export sidecar: 'model' must be a string");
        s.model = j["model"].get<std::string>();
    }
    s.d = positive(j, "D");
    s.k = positive(j, "K");
    s.h = positive(j, "H");
    s.w = positive(j, "W");
    s.hf = positive(j, "Hf");
    s.wf = positive(j, "Wf");
    if (s.k < 2) throw ValidationError("export sidecar: K must be >= 2");
    if (s.hf > s.h || s.wf > s.w) throw ValidationError("export sidecar: feature grid is finer than the image");
    return s;
}

ExportShapes load_export_sidecar(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(io::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": invalid JSON: " + e.what());
    }
    try {
        return parse_export_sidecar(j);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void check_export_shapes(const ExportShapes& s, const Tensor& features, const Tensor& logits) {
    features.expect(DType::f32, {0, 0, 0}, "feature map");
    logits.expect(DType::f32, {0, 0, 0}, "logit map");
    same(s.hf, features.dim(0), "Hf", "feature map");
    same(s.wf, features.dim(1), "Wf", "feature map");
    same(s.d, features.dim(2), "D", "feature map");
    same(s.h, logits.dim(0), "H", "logit map");
    same(s.w, logits.dim(1), "W", "logit map");
    same(s.k, logits.dim(2), "K", "logit map");
}

}  // namespace suplid
