#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "suplid/tensor.hpp"

namespace suplid {

// Shapes declared by a feature/logit exporter's JSON sidecar:
//   {"model": str, "D": n, "K": n, "H": n, "W": n, "Hf": n, "Wf": n, ...}
// Other keys (file listings, digests) are carried but not interpreted.
struct ExportShapes {
    std::string model;
    std::size_t d = 0, k = 0, h = 0, w = 0, hf = 0, wf = 0;
};

ExportShapes parse_export_sidecar(const nlohmann::json& j);
ExportShapes load_export_sidecar(const std::filesystem::path& path);

// Throws ValidationError naming the first disagreement between the sidecar
// and f32 [Hf, Wf, D] features / f32 [H, W, K] logits.
void check_export_shapes(const ExportShapes& shapes, const Tensor& features, const Tensor& logits);

}  // namespace suplid
