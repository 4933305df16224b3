#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "suplid/matrix.hpp"
#include "suplid/tensor.hpp"

namespace suplid::synth {

enum class OodKind : std::uint8_t {
    far,       // a separate cluster, orthogonal to every class center
    near,      // between the centers of classes 0 and 1
    high_dim,  // full-rank isotropic noise around the class-0 center
};

OodKind parse_ood_kind(std::string_view name);
std::string_view ood_kind_name(OodKind kind);

struct SynthSpec {
    std::size_t num_classes = 4;
    // Per-class intrinsic dimension; a single entry applies to every class.
    std::vector<std::size_t> intrinsic_dims{6};
    std::size_t ambient_dim = 64;
    double cluster_separation = 100.0;
    double noise_sigma = 0.01;
    std::size_t height = 128;
    std::size_t width = 128;
    // Feature grid is [H / stride, W / stride].
    std::size_t feature_stride = 4;
    OodKind ood_kind = OodKind::far;
    // Side of the square OOD blob in pixels.
    std::size_t blob_size = 32;
    // Scale of the nearest-center logit probe and per-pixel logit noise.
    double logit_scale = 4.0;
    double logit_noise = 1.0;
    // Isotropic sigma of high_dim OOD features.
    double high_dim_sigma = 1.0;
    // World seed: class centers, bases, colors and the probe.
    std::uint64_t seed = 0;
    // Selects an independent scene within the same world.
    std::uint64_t scene_index = 0;

    std::size_t intrinsic_dim(std::size_t cls) const;
    void validate() const;
};

struct Scene {
    Tensor image;         // u8 [H, W, 3]
    Tensor features;      // f32 [Hf, Wf, D]
    Tensor logits;        // f32 [H, W, K]
    Tensor train_labels;  // u8 [H, W], class ids, 255 over the blob
    Tensor ood_mask;      // u8 [H, W], 1 over the blob, 0 elsewhere
    double id_accuracy = 0.0;  // argmax(logits) == class over ID pixels
};

// Class center (rank-1 row) for class `cls`; cls == num_classes gives the far
// OOD center.
std::vector<double> class_center(const SynthSpec& spec, std::size_t cls);

// Orthonormal D x d basis for a class, stored as d rows of length D.
Matrix class_basis(const SynthSpec& spec, std::size_t cls);

// center + basis * g + noise_sigma * eps, one sample per row. `stream`
// selects an independent deterministic substream.
Matrix make_manifold_samples(const SynthSpec& spec, std::size_t cls, std::size_t n, std::uint64_t stream = 0);

// Samples of the OOD distribution selected by spec.ood_kind.
Matrix make_ood_samples(const SynthSpec& spec, std::size_t n, std::uint64_t stream = 0);

// Builds a scene; reseeds internally until argmax accuracy over ID pixels is
// at least 0.95.
Scene make_scene(const SynthSpec& spec);

// Portable seeded normal generator (Box-Muller over xoshiro256**).
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed);
    double next();
    double uniform();  // [0, 1)

private:
    std::uint64_t state_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
    std::uint64_t next_u64();
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace suplid::synth
