#include "suplid/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "suplid/coreset.hpp"
#include "suplid/parallel.hpp"

namespace suplid::synth {

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette = {{
    {200, 60, 60}, {60, 170, 60}, {60, 70, 200}, {210, 200, 60},
    {60, 200, 210}, {190, 70, 200}, {130, 130, 130}, {230, 140, 40},
}};
constexpr std::array<std::uint8_t, 3> kOodColor = {250, 250, 250};
constexpr int kColorJitter = 6;
constexpr std::size_t kMaxSceneAttempts = 32;

// Substream tags.
enum Tag : std::uint64_t { kCenters = 1, kProbe = 2, kBasis = 100, kSamples = 1000, kScene = 5000 };

// Orthonormalizes the rows of `m` in place (modified Gram-Schmidt).
void orthonormalize_rows(std::vector<std::vector<double>>& rows) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < rows[i].size(); ++c) dot += rows[i][c] * rows[j][c];
            for (std::size_t c = 0; c < rows[i].size(); ++c) rows[i][c] -= dot * rows[j][c];
        }
        double norm = 0.0;
        for (double v : rows[i]) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw InvariantError("synth: degenerate Gaussian draw during orthonormalization");
        for (double& v : rows[i]) v /= norm;
    }
}

std::vector<std::vector<double>> random_orthonormal(std::size_t count, std::size_t dim, std::uint64_t seed) {
    NormalStream rng(seed);
    std::vector<std::vector<double>> rows(count, std::vector<double>(dim));
    for (auto& r : rows) {
        for (double& v : r) v = rng.next();
    }
    orthonormalize_rows(rows);
    return rows;
}

double center_radius(const SynthSpec& spec) { return spec.cluster_separation / std::numbers::sqrt2; }

// Everything a scene needs that depends only on the world seed.
struct World {
    std::size_t k = 0, d = 0;
    std::vector<std::vector<double>> centers;  // K classes, then the OOD center
    std::vector<Matrix> bases;                 // K classes, then the OOD basis
    std::vector<std::vector<double>> probe;    // K x D
    std::vector<double> bias;                  // K

    explicit World(const SynthSpec& spec) : k(spec.num_classes), d(spec.ambient_dim) {
        for (std::size_t c = 0; c <= k; ++c) {
            centers.push_back(class_center(spec, c));
            bases.push_back(class_basis(spec, c));
        }
        if (spec.ood_kind == OodKind::near) {
            for (std::size_t j = 0; j < d; ++j) centers[k][j] = 0.5 * (centers[0][j] + centers[1][j]);
        } else if (spec.ood_kind == OodKind::high_dim) {
            centers[k] = centers[0];
        }

        // Nearest-center probe with a small seeded perturbation.
        const double r = center_radius(spec);
        NormalStream rng(mix_seed(spec.seed, kProbe));
        const double jitter = 0.1 / (r * std::sqrt(static_cast<double>(d)));
        probe.assign(k, std::vector<double>(d));
        bias.assign(k, 0.0);
        for (std::size_t c = 0; c < k; ++c) {
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                probe[c][j] = centers[c][j] / (r * r) + jitter * rng.next();
                sq += centers[c][j] * centers[c][j];
            }
            bias[c] = -sq / (2.0 * r * r);
        }
    }

    // Draws one feature vector of class `cls` (k = OOD) into `out`.
    void sample(const SynthSpec& spec, std::size_t cls, NormalStream& rng, std::span<double> out) const {
        const auto& mu = centers[cls];
        std::copy(mu.begin(), mu.end(), out.begin());
        if (cls == k && spec.ood_kind == OodKind::high_dim) {
            for (double& v : out) v += spec.high_dim_sigma * rng.next();
            return;
        }
        const Matrix& basis = bases[cls];
        for (std::size_t b = 0; b < basis.rows(); ++b) {
            const double g = rng.next();
            const auto row = basis.row(b);
            for (std::size_t j = 0; j < d; ++j) out[j] += g * row[j];
        }
        if (spec.noise_sigma > 0.0) {
            for (double& v : out) v += spec.noise_sigma * rng.next();
        }
    }

    void logits(const SynthSpec& spec, std::span<const double> x, NormalStream& rng, std::span<float> out) const {
        for (std::size_t c = 0; c < k; ++c) {
            double z = bias[c];
            for (std::size_t j = 0; j < d; ++j) z += probe[c][j] * x[j];
            out[c] = static_cast<float>(spec.logit_scale * z + spec.logit_noise * rng.next());
        }
    }
};

Scene build_scene(const SynthSpec& spec, const World& world, std::uint64_t scene_seed) {
    const std::size_t h = spec.height, w = spec.width, k = spec.num_classes, d = spec.ambient_dim;
    NormalStream layout(mix_seed(scene_seed, 0));

    // Class regions on a jittered grid, plus one square OOD blob.
    const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(k))));
    const std::size_t rows = (k + cols - 1) / cols;
    const auto cuts = [&](std::size_t parts, std::size_t extent) {
        std::vector<std::size_t> c{0};
        for (std::size_t i = 1; i < parts; ++i) {
            const double frac = (static_cast<double>(i) + 0.4 * (layout.uniform() - 0.5)) / static_cast<double>(parts);
            c.push_back(static_cast<std::size_t>(std::lround(frac * static_cast<double>(extent))));
        }
        c.push_back(extent);
        return c;
    };
    const auto col_cuts = cuts(cols, w);
    const auto row_cuts = cuts(rows, h);
    const auto by = static_cast<std::size_t>(layout.uniform() * static_cast<double>(h - spec.blob_size + 1));
    const auto bx = static_cast<std::size_t>(layout.uniform() * static_cast<double>(w - spec.blob_size + 1));

    const auto region = [&](std::size_t y, std::size_t x) -> std::size_t {
        if (y >= by && y < by + spec.blob_size && x >= bx && x < bx + spec.blob_size) return k;
        const auto r = static_cast<std::size_t>(std::upper_bound(row_cuts.begin(), row_cuts.end(), y) - row_cuts.begin()) - 1;
        const auto c = static_cast<std::size_t>(std::upper_bound(col_cuts.begin(), col_cuts.end(), x) - col_cuts.begin()) - 1;
        return std::min(r * cols + c, k - 1);
    };

    Scene s;
    s.image = Tensor::zeros<std::uint8_t>({h, w, 3});
    s.train_labels = Tensor::zeros<std::uint8_t>({h, w});
    s.ood_mask = Tensor::zeros<std::uint8_t>({h, w});
    s.logits = Tensor::zeros<float>({h, w, k});
    const std::size_t hf = std::max<std::size_t>(1, h / spec.feature_stride);
    const std::size_t wf = std::max<std::size_t>(1, w / spec.feature_stride);
    s.features = Tensor::zeros<float>({hf, wf, d});

    auto img = s.image.data<std::uint8_t>();
    auto lab = s.train_labels.data<std::uint8_t>();
    auto ood = s.ood_mask.data<std::uint8_t>();
    auto logit = s.logits.data<float>();
    auto feat = s.features.data<float>();

    // Features, with the probe applied per cell so pixels can reuse it.
    std::vector<std::size_t> cell_class(hf * wf);
    std::vector<double> cell_x(hf * wf * d);
    parallel_for(hf, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            NormalStream rng(mix_seed(scene_seed, 1'000'000 + i));
            const std::size_t py = coreset::feature_cell_to_pixel(i, h, hf);
            for (std::size_t j = 0; j < wf; ++j) {
                const std::size_t px = coreset::feature_cell_to_pixel(j, w, wf);
                const std::size_t cell = i * wf + j;
                cell_class[cell] = region(py, px);
                auto x = std::span(cell_x).subspan(cell * d, d);
                world.sample(spec, cell_class[cell], rng, x);
                for (std::size_t c = 0; c < d; ++c) feat[cell * d + c] = static_cast<float>(x[c]);
            }
        }
    });

    std::vector<std::size_t> correct(h, 0), id_pixels(h, 0);
    parallel_for(h, [&](std::size_t begin, std::size_t end) {
        std::vector<double> x(d);
        for (std::size_t y = begin; y < end; ++y) {
            NormalStream rng(mix_seed(scene_seed, 2'000'000 + y));
            const std::size_t ci = std::min(hf - 1, y * hf / h);
            for (std::size_t xx = 0; xx < w; ++xx) {
                const std::size_t p = y * w + xx;
                const std::size_t cls = region(y, xx);
                const auto& color = cls == k ? kOodColor : kPalette[cls % kPalette.size()];
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    const int jitter = static_cast<int>(rng.uniform() * (2 * kColorJitter + 1)) - kColorJitter;
                    img[3 * p + ch] = static_cast<std::uint8_t>(std::clamp(color[ch] + jitter, 0, 255));
                }
                lab[p] = cls == k ? coreset::kIgnoreLabel : static_cast<std::uint8_t>(cls);
                ood[p] = cls == k ? 1 : 0;

                // A pixel inherits the latent feature of its cell when they agree
                // on the class; boundary pixels draw their own.
                const std::size_t cell = ci * wf + std::min(wf - 1, xx * wf / w);
                std::span<const double> latent;
                if (cell_class[cell] == cls) {
                    latent = std::span<const double>(cell_x).subspan(cell * d, d);
                } else {
                    world.sample(spec, cls, rng, x);
                    latent = x;
                }
                auto out = logit.subspan(p * k, k);
                world.logits(spec, latent, rng, out);
                if (cls < k) {
                    ++id_pixels[y];
                    const auto arg = static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
                    if (arg == cls) ++correct[y];
                }
            }
        }
    });
    std::size_t total = 0, hits = 0;
    for (std::size_t y = 0; y < h; ++y) {
        total += id_pixels[y];
        hits += correct[y];
    }
    s.id_accuracy = total ? static_cast<double>(hits) / static_cast<double>(total) : 1.0;
    return s;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

NormalStream::NormalStream(std::uint64_t seed) {
    // splitmix64 expansion of the seed.
    for (auto& s : state_) {
        seed += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = seed;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        s = z ^ (z >> 31);
    }
}

std::uint64_t NormalStream::next_u64() {
    const auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double NormalStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double NormalStream::next() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
}

OodKind parse_ood_kind(std::string_view name) {
    if (name == "far") return OodKind::far;
    if (name == "near") return OodKind::near;
    if (name == "high_dim" || name == "high-dim") return OodKind::high_dim;
    throw ValidationError("unknown ood_kind '" + std::string(name) + "' (expected far|near|high_dim)");
}

std::string_view ood_kind_name(OodKind kind) {
    switch (kind) {
        case OodKind::far: return "far";
        case OodKind::near: return "near";
        case OodKind::high_dim: return "high_dim";
    }
    return "?";
}

std::size_t SynthSpec::intrinsic_dim(std::size_t cls) const {
    if (intrinsic_dims.size() == 1) return intrinsic_dims[0];
    // The far/near OOD manifold uses class 0's dimension.
    return intrinsic_dims.at(cls < num_classes ? cls : 0);
}

void SynthSpec::validate() const {
    if (num_classes < 2 || num_classes > 254) throw ValidationError("synth: num_classes must be in [2, 254]");
    if (intrinsic_dims.size() != 1 && intrinsic_dims.size() != num_classes)
        throw ValidationError("synth: intrinsic_dims needs 1 or num_classes entries");
    for (auto dy : intrinsic_dims) {
        if (dy < 1 || dy > ambient_dim)
            throw ValidationError("synth: intrinsic dimension " + std::to_string(dy) + " outside [1, " +
                                  std::to_string(ambient_dim) + "]");
    }
    if (num_classes + 1 > ambient_dim) throw ValidationError("synth: ambient_dim must exceed num_classes");
    if (!(cluster_separation > 0.0)) throw ValidationError("synth: cluster_separation must be > 0");
    if (noise_sigma < 0.0 || logit_noise < 0.0 || high_dim_sigma < 0.0)
        throw ValidationError("synth: noise scales must be >= 0");
    if (height == 0 || width == 0 || feature_stride == 0) throw ValidationError("synth: empty image or stride");
    if (blob_size == 0 || blob_size > height || blob_size > width)
        throw ValidationError("synth: OOD blob of side " + std::to_string(blob_size) + " does not fit a " +
                              std::to_string(height) + "x" + std::to_string(width) + " image");
}

std::vector<double> class_center(const SynthSpec& spec, std::size_t cls) {
    const auto dirs = random_orthonormal(spec.num_classes + 1, spec.ambient_dim, mix_seed(spec.seed, kCenters));
    auto c = dirs.at(cls);
    const double r = center_radius(spec);
    for (double& v : c) v *= r;
    return c;
}

Matrix class_basis(const SynthSpec& spec, std::size_t cls) {
    const std::size_t dy = spec.intrinsic_dim(cls);
    const auto rows = random_orthonormal(dy, spec.ambient_dim, mix_seed(spec.seed, kBasis + cls));
    Matrix b(dy, spec.ambient_dim);
    for (std::size_t i = 0; i < dy; ++i) {
        for (std::size_t j = 0; j < spec.ambient_dim; ++j) b(i, j) = static_cast<float>(rows[i][j]);
    }
    return b;
}

Matrix make_manifold_samples(const SynthSpec& spec, std::size_t cls, std::size_t n, std::uint64_t stream) {
    spec.validate();
    if (cls >= spec.num_classes) throw ValidationError("synth: class index out of range");
    const World world(spec);
    NormalStream rng(mix_seed(mix_seed(spec.seed, kSamples + cls), stream));
    Matrix out(n, spec.ambient_dim);
    std::vector<double> x(spec.ambient_dim);
    for (std::size_t i = 0; i < n; ++i) {
        world.sample(spec, cls, rng, x);
        for (std::size_t j = 0; j < x.size(); ++j) out(i, j) = static_cast<float>(x[j]);
    }
    return out;
}

Matrix make_ood_samples(const SynthSpec& spec, std::size_t n, std::uint64_t stream) {
    spec.validate();
    const World world(spec);
    NormalStream rng(mix_seed(mix_seed(spec.seed, kSamples + spec.num_classes), stream));
    Matrix out(n, spec.ambient_dim);
    std::vector<double> x(spec.ambient_dim);
    for (std::size_t i = 0; i < n; ++i) {
        world.sample(spec, spec.num_classes, rng, x);
        for (std::size_t j = 0; j < x.size(); ++j) out(i, j) = static_cast<float>(x[j]);
    }
    return out;
}

Scene make_scene(const SynthSpec& spec) {
    spec.validate();
    const World world(spec);
    for (std::size_t attempt = 0; attempt < kMaxSceneAttempts; ++attempt) {
        const std::uint64_t scene_seed = mix_seed(mix_seed(spec.seed, kScene + spec.scene_index), attempt);
        Scene s = build_scene(spec, world, scene_seed);
        if (s.id_accuracy >= 0.95) return s;
    }
    throw ValidationError("synth: logit probe accuracy stays below 0.95; reduce logit_noise or raise logit_scale");
}

}  // namespace suplid::synth
