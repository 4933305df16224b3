#include "suplid/coreset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include "byteio.hpp"
#include "suplid/parallel.hpp"

namespace suplid::coreset {

using io::detail::get_f32;
using io::detail::get_le;
using io::detail::put_f32;
using io::detail::put_le;

namespace {

constexpr std::string_view kMagic = "SLCR";
constexpr std::uint16_t kVersion = 1;
constexpr std::string_view kTruncated = "SLCR: truncated file";

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Unbiased draw in [0, n) from a fully specified engine, so selections are
// reproducible across standard libraries.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = 0;
    do {
        v = rng();
    } while (v >= limit);
    return v % n;
}

std::vector<std::size_t> select_random(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

template <typename T>
std::vector<T> read_array(std::istream& in, std::size_t count, std::string_view section) {
    std::vector<T> out(count);
    std::vector<unsigned char> raw(count * sizeof(T));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw FormatError("SLCR: truncated " + std::string(section) + " section (" + std::to_string(in.gcount()) +
                          " of " + std::to_string(raw.size()) + " bytes)");
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t v = 0;
        for (std::size_t b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(raw[i * 4 + b]) << (8 * b);
        out[i] = std::bit_cast<T>(v);
    }
    return out;
}

}  // namespace

Strategy parse_strategy(std::string_view name) {
    if (name == "lid") return Strategy::lid;
    if (name == "random") return Strategy::random;
    if (name == "energy") return Strategy::energy;
    if (name == "diverse") return Strategy::diverse;
    throw ValidationError("unknown coreset strategy '" + std::string(name) + "' (expected lid|random|energy|diverse)");
}

std::string_view strategy_name(Strategy strategy) {
    switch (strategy) {
        case Strategy::lid: return "lid";
        case Strategy::random: return "random";
        case Strategy::energy: return "energy";
        case Strategy::diverse: return "diverse";
    }
    return "?";
}

void CoresetParams::validate() const {
    if (m < 1) throw ValidationError("coreset size m must be >= 1");
    if (k < 2) throw ValidationError("LID neighbor count k must be >= 2, got " + std::to_string(k));
    if (!(purity_threshold > 0.0 && purity_threshold <= 1.0))
        throw ValidationError("purity_threshold must be in (0, 1]");
}

void Coreset::validate() const {
    const std::size_t r = rows();
    if (r == 0) throw ValidationError("coreset has no rows");
    if (dim() == 0) throw ValidationError("coreset embedding dimension is zero");
    if (num_classes == 0) throw ValidationError("coreset class count is zero");
    if (weights.size() != r || class_labels.size() != r)
        throw ValidationError("coreset weights/labels do not match row count");
    for (std::size_t i = 0; i < r; ++i) {
        if (class_labels[i] >= num_classes)
            throw ValidationError("coreset row " + std::to_string(i) + " has class " + std::to_string(class_labels[i]) +
                                  " >= K=" + std::to_string(num_classes));
        if (i > 0 && class_labels[i] < class_labels[i - 1])
            throw ValidationError("coreset rows are not grouped by class");
        if (!(weights[i] > 0.0f) || !std::isfinite(weights[i]))
            throw ValidationError("coreset weight " + std::to_string(i) + " is not a finite positive value");
    }
    for (float v : embeddings.values()) {
        if (!std::isfinite(v)) throw ValidationError("coreset embeddings contain non-finite values");
    }
    if (kl_templates) {
        if (kl_templates->rows() != num_classes || kl_templates->cols() != num_classes)
            throw ValidationError("KL templates must be K x K");
        for (std::size_t c = 0; c < num_classes; ++c) {
            double sum = 0.0;
            for (float v : kl_templates->row(c)) {
                if (!(v >= 0.0f) || !std::isfinite(v)) throw ValidationError("KL template entries must be >= 0");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-5)
                throw ValidationError("KL template " + std::to_string(c) + " does not sum to 1");
        }
    }
}

std::size_t feature_cell_to_pixel(std::size_t index, std::size_t pixels, std::size_t cells) {
    const double pos = std::round(static_cast<double>(index) * static_cast<double>(pixels) / static_cast<double>(cells));
    return std::min(pixels - 1, static_cast<std::size_t>(std::max(0.0, pos)));
}

std::vector<SuperpixelRecord> superpixel_embed(const Tensor& features, const slic::SuperpixelPartition& partition,
                                               const Tensor* train_labels) {
    features.expect(DType::f32, {0, 0, 0}, "feature map");
    if (partition.num_superpixels == 0) throw ValidationError("superpixel_embed: empty partition");
    const std::size_t h = partition.height();
    const std::size_t w = partition.width();
    const std::size_t hf = features.dim(0);
    const std::size_t wf = features.dim(1);
    const std::size_t d = features.dim(2);
    if (hf > h || wf > w)
        throw ValidationError("feature map " + shape_string(features.shape()) +
                              " is finer than the image; features must be at equal or coarser resolution");
    if (train_labels) train_labels->expect(DType::u8, {h, w}, "training label mask");

    const auto feat = features.data<float>();
    const auto labels = partition.labels.data<std::int32_t>();
    const std::size_t n = partition.num_superpixels;

    std::vector<double> sums(n * d, 0.0);
    std::vector<std::size_t> cells(n, 0);
    for (std::size_t i = 0; i < hf; ++i) {
        const std::size_t py = feature_cell_to_pixel(i, h, hf);
        for (std::size_t j = 0; j < wf; ++j) {
            const std::size_t px = feature_cell_to_pixel(j, w, wf);
            const auto l = static_cast<std::size_t>(labels[py * w + px]);
            const float* f = &feat[(i * wf + j) * d];
            double* s = &sums[l * d];
            for (std::size_t c = 0; c < d; ++c) s[c] += f[c];
            ++cells[l];
        }
    }

    std::vector<std::array<std::uint32_t, 256>> hist;
    if (train_labels) {
        hist.assign(n, {});
        const auto gt = train_labels->data<std::uint8_t>();
        for (std::size_t p = 0; p < h * w; ++p) ++hist[static_cast<std::size_t>(labels[p])][gt[p]];
    }

    std::vector<SuperpixelRecord> out;
    out.reserve(n);
    std::size_t dropped = 0;
    for (std::size_t l = 0; l < n; ++l) {
        SuperpixelRecord rec;
        rec.superpixel = static_cast<std::uint32_t>(l);
        rec.embedding.resize(d);
        if (cells[l] > 0) {
            for (std::size_t c = 0; c < d; ++c)
                rec.embedding[c] = static_cast<float>(sums[l * d + c] / static_cast<double>(cells[l]));
        } else {
            // Too small to own a feature cell: borrow the cell nearest its centroid.
            const auto& cen = partition.centroids[l];
            const auto ci = std::min(hf - 1, static_cast<std::size_t>(std::lround(cen.row * hf / h)));
            const auto cj = std::min(wf - 1, static_cast<std::size_t>(std::lround(cen.col * wf / w)));
            const float* f = &feat[(ci * wf + cj) * d];
            std::copy(f, f + d, rec.embedding.begin());
        }
        if (train_labels) {
            const auto& hl = hist[l];
            std::uint32_t total = 0, best = 0;
            std::size_t best_class = 0;
            for (std::size_t c = 0; c < kIgnoreLabel; ++c) {
                total += hl[c];
                if (hl[c] > best) {
                    best = hl[c];
                    best_class = c;
                }
            }
            if (total == 0) {
                ++dropped;
                continue;
            }
            rec.class_label = static_cast<std::int32_t>(best_class);
            rec.purity = static_cast<double>(best) / static_cast<double>(total);
        }
        out.push_back(std::move(rec));
    }
    if (dropped > 0)
        warn("superpixel_embed: dropped " + std::to_string(dropped) + " superpixel(s) whose pixels are all ignored");
    return out;
}

std::vector<std::size_t> select_lowest(const std::vector<double>& values, std::size_t count) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto less = [&](std::size_t a, std::size_t b) {
        return values[a] < values[b] || (values[a] == values[b] && a < b);
    };
    count = std::min(count, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), less);
    idx.resize(count);
    return idx;
}

std::vector<std::size_t> select_diverse(MatrixView pool, std::size_t count) {
    const std::size_t n = pool.rows();
    count = std::min(count, n);
    if (count == 0) return {};

    std::vector<double> total(n, 0.0);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += std::sqrt(lid::squared_distance(pool.row(i), pool.row(j)));
            total[i] = s;
        }
    });
    std::size_t medoid = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (total[i] < total[medoid]) medoid = i;
    }

    std::vector<std::size_t> chosen{medoid};
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::vector<bool> taken(n, false);
    taken[medoid] = true;
    while (chosen.size() < count) {
        const std::size_t last = chosen.back();
        std::size_t far = n;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], lid::squared_distance(pool.row(i), pool.row(last)));
            if (!taken[i] && (far == n || nearest[i] > nearest[far])) far = i;
        }
        taken[far] = true;
        chosen.push_back(far);
    }
    return chosen;
}

CoresetBuild build_coreset_detailed(const std::vector<std::vector<SuperpixelRecord>>& records,
                                    const CoresetParams& params) {
    params.validate();

    // Flatten, dropping impure records.
    std::vector<const SuperpixelRecord*> flat;
    std::vector<std::size_t> flat_index;
    std::size_t position = 0, dim = 0, impure = 0;
    std::int32_t max_label = -1;
    for (const auto& image : records) {
        for (const auto& rec : image) {
            if (rec.class_label < 0)
                throw ValidationError("build_coreset: record " + std::to_string(position) + " has no class label");
            if (dim == 0) dim = rec.embedding.size();
            if (rec.embedding.size() != dim || dim == 0)
                throw ValidationError("build_coreset: inconsistent embedding dimension at record " +
                                      std::to_string(position));
            if (params.strategy == Strategy::energy && !rec.confidence)
                throw ValidationError("build_coreset: strategy=energy needs a confidence for every record");
            if (rec.purity >= params.purity_threshold) {
                flat.push_back(&rec);
                flat_index.push_back(position);
                max_label = std::max(max_label, rec.class_label);
            } else {
                ++impure;
            }
            ++position;
        }
    }
    if (impure > 0)
        warn("build_coreset: discarded " + std::to_string(impure) + " record(s) below purity threshold " +
             std::to_string(params.purity_threshold));

    const std::size_t num_classes =
        params.num_classes > 0 ? params.num_classes : static_cast<std::size_t>(max_label + 1);
    if (max_label >= 0 && static_cast<std::size_t>(max_label) >= num_classes)
        throw ValidationError("build_coreset: class label " + std::to_string(max_label) + " >= num_classes " +
                              std::to_string(num_classes));

    CoresetBuild build;
    build.class_pools.resize(num_classes);
    build.class_lids.resize(num_classes);
    for (std::size_t i = 0; i < flat.size(); ++i)
        build.class_pools[static_cast<std::size_t>(flat[i]->class_label)].push_back(i);

    Coreset& cs = build.coreset;
    cs.num_classes = static_cast<std::uint32_t>(num_classes);
    cs.k_used = static_cast<std::uint32_t>(params.k);
    cs.strategy = params.strategy;
    std::vector<float> rows;

    for (std::size_t y = 0; y < num_classes; ++y) {
        auto& members = build.class_pools[y];
        const std::size_t n = members.size();
        // LID with self excluded needs at least two other pool members.
        if (n < 3) {
            warn("build_coreset: class " + std::to_string(y) + " has " + std::to_string(n) +
                 " record(s); at least 3 are needed, skipping");
            for (auto& i : members) i = flat_index[i];
            continue;
        }

        Matrix pool(n, dim);
        for (std::size_t i = 0; i < n; ++i) std::copy_n(flat[members[i]]->embedding.begin(), dim, pool.row(i).begin());

        lid::LidParams lp;
        lp.k = std::min(params.k, n - 1);
        lp.metric = params.metric;
        if (lp.k < params.k)
            warn("build_coreset: class " + std::to_string(y) + " k clamped from " + std::to_string(params.k) + " to " +
                 std::to_string(lp.k));
        auto lids = lid::batch_lid(pool, pool, lp, /*exclude_self=*/true);

        const std::size_t m_eff = std::min(params.m, n);
        if (m_eff < params.m)
            warn("build_coreset: class " + std::to_string(y) + " has only " + std::to_string(n) +
                 " records; selecting all of them (m=" + std::to_string(params.m) + ")");

        std::vector<std::size_t> chosen;
        switch (params.strategy) {
            case Strategy::lid: chosen = select_lowest(lids, m_eff); break;
            case Strategy::random: chosen = select_random(n, m_eff, splitmix64(params.seed ^ splitmix64(y))); break;
            case Strategy::energy: {
                std::vector<double> neg(n);
                for (std::size_t i = 0; i < n; ++i) neg[i] = -*flat[members[i]]->confidence;
                chosen = select_lowest(neg, m_eff);
                break;
            }
            case Strategy::diverse: {
                if (params.metric == lid::Metric::cosine) {
                    chosen = select_diverse(lid::normalize_rows(pool), m_eff);
                } else {
                    chosen = select_diverse(pool, m_eff);
                }
                break;
            }
        }

        for (std::size_t i : chosen) {
            const auto emb = pool.row(i);
            rows.insert(rows.end(), emb.begin(), emb.end());
            cs.weights.push_back(static_cast<float>(lids[i]));
            cs.class_labels.push_back(static_cast<std::uint32_t>(y));
            build.source_index.push_back(flat_index[members[i]]);
        }
        for (auto& i : members) i = flat_index[i];
        build.class_lids[y] = std::move(lids);
    }

    if (cs.weights.empty()) throw ValidationError("build_coreset: no class has at least 3 usable records");
    cs.embeddings = Matrix(cs.weights.size(), dim, std::move(rows));
    return build;
}

Coreset build_coreset(const std::vector<std::vector<SuperpixelRecord>>& records, const CoresetParams& params) {
    return build_coreset_detailed(records, params).coreset;
}

std::size_t save_coreset(const Coreset& cs, std::ostream& out) {
    cs.validate();
    out.write(kMagic.data(), 4);
    put_le<std::uint16_t>(out, kVersion);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(cs.strategy));
    put_le<std::uint8_t>(out, 0);
    put_le<std::uint32_t>(out, cs.num_classes);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cs.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cs.dim()));
    put_le<std::uint32_t>(out, cs.k_used);
    for (auto c : cs.class_labels) put_le<std::uint32_t>(out, c);
    for (auto w : cs.weights) put_f32(out, w);
    for (auto v : cs.embeddings.values()) put_f32(out, v);
    put_le<std::uint32_t>(out, cs.kl_templates ? 1u : 0u);
    std::size_t bytes = 24 + cs.rows() * (8 + 4 * cs.dim()) + 4;
    if (cs.kl_templates) {
        for (auto v : cs.kl_templates->values()) put_f32(out, v);
        bytes += 4 * cs.kl_templates->values().size();
    }
    if (!out) throw IoError("SLCR: write failed");
    return bytes;
}

Coreset load_coreset(std::istream& in) {
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (in.gcount() != 4 || std::string_view(magic.data(), 4) != kMagic) throw FormatError("SLCR: bad magic");
    const auto version = get_le<std::uint16_t>(in, kTruncated, "version");
    if (version != kVersion) throw FormatError("SLCR: unsupported version " + std::to_string(version));
    const auto code = get_le<std::uint8_t>(in, kTruncated, "strategy");
    if (code > 3) throw FormatError("SLCR: unknown strategy code " + std::to_string(code));
    if (get_le<std::uint8_t>(in, kTruncated, "reserved") != 0) throw FormatError("SLCR: reserved byte is not zero");

    Coreset cs;
    cs.strategy = static_cast<Strategy>(code);
    cs.num_classes = get_le<std::uint32_t>(in, kTruncated, "K");
    const auto r = get_le<std::uint32_t>(in, kTruncated, "row count");
    const auto d = get_le<std::uint32_t>(in, kTruncated, "dimension");
    cs.k_used = get_le<std::uint32_t>(in, kTruncated, "k");
    if (r == 0 || d == 0 || cs.num_classes == 0) throw FormatError("SLCR: empty coreset header");
    if (static_cast<std::uint64_t>(r) * d > (std::uint64_t{1} << 32) ||
        static_cast<std::uint64_t>(cs.num_classes) * cs.num_classes > (std::uint64_t{1} << 28))
        throw FormatError("SLCR: header sizes overflow");

    cs.class_labels = read_array<std::uint32_t>(in, r, "class label");
    cs.weights = read_array<float>(in, r, "weight");
    cs.embeddings = Matrix(r, d, read_array<float>(in, static_cast<std::size_t>(r) * d, "embedding"));
    const auto flag = get_le<std::uint32_t>(in, kTruncated, "template flag");
    if (flag > 1) throw FormatError("SLCR: template flag must be 0 or 1");
    if (flag == 1) {
        const std::size_t k = cs.num_classes;
        cs.kl_templates = Matrix(k, k, read_array<float>(in, k * k, "template"));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("SLCR: trailing bytes after coreset");

    try {
        cs.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("SLCR: ") + e.what());
    }
    return cs;
}

Matrix weighted_pool(const Coreset& cs) {
    Matrix out(cs.rows(), cs.dim());
    for (std::size_t i = 0; i < cs.rows(); ++i) {
        const auto src = cs.embeddings.row(i);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] = cs.weights[i] * src[j];
    }
    return out;
}

}  // namespace suplid::coreset
