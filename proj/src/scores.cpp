#include "suplid/scores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "suplid/lid.hpp"
#include "suplid/parallel.hpp"

namespace suplid::scores {

namespace {

void check_pool(MatrixView embeddings, const coreset::Coreset& cs, std::string_view op) {
    if (embeddings.cols() != cs.dim())
        throw ValidationError(std::string(op) + ": embedding dimension " + std::to_string(embeddings.cols()) +
                              " does not match coreset dimension " + std::to_string(cs.dim()));
}

std::size_t clamp_k(std::size_t k, std::size_t pool, std::size_t min_k, std::string_view op) {
    if (pool < min_k)
        throw ValidationError(std::string(op) + ": coreset of " + std::to_string(pool) + " rows is too small");
    if (k < min_k) throw ValidationError(std::string(op) + ": k must be >= " + std::to_string(min_k));
    if (k > pool) {
        warn(std::string(op) + ": k clamped from " + std::to_string(k) + " to coreset size " + std::to_string(pool));
        return pool;
    }
    return k;
}

template <typename PerQuery>
std::vector<double> per_row(MatrixView embeddings, PerQuery&& fn) {
    std::vector<double> out(embeddings.rows());
    parallel_for(embeddings.rows(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) out[i] = fn(embeddings.row(i));
    });
    return out;
}

}  // namespace

ConfidenceMethod parse_confidence(std::string_view name) {
    if (name == "msp") return ConfidenceMethod::msp;
    if (name == "maxlogit") return ConfidenceMethod::maxlogit;
    if (name == "energy") return ConfidenceMethod::energy;
    if (name == "entropy") return ConfidenceMethod::entropy;
    if (name == "kl_match" || name == "kl-match" || name == "kl") return ConfidenceMethod::kl_match;
    throw ValidationError("unknown confidence method '" + std::string(name) +
                          "' (expected msp|maxlogit|energy|entropy|kl_match)");
}

std::string_view confidence_name(ConfidenceMethod method) {
    switch (method) {
        case ConfidenceMethod::msp: return "msp";
        case ConfidenceMethod::maxlogit: return "maxlogit";
        case ConfidenceMethod::energy: return "energy";
        case ConfidenceMethod::entropy: return "entropy";
        case ConfidenceMethod::kl_match: return "kl_match";
    }
    return "?";
}

GuidanceMethod parse_guidance(std::string_view name) {
    if (name == "weighted_lid" || name == "weighted-lid") return GuidanceMethod::weighted_lid;
    if (name == "unweighted_lid" || name == "unweighted-lid") return GuidanceMethod::unweighted_lid;
    if (name == "knn_distance" || name == "knn-distance") return GuidanceMethod::knn_distance;
    if (name == "none") return GuidanceMethod::none;
    throw ValidationError("unknown guidance method '" + std::string(name) +
                          "' (expected weighted_lid|unweighted_lid|knn_distance|none)");
}

std::string_view guidance_name(GuidanceMethod method) {
    switch (method) {
        case GuidanceMethod::weighted_lid: return "weighted_lid";
        case GuidanceMethod::unweighted_lid: return "unweighted_lid";
        case GuidanceMethod::knn_distance: return "knn_distance";
        case GuidanceMethod::none: return "none";
    }
    return "?";
}

void FusionConfig::validate() const {
    if (!(rectify_floor > 0.0) || !std::isfinite(rectify_floor)) throw ValidationError("rectify_floor must be > 0");
    if (!std::isfinite(calibration_min)) throw ValidationError("calibration_min must be finite");
    if (k_guidance < 2) throw ValidationError("guidance k must be >= 2");
}

void KlTemplateBuilder::add(const Tensor& logits) {
    logits.expect(DType::f32, {0, 0, 0}, "logit map");
    const std::size_t k = logits.dim(2);
    if (k < 2) throw ValidationError("logit map needs K >= 2 classes");
    if (classes_ == 0) {
        classes_ = k;
        sums_.assign(k * k, 0.0);
        counts_.assign(k, 0);
    } else if (k != classes_) {
        throw ValidationError("logit maps disagree on class count: " + std::to_string(classes_) + " vs " +
                              std::to_string(k));
    }
    const auto data = logits.data<float>();
    const std::size_t n = logits.size() / k;
    std::vector<double> p(k);
    for (std::size_t i = 0; i < n; ++i) {
        const float* l = &data[i * k];
        std::size_t arg = 0;
        for (std::size_t c = 1; c < k; ++c) {
            if (l[c] > l[arg]) arg = c;
        }
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            p[c] = std::exp(static_cast<double>(l[c]) - l[arg]);
            z += p[c];
        }
        double* s = &sums_[arg * k];
        for (std::size_t c = 0; c < k; ++c) s[c] += p[c] / z;
        ++counts_[arg];
    }
    pixels_ += n;
}

KlTemplates KlTemplateBuilder::finish() const {
    if (pixels_ == 0) throw ValidationError("build_kl_templates: no logits were provided");
    KlTemplates t{Matrix(classes_, classes_)};
    for (std::size_t c = 0; c < classes_; ++c) {
        auto row = t.templates.row(c);
        if (counts_[c] == 0) {
            warn("build_kl_templates: class " + std::to_string(c) + " is never predicted; using a uniform template");
            std::fill(row.begin(), row.end(), static_cast<float>(1.0 / static_cast<double>(classes_)));
            continue;
        }
        for (std::size_t j = 0; j < classes_; ++j)
            row[j] = static_cast<float>(sums_[c * classes_ + j] / static_cast<double>(counts_[c]));
    }
    return t;
}

KlTemplates build_kl_templates(std::span<const Tensor> logits) {
    KlTemplateBuilder b;
    for (const auto& l : logits) b.add(l);
    return b.finish();
}

double confidence(std::span<const float> l, ConfidenceMethod method, const KlTemplates* templates) {
    const std::size_t k = l.size();
    double mx = -std::numeric_limits<double>::infinity();
    for (float v : l) mx = std::max(mx, static_cast<double>(v));
    double z = 0.0;
    for (float v : l) z += std::exp(static_cast<double>(v) - mx);
    const double lse = mx + std::log(z);

    switch (method) {
        case ConfidenceMethod::msp: return std::exp(mx - lse);
        case ConfidenceMethod::maxlogit: return mx;
        case ConfidenceMethod::energy: return lse;
        case ConfidenceMethod::entropy: {
            double h = 0.0;
            for (float v : l) {
                const double logp = static_cast<double>(v) - lse;
                h -= std::exp(logp) * logp;
            }
            return std::log(static_cast<double>(k)) - h;
        }
        case ConfidenceMethod::kl_match: {
            if (!templates) throw ValidationError("kl_match confidence needs KL templates");
            if (templates->num_classes() != k)
                throw ValidationError("KL templates have " + std::to_string(templates->num_classes()) +
                                      " classes, logits have " + std::to_string(k));
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const auto d = templates->templates.row(c);
                double kl = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    if (d[j] > 0.0f) kl += d[j] * (std::log(static_cast<double>(d[j])) - (l[j] - lse));
                }
                best = std::min(best, kl);
            }
            return -best;
        }
    }
    throw ValidationError("unknown confidence method");
}

Tensor confidence_from_logits(const Tensor& logits, ConfidenceMethod method, const KlTemplates* templates) {
    logits.expect(DType::f32, {0, 0, 0}, "logit map");
    const std::size_t h = logits.dim(0), w = logits.dim(1), k = logits.dim(2);
    if (k < 2) throw ValidationError("logit map needs K >= 2 classes");
    if (method == ConfidenceMethod::kl_match && !templates)
        throw ValidationError("kl_match confidence needs KL templates");
    const auto data = logits.data<float>();
    Tensor out = Tensor::zeros<float>({h, w});
    auto dst = out.data<float>();
    parallel_for(h * w, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto l = data.subspan(i * k, k);
            for (float v : l) {
                if (!std::isfinite(v)) throw ValidationError("logit map contains non-finite values");
            }
            dst[i] = static_cast<float>(confidence(l, method, templates));
        }
    });
    return out;
}

std::vector<double> aggregate_confidence(const Tensor& pixel_conf, const slic::SuperpixelPartition& partition) {
    pixel_conf.expect(DType::f32, {partition.height(), partition.width()}, "confidence map");
    const auto conf = pixel_conf.data<float>();
    const auto labels = partition.labels.data<std::int32_t>();
    std::vector<double> sum(partition.num_superpixels, 0.0);
    for (std::size_t i = 0; i < conf.size(); ++i) sum[static_cast<std::size_t>(labels[i])] += conf[i];
    for (std::size_t l = 0; l < sum.size(); ++l) sum[l] /= static_cast<double>(partition.pixel_counts[l]);
    return sum;
}

std::vector<double> rectify(std::span<const double> s, const FusionConfig& config) {
    config.validate();
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isfinite(s[i])) throw ValidationError("rectify: non-finite confidence");
        out[i] = std::max(s[i] - config.calibration_min, 0.0) + config.rectify_floor;
    }
    return out;
}

std::vector<double> guidance_score(MatrixView embeddings, const coreset::Coreset& cs, GuidanceMethod method,
                                   std::size_t k, double floor) {
    if (method == GuidanceMethod::none) return std::vector<double>(embeddings.rows(), 1.0);
    check_pool(embeddings, cs, "guidance_score");
    const std::size_t k_eff = clamp_k(k, cs.rows(), 2, "guidance_score");

    Matrix scaled;
    MatrixView pool = cs.embeddings;
    if (method != GuidanceMethod::unweighted_lid) {
        scaled = coreset::weighted_pool(cs);
        pool = scaled;
    }

    if (method == GuidanceMethod::knn_distance) {
        return per_row(embeddings, [&](std::span<const float> q) {
            const auto nn = lid::knn_search(q, pool, k_eff);
            double mean = 0.0;
            for (double d : nn.distances) mean += d;
            mean /= static_cast<double>(nn.distances.size());
            return 1.0 / (floor + mean);
        });
    }

    const lid::LidParams params{.k = k_eff};
    return per_row(embeddings, [&](std::span<const float> q) {
        return lid::lid_mle(lid::knn_search(q, pool, k_eff).distances, params);
    });
}

std::vector<double> fuse(std::span<const double> conf, std::span<const double> guid) {
    if (conf.size() != guid.size())
        throw ValidationError("fuse: " + std::to_string(conf.size()) + " confidences vs " +
                              std::to_string(guid.size()) + " guidance scores");
    std::vector<double> out(conf.size());
    for (std::size_t i = 0; i < conf.size(); ++i) out[i] = conf[i] * guid[i];
    return out;
}

Tensor broadcast_to_pixels(std::span<const double> per_superpixel, const slic::SuperpixelPartition& partition) {
    if (per_superpixel.size() != partition.num_superpixels)
        throw ValidationError("broadcast_to_pixels: " + std::to_string(per_superpixel.size()) + " scores for " +
                              std::to_string(partition.num_superpixels) + " superpixels");
    const auto labels = partition.labels.data<std::int32_t>();
    Tensor out = Tensor::zeros<float>({partition.height(), partition.width()});
    auto dst = out.data<float>();
    for (std::size_t i = 0; i < labels.size(); ++i)
        dst[i] = static_cast<float>(per_superpixel[static_cast<std::size_t>(labels[i])]);
    return out;
}

std::vector<double> knn_baseline(MatrixView embeddings, const coreset::Coreset& cs, std::size_t k) {
    check_pool(embeddings, cs, "knn_baseline");
    const std::size_t k_eff = clamp_k(k, cs.rows(), 1, "knn_baseline");
    return per_row(embeddings, [&](std::span<const float> q) {
        return -lid::knn_search(q, cs.embeddings, k_eff).distances.back();
    });
}

std::vector<double> nnguide_baseline(std::span<const double> rectified, MatrixView embeddings,
                                     const coreset::Coreset& cs, std::size_t k) {
    check_pool(embeddings, cs, "nnguide_baseline");
    if (rectified.size() != embeddings.rows())
        throw ValidationError("nnguide_baseline: confidence and embedding counts differ");
    const std::size_t k_eff = clamp_k(k, cs.rows(), 1, "nnguide_baseline");
    auto guide = per_row(embeddings, [&](std::span<const float> q) {
        const auto nn = lid::knn_search(q, cs.embeddings, k_eff);
        double mean = 0.0;
        for (auto idx : nn.indices) {
            const auto z = cs.embeddings.row(idx);
            double dot = 0.0;
            for (std::size_t j = 0; j < q.size(); ++j) dot += static_cast<double>(q[j]) * z[j];
            mean += dot;
        }
        return mean / static_cast<double>(nn.indices.size());
    });
    for (std::size_t i = 0; i < guide.size(); ++i) guide[i] *= rectified[i];
    return guide;
}

Tensor threshold_map(const Tensor& score_map, double tau) {
    score_map.expect(DType::f32, {0, 0}, "score map");
    const auto s = score_map.data<float>();
    Tensor out = Tensor::zeros<std::uint8_t>(score_map.shape());
    auto dst = out.data<std::uint8_t>();
    for (std::size_t i = 0; i < s.size(); ++i) dst[i] = s[i] >= tau ? 0 : 1;
    return out;
}

}  // namespace suplid::scores
