#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "suplid/tensor.hpp"

namespace suplid::eval {

inline constexpr std::uint8_t kMaskId = 0;
inline constexpr std::uint8_t kMaskOod = 1;
inline constexpr std::uint8_t kMaskIgnore = 255;

// OOD is the positive class throughout.
struct EvalReport {
    double auroc = 0.0;
    double aupr = 0.0;
    double fpr_at_95tpr = 0.0;
    double best_f1 = 0.0;  // pixel-level, not the benchmark's component F1
    std::size_t n_ood = 0;
    std::size_t n_id = 0;
    std::size_t n_ignored = 0;
};

struct SweepPoint {
    double threshold;  // predict OOD where anomaly >= threshold
    std::size_t tp, fp, fn, tn;
};

// One entry per distinct anomaly score, descending. labels[i] is true for OOD.
std::vector<SweepPoint> sweep_thresholds(std::span<const double> anomaly, std::span<const std::uint8_t> is_ood);

// Metrics from raw anomaly scores (higher = more anomalous).
EvalReport evaluate_anomaly(std::span<const double> anomaly, std::span<const std::uint8_t> is_ood);

// Pixel-pooled metrics over score maps (higher = more in-distribution) and
// masks {0 = ID, 1 = OOD, 255 = ignore}.
EvalReport evaluate(std::span<const Tensor> score_maps, std::span<const Tensor> masks);

}  // namespace suplid::eval
