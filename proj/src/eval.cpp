#include "suplid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace suplid::eval {

namespace {

__extension__ using u128 = unsigned __int128;

struct Counts {
    std::size_t pos = 0;
    std::size_t neg = 0;
};

Counts count_classes(std::span<const double> anomaly, std::span<const std::uint8_t> is_ood) {
    if (anomaly.size() != is_ood.size()) throw ValidationError("scores and labels differ in length");
    if (anomaly.empty()) throw ValidationError("no scores to evaluate");
    Counts c;
    for (std::size_t i = 0; i < anomaly.size(); ++i) {
        if (!std::isfinite(anomaly[i])) throw ValidationError("anomaly scores must be finite");
        is_ood[i] ? ++c.pos : ++c.neg;
    }
    if (c.pos == 0) throw ValidationError("no OOD (positive) pixels to evaluate");
    if (c.neg == 0) throw ValidationError("no ID (negative) pixels to evaluate");
    return c;
}

std::vector<std::size_t> order_descending(std::span<const double> anomaly) {
    std::vector<std::size_t> order(anomaly.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return anomaly[a] > anomaly[b]; });
    return order;
}

}  // namespace

std::vector<SweepPoint> sweep_thresholds(std::span<const double> anomaly, std::span<const std::uint8_t> is_ood) {
    const Counts c = count_classes(anomaly, is_ood);
    const auto order = order_descending(anomaly);
    std::vector<SweepPoint> out;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = anomaly[order[i]];
        for (; i < order.size() && anomaly[order[i]] == t; ++i) is_ood[order[i]] ? ++tp : ++fp;
        out.push_back({t, tp, fp, c.pos - tp, c.neg - fp});
    }
    return out;
}

EvalReport evaluate_anomaly(std::span<const double> anomaly, std::span<const std::uint8_t> is_ood) {
    const Counts c = count_classes(anomaly, is_ood);
    EvalReport r;
    r.n_ood = c.pos;
    r.n_id = c.neg;

    // Mann-Whitney U with average ranks. Ranks are doubled so tie groups stay
    // integral: a group occupying ascending ranks [lo, hi] has 2*avg = lo + hi.
    std::vector<std::size_t> asc(anomaly.size());
    std::iota(asc.begin(), asc.end(), std::size_t{0});
    std::sort(asc.begin(), asc.end(), [&](std::size_t a, std::size_t b) { return anomaly[a] < anomaly[b]; });
    u128 rank_sum2 = 0;
    for (std::size_t i = 0; i < asc.size();) {
        std::size_t j = i;
        while (j + 1 < asc.size() && anomaly[asc[j + 1]] == anomaly[asc[i]]) ++j;
        const u128 twice_avg = static_cast<u128>(i + 1) + (j + 1);
        for (std::size_t t = i; t <= j; ++t) {
            if (is_ood[asc[t]]) rank_sum2 += twice_avg;
        }
        i = j + 1;
    }
    const u128 u2 = rank_sum2 - static_cast<u128>(c.pos) * (c.pos + 1);
    r.auroc = static_cast<double>(static_cast<long double>(u2) /
                                  (2.0L * static_cast<long double>(c.pos) * static_cast<long double>(c.neg)));

    const auto sweep = sweep_thresholds(anomaly, is_ood);
    double prev_recall = 0.0;
    bool fpr_set = false;
    for (const auto& p : sweep) {
        const double recall = static_cast<double>(p.tp) / static_cast<double>(c.pos);
        const double precision = static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fp);
        r.aupr += (recall - prev_recall) * precision;
        prev_recall = recall;
        if (!fpr_set && p.tp * 100 >= c.pos * 95) {
            r.fpr_at_95tpr = static_cast<double>(p.fp) / static_cast<double>(c.neg);
            fpr_set = true;
        }
        if (p.tp > 0) r.best_f1 = std::max(r.best_f1, 2.0 * precision * recall / (precision + recall));
    }
    return r;
}

EvalReport evaluate(std::span<const Tensor> score_maps, std::span<const Tensor> masks) {
    if (score_maps.size() != masks.size())
        throw ValidationError("evaluate: " + std::to_string(score_maps.size()) + " score maps vs " +
                              std::to_string(masks.size()) + " masks");
    std::vector<double> anomaly;
    std::vector<std::uint8_t> is_ood;
    std::size_t ignored = 0;
    for (std::size_t i = 0; i < score_maps.size(); ++i) {
        score_maps[i].expect(DType::f32, {0, 0}, "score map " + std::to_string(i));
        masks[i].expect(DType::u8, {score_maps[i].dim(0), score_maps[i].dim(1)},
                        "mask " + std::to_string(i) + " (must match its score map)");
        const auto s = score_maps[i].data<float>();
        const auto m = masks[i].data<std::uint8_t>();
        for (std::size_t p = 0; p < s.size(); ++p) {
            if (m[p] == kMaskIgnore) {
                ++ignored;
                continue;
            }
            if (m[p] != kMaskId && m[p] != kMaskOod)
                throw ValidationError("mask " + std::to_string(i) + " contains value " + std::to_string(m[p]) +
                                      " (expected 0, 1 or 255)");
            anomaly.push_back(-static_cast<double>(s[p]));
            is_ood.push_back(m[p]);
        }
    }
    EvalReport r = evaluate_anomaly(anomaly, is_ood);
    r.n_ignored = ignored;
    return r;
}

}  // namespace suplid::eval
