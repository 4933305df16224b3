#include "suplid/superpixel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "suplid/parallel.hpp"

namespace suplid::slic {

namespace {

struct Center {
    double l, a, b, y, x;
};

// Labels components with 4-connectivity in scan order. Returns the component
// count; comp[i] receives the component of pixel i.
std::size_t label_components(std::span<const std::int32_t> labels, std::size_t h, std::size_t w,
                             std::vector<std::int32_t>& comp) {
    comp.assign(h * w, -1);
    std::vector<std::size_t> stack;
    std::int32_t next = 0;
    for (std::size_t start = 0; start < h * w; ++start) {
        if (comp[start] >= 0) continue;
        const std::int32_t value = labels[start];
        comp[start] = next;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t p = stack.back();
            stack.pop_back();
            const std::size_t y = p / w;
            const std::size_t x = p % w;
            const auto visit = [&](std::size_t q) {
                if (comp[q] < 0 && labels[q] == value) {
                    comp[q] = next;
                    stack.push_back(q);
                }
            };
            if (x > 0) visit(p - 1);
            if (x + 1 < w) visit(p + 1);
            if (y > 0) visit(p - w);
            if (y + 1 < h) visit(p + w);
        }
        ++next;
    }
    return static_cast<std::size_t>(next);
}

double lab_gradient(std::span<const float> lab, std::size_t h, std::size_t w, std::size_t y, std::size_t x) {
    const auto at = [&](std::size_t yy, std::size_t xx) { return &lab[(yy * w + xx) * 3]; };
    const std::size_t xl = x > 0 ? x - 1 : x;
    const std::size_t xr = x + 1 < w ? x + 1 : x;
    const std::size_t yu = y > 0 ? y - 1 : y;
    const std::size_t yd = y + 1 < h ? y + 1 : y;
    double g = 0.0;
    for (int c = 0; c < 3; ++c) {
        const double dx = static_cast<double>(at(y, xr)[c]) - at(y, xl)[c];
        const double dy = static_cast<double>(at(yd, x)[c]) - at(yu, x)[c];
        g += dx * dx + dy * dy;
    }
    return g;
}

}  // namespace

void SlicParams::validate() const {
    if (pixels_per_superpixel == 0) throw ValidationError("pixels_per_superpixel must be positive");
    if (!(compactness > 0.0) || !std::isfinite(compactness)) throw ValidationError("compactness must be positive");
    if (max_iterations == 0) throw ValidationError("max_iterations must be positive");
    if (!(min_region_fraction > 0.0 && min_region_fraction <= 1.0))
        throw ValidationError("min_region_fraction must be in (0, 1]");
}

SuperpixelPartition make_partition(Tensor labels) {
    labels.expect(DType::i32, {0, 0}, "superpixel labels");
    const std::size_t h = labels.dim(0);
    const std::size_t w = labels.dim(1);
    const auto lab = labels.data<std::int32_t>();

    std::int32_t max_label = -1;
    for (auto v : lab) {
        if (v < 0) throw ValidationError("superpixel labels must be non-negative");
        max_label = std::max(max_label, v);
    }
    SuperpixelPartition part;
    part.num_superpixels = static_cast<std::size_t>(max_label) + 1;
    part.pixel_counts.assign(part.num_superpixels, 0);
    std::vector<double> sum_row(part.num_superpixels, 0.0);
    std::vector<double> sum_col(part.num_superpixels, 0.0);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const auto l = static_cast<std::size_t>(lab[y * w + x]);
            ++part.pixel_counts[l];
            sum_row[l] += static_cast<double>(y);
            sum_col[l] += static_cast<double>(x);
        }
    }
    part.centroids.resize(part.num_superpixels);
    for (std::size_t l = 0; l < part.num_superpixels; ++l) {
        if (part.pixel_counts[l] == 0)
            throw ValidationError("superpixel labels are not dense: label " + std::to_string(l) + " is unused");
        const auto n = static_cast<double>(part.pixel_counts[l]);
        part.centroids[l] = {sum_row[l] / n, sum_col[l] / n};
    }
    part.labels = std::move(labels);
    return part;
}

Tensor rgb_to_lab(const Tensor& image) {
    image.expect(DType::u8, {0, 0, 3}, "RGB image");
    const std::size_t h = image.dim(0);
    const std::size_t w = image.dim(1);

    std::array<double, 256> linear{};
    for (int i = 0; i < 256; ++i) {
        const double c = i / 255.0;
        linear[static_cast<std::size_t>(i)] = c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
    }
    constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;
    constexpr double eps = 216.0 / 24389.0;  // (6/29)^3
    constexpr double kappa = 24389.0 / 27.0;
    const auto f = [](double t) { return t > eps ? std::cbrt(t) : (kappa * t + 16.0) / 116.0; };

    const auto rgb = image.data<std::uint8_t>();
    Tensor out = Tensor::zeros<float>({h, w, 3});
    auto lab = out.data<float>();
    parallel_for(h * w, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const double r = linear[rgb[3 * i]];
            const double g = linear[rgb[3 * i + 1]];
            const double b = linear[rgb[3 * i + 2]];
            const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
            const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
            const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
            const double fx = f(x / xn), fy = f(y / yn), fz = f(z / zn);
            lab[3 * i] = static_cast<float>(116.0 * fy - 16.0);
            lab[3 * i + 1] = static_cast<float>(500.0 * (fx - fy));
            lab[3 * i + 2] = static_cast<float>(200.0 * (fy - fz));
        }
    });
    return out;
}

std::size_t requested_superpixels(std::size_t height, std::size_t width, std::size_t pixels_per_superpixel) {
    if (pixels_per_superpixel == 0) throw ValidationError("pixels_per_superpixel must be positive");
    return (height * width) / pixels_per_superpixel;
}

SuperpixelPartition slic_segment(const Tensor& image, const SlicParams& params) {
    params.validate();
    image.expect(DType::u8, {0, 0, 3}, "RGB image");
    const std::size_t h = image.dim(0);
    const std::size_t w = image.dim(1);
    const std::size_t n_req = requested_superpixels(h, w, params.pixels_per_superpixel);
    if (n_req == 0)
        throw ValidationError("image of " + std::to_string(h * w) + " pixels is smaller than one superpixel (" +
                              std::to_string(params.pixels_per_superpixel) + " pixels)");

    const Tensor lab_t = rgb_to_lab(image);
    const auto lab = lab_t.data<float>();
    const double area = static_cast<double>(h * w) / static_cast<double>(n_req);
    const double step = std::sqrt(area);

    // Grid: rows follow the spacing, columns are chosen to hit the requested count.
    const std::size_t ny = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(h / step)), 1, h);
    const std::size_t nx = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(static_cast<double>(n_req) / static_cast<double>(ny))), 1, w);

    std::vector<Center> centers;
    centers.reserve(nx * ny);
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            const auto cy = static_cast<std::size_t>((j + 0.5) * static_cast<double>(h) / static_cast<double>(ny));
            const auto cx = static_cast<std::size_t>((i + 0.5) * static_cast<double>(w) / static_cast<double>(nx));
            // Move to the lowest-gradient pixel of the 3x3 neighborhood; the
            // grid position wins ties, then scan order.
            std::size_t by = cy, bx = cx;
            double best = lab_gradient(lab, h, w, cy, cx);
            for (std::size_t yy = cy > 0 ? cy - 1 : 0; yy <= std::min(cy + 1, h - 1); ++yy) {
                for (std::size_t xx = cx > 0 ? cx - 1 : 0; xx <= std::min(cx + 1, w - 1); ++xx) {
                    const double g = lab_gradient(lab, h, w, yy, xx);
                    if (g < best) {
                        best = g;
                        by = yy;
                        bx = xx;
                    }
                }
            }
            const float* p = &lab[(by * w + bx) * 3];
            centers.push_back({p[0], p[1], p[2], static_cast<double>(by), static_cast<double>(bx)});
        }
    }

    const double spatial_weight = (params.compactness * params.compactness) / (step * step);
    const auto distance = [&](const Center& c, std::size_t y, std::size_t x, const float* px) {
        const double dl = px[0] - c.l, da = px[1] - c.a, db = px[2] - c.b;
        const double dy = static_cast<double>(y) - c.y, dx = static_cast<double>(x) - c.x;
        return dl * dl + da * da + db * db + (dy * dy + dx * dx) * spatial_weight;
    };

    Tensor labels_t = Tensor::zeros<std::int32_t>({h, w});
    auto labels = labels_t.data<std::int32_t>();
    const std::size_t buckets_y = static_cast<std::size_t>(std::ceil(h / step)) + 1;
    const std::size_t buckets_x = static_cast<std::size_t>(std::ceil(w / step)) + 1;
    std::vector<std::vector<std::uint32_t>> buckets(buckets_y * buckets_x);

    for (std::size_t iter = 0; iter < params.max_iterations; ++iter) {
        for (auto& b : buckets) b.clear();
        for (std::size_t c = 0; c < centers.size(); ++c) {
            const auto by = std::min(buckets_y - 1, static_cast<std::size_t>(std::max(0.0, centers[c].y / step)));
            const auto bx = std::min(buckets_x - 1, static_cast<std::size_t>(std::max(0.0, centers[c].x / step)));
            buckets[by * buckets_x + bx].push_back(static_cast<std::uint32_t>(c));
        }

        // Assignment reads only the frozen centers; each row writes its own labels.
        parallel_for(h, [&](std::size_t row_begin, std::size_t row_end) {
            for (std::size_t y = row_begin; y < row_end; ++y) {
                const auto by0 = static_cast<std::ptrdiff_t>(std::floor((static_cast<double>(y) - step) / step));
                const auto by1 = static_cast<std::ptrdiff_t>(std::floor((static_cast<double>(y) + step) / step));
                for (std::size_t x = 0; x < w; ++x) {
                    const float* px = &lab[(y * w + x) * 3];
                    const auto bx0 = static_cast<std::ptrdiff_t>(std::floor((static_cast<double>(x) - step) / step));
                    const auto bx1 = static_cast<std::ptrdiff_t>(std::floor((static_cast<double>(x) + step) / step));
                    double best = std::numeric_limits<double>::infinity();
                    std::uint32_t best_c = std::numeric_limits<std::uint32_t>::max();
                    for (auto byy = std::max<std::ptrdiff_t>(by0, 0);
                         byy <= std::min<std::ptrdiff_t>(by1, static_cast<std::ptrdiff_t>(buckets_y) - 1); ++byy) {
                        for (auto bxx = std::max<std::ptrdiff_t>(bx0, 0);
                             bxx <= std::min<std::ptrdiff_t>(bx1, static_cast<std::ptrdiff_t>(buckets_x) - 1); ++bxx) {
                            for (std::uint32_t c : buckets[static_cast<std::size_t>(byy) * buckets_x +
                                                           static_cast<std::size_t>(bxx)]) {
                                const Center& ctr = centers[c];
                                if (std::abs(ctr.y - static_cast<double>(y)) > step ||
                                    std::abs(ctr.x - static_cast<double>(x)) > step)
                                    continue;
                                const double d = distance(ctr, y, x, px);
                                if (d < best || (d == best && c < best_c)) {
                                    best = d;
                                    best_c = c;
                                }
                            }
                        }
                    }
                    if (best_c == std::numeric_limits<std::uint32_t>::max()) {
                        // No window covers this pixel (degenerate aspect ratios).
                        for (std::uint32_t c = 0; c < centers.size(); ++c) {
                            const double d = distance(centers[c], y, x, px);
                            if (d < best) {
                                best = d;
                                best_c = c;
                            }
                        }
                    }
                    labels[y * w + x] = static_cast<std::int32_t>(best_c);
                }
            }
        });

        // Update in label order; empty clusters keep their previous center.
        std::vector<std::array<double, 5>> sums(centers.size(), {0, 0, 0, 0, 0});
        std::vector<std::size_t> counts(centers.size(), 0);
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const auto c = static_cast<std::size_t>(labels[y * w + x]);
                const float* px = &lab[(y * w + x) * 3];
                auto& s = sums[c];
                s[0] += px[0];
                s[1] += px[1];
                s[2] += px[2];
                s[3] += static_cast<double>(y);
                s[4] += static_cast<double>(x);
                ++counts[c];
            }
        }
        for (std::size_t c = 0; c < centers.size(); ++c) {
            if (counts[c] == 0) continue;
            const auto n = static_cast<double>(counts[c]);
            centers[c] = {sums[c][0] / n, sums[c][1] / n, sums[c][2] / n, sums[c][3] / n, sums[c][4] / n};
        }
    }

    return make_partition(enforce_connectivity(labels_t, area, params.min_region_fraction));
}

Tensor enforce_connectivity(const Tensor& labels_t, double expected_area, double min_region_fraction) {
    labels_t.expect(DType::i32, {0, 0}, "superpixel labels");
    if (!(expected_area > 0.0)) throw ValidationError("expected_area must be positive");
    const std::size_t h = labels_t.dim(0);
    const std::size_t w = labels_t.dim(1);
    const auto labels = labels_t.data<std::int32_t>();

    std::vector<std::int32_t> comp;
    const std::size_t n = label_components(labels, h, w, comp);

    std::vector<std::size_t> size(n, 0);
    std::vector<std::set<std::uint32_t>> adj(n);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const auto a = static_cast<std::uint32_t>(comp[y * w + x]);
            ++size[a];
            if (x + 1 < w) {
                const auto b = static_cast<std::uint32_t>(comp[y * w + x + 1]);
                if (a != b) {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
            if (y + 1 < h) {
                const auto b = static_cast<std::uint32_t>(comp[(y + 1) * w + x]);
                if (a != b) {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
        }
    }

    const double threshold = min_region_fraction * expected_area;
    std::vector<std::uint32_t> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<std::uint32_t>(i);
    std::set<std::pair<std::size_t, std::uint32_t>> small;
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<double>(size[i]) < threshold) small.insert({size[i], static_cast<std::uint32_t>(i)});
    }

    while (!small.empty()) {
        const auto [sz, a] = *small.begin();
        small.erase(small.begin());
        if (adj[a].empty()) continue;  // the whole image is one component
        std::uint32_t b = *adj[a].begin();
        for (std::uint32_t cand : adj[a]) {
            if (size[cand] > size[b]) b = cand;  // set order keeps the lower id on ties
        }
        const bool b_small = static_cast<double>(size[b]) < threshold;
        if (b_small) small.erase({size[b], b});

        parent[a] = b;
        size[b] += size[a];
        for (std::uint32_t nb : adj[a]) {
            if (nb == b) continue;
            adj[nb].erase(a);
            adj[nb].insert(b);
            adj[b].insert(nb);
        }
        adj[b].erase(a);
        adj[a].clear();
        if (static_cast<double>(size[b]) < threshold) small.insert({size[b], b});
    }

    const auto find = [&](std::uint32_t c) {
        while (parent[c] != c) c = parent[c];
        return c;
    };
    std::vector<std::int32_t> dense(n, -1);
    std::int32_t next = 0;
    Tensor out = Tensor::zeros<std::int32_t>({h, w});
    auto dst = out.data<std::int32_t>();
    for (std::size_t i = 0; i < h * w; ++i) {
        const auto root = find(static_cast<std::uint32_t>(comp[i]));
        if (dense[root] < 0) dense[root] = next++;
        dst[i] = dense[root];
    }
    return out;
}

std::size_t count_components(const Tensor& labels) {
    labels.expect(DType::i32, {0, 0}, "label map");
    std::vector<std::int32_t> comp;
    return label_components(labels.data<std::int32_t>(), labels.dim(0), labels.dim(1), comp);
}

}  // namespace suplid::slic
