#pragma once

#include <cstddef>
#include <vector>

#include "suplid/tensor.hpp"

namespace suplid::slic {

struct SlicParams {
    std::size_t pixels_per_superpixel = 200;
    double compactness = 10.0;
    std::size_t max_iterations = 10;
    // Connected regions smaller than this fraction of the expected superpixel
    // area are merged into their largest 4-adjacent neighbor.
    double min_region_fraction = 0.25;

    void validate() const;
};

struct Centroid {
    double row = 0.0;
    double col = 0.0;
};

struct SuperpixelPartition {
    Tensor labels;  // i32 [H, W], dense in [0, num_superpixels)
    std::size_t num_superpixels = 0;
    std::vector<std::size_t> pixel_counts;
    std::vector<Centroid> centroids;

    std::size_t height() const { return labels.dim(0); }
    std::size_t width() const { return labels.dim(1); }
};

// Builds the bookkeeping for a dense label map. Throws ValidationError when a
// label is negative or a label in [0, max] is unused.
SuperpixelPartition make_partition(Tensor labels);

// sRGB (D65) to CIELAB. u8 [H, W, 3] -> f32 [H, W, 3].
Tensor rgb_to_lab(const Tensor& image);

// Number of superpixels requested for an image: floor(H*W / pixels_per_superpixel).
std::size_t requested_superpixels(std::size_t height, std::size_t width, std::size_t pixels_per_superpixel);

SuperpixelPartition slic_segment(const Tensor& image, const SlicParams& params);

// Splits every label into its 4-connected components, then repeatedly merges
// the smallest component below min_region_fraction * expected_area into its
// largest neighbor (ties: lower component id). Output labels are dense and
// numbered by first appearance in scan order.
Tensor enforce_connectivity(const Tensor& labels, double expected_area, double min_region_fraction);

// Number of 4-connected components in a label map (all labels together).
std::size_t count_components(const Tensor& labels);

}  // namespace suplid::slic
