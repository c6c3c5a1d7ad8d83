#pragma once

#include <span>
#include <vector>

#include "sgp/tensor.hpp"

namespace sgp {

// Row-major 5x5 binomial smoothing kernel: outer product of [1 4 6 4 1]/16
// with itself, so the center weight is 36/256 and the corners 1/256.
std::span<const float> gaussian5x5();

// Largest layer count for which every layer keeps min(h, w) >= 8 under
// repeated ceil-halving: 32 -> 3, 299 -> 6, 8 -> 1, 7 -> 0.
int feasible_depth(Shape in);

struct ScaleExample {
    ImageTensor image;
    int level;                             // 1-based layer index
    SampleScheme scheme;                   // `original` for the base example
    std::vector<LinearOpDescriptor> chain; // linear ops mapping the input here
};

struct SgpPyramid {
    std::vector<ScaleExample> examples; // 3m - 2 entries
    int depth = 0;                      // m
};

// Layer 1 is the input itself. Every further layer blurs the previous
// row+column image and keeps all three subsampled variants; the row+column
// one carries the chain forward while the row-only and column-only images
// are side branches. Example order: level 1, then per level rc, r, c.
// Throws DepthExceededError when m exceeds feasible_depth(x.shape()).
SgpPyramid build_sgp(const ImageTensor& x, int m);

// Maps a gradient living at the example's scale back to input scale by
// applying the chain's adjoints in reverse.
ImageTensor pullback_to_input(const ScaleExample& ex, const ImageTensor& grad);

} // namespace sgp
