#include "sgp/pyramid.hpp"

#include <stdexcept>

#include "sgp/errors.hpp"

namespace sgp {

std::span<const float> gaussian5x5() { return detail::blur5x5_kernel(); }

int feasible_depth(Shape in) {
    int d = 0;
    for (int s = std::min(in.h, in.w); s >= 8; s = (s + 1) / 2) ++d;
    return d;
}

SgpPyramid build_sgp(const ImageTensor& x, int m) {
    if (m < 1) throw std::invalid_argument("build_sgp: depth must be >= 1");
    const int fd = feasible_depth(x.shape());
    if (m > fd)
        throw DepthExceededError(m, fd, x.shape().h <= x.shape().w ? "height" : "width");

    SgpPyramid pyr;
    pyr.depth = m;
    pyr.examples.reserve(static_cast<std::size_t>(3 * m - 2));
    pyr.examples.push_back({x, 1, SampleScheme::original, {}});

    const ScaleExample* base = &pyr.examples.front();
    for (int level = 2; level <= m; ++level) {
        const LinearOpDescriptor blur = make_blur_op(base->image.shape());
        const ImageTensor blurred = apply_forward(blur, base->image);

        std::vector<LinearOpDescriptor> prefix = base->chain;
        prefix.push_back(blur);
        for (SampleScheme s : {SampleScheme::rc, SampleScheme::r, SampleScheme::c}) {
            const LinearOpDescriptor down = make_downsample_op(blurred.shape(), s);
            auto chain = prefix;
            chain.push_back(down);
            pyr.examples.push_back({apply_forward(down, blurred), level, s, std::move(chain)});
        }
        // The rc variant just appended first for this level continues the chain.
        base = &pyr.examples[pyr.examples.size() - 3];
    }
    return pyr;
}

ImageTensor pullback_to_input(const ScaleExample& ex, const ImageTensor& grad) {
    if (grad.shape() != ex.image.shape())
        throw std::invalid_argument("pullback_to_input: gradient shape " + grad.shape().str() +
                                    " != example shape " + ex.image.shape().str());
    ImageTensor g = grad;
    for (auto it = ex.chain.rbegin(); it != ex.chain.rend(); ++it) g = apply_adjoint(*it, g);
    return g;
}

} // namespace sgp
