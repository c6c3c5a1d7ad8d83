#include "sgp/tensor.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "sgp/kernels.hpp"

namespace sgp {
namespace {

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

int ceil_half(int n) { return (n + 1) / 2; }

// Source taps and interpolation weight for one output coordinate under
// half-pixel-center alignment, clamped at the borders.
struct LerpCoord {
    int i0;
    int i1;
    float t;
};

LerpCoord lerp_coord(int dst, int in_n, int out_n) {
    const double s = (dst + 0.5) * (static_cast<double>(in_n) / out_n) - 0.5;
    if (s <= 0.0) return {0, 0, 0.0f};
    if (s >= in_n - 1) return {in_n - 1, in_n - 1, 0.0f};
    const int i0 = static_cast<int>(s);
    return {i0, i0 + 1, static_cast<float>(s - i0)};
}

const std::array<float, 25>& blur5x5_coeffs() {
    static const std::array<float, 25> k = [] {
        constexpr int grid[5] = {1, 4, 6, 4, 1};
        std::array<float, 25> out{};
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 5; ++x)
                out[y * 5 + x] = static_cast<float>(grid[y] * grid[x]) / 256.0f;
        return out;
    }();
    return k;
}

} // namespace

const char* to_string(LinearOpKind kind) {
    switch (kind) {
        case LinearOpKind::blur5x5: return "blur5x5";
        case LinearOpKind::downsample_rc: return "downsample_rc";
        case LinearOpKind::downsample_r: return "downsample_r";
        case LinearOpKind::downsample_c: return "downsample_c";
        case LinearOpKind::resize_bilinear: return "resize_bilinear";
    }
    return "?";
}

ImageTensor conv2d_reflect(const ImageTensor& img, std::span<const float> kernel, int ksize) {
    if (ksize < 1 || ksize % 2 == 0)
        throw std::invalid_argument("conv2d_reflect: kernel side must be odd, got " +
                                    std::to_string(ksize));
    if (kernel.size() != static_cast<std::size_t>(ksize) * ksize)
        throw std::invalid_argument("conv2d_reflect: kernel size mismatch");
    if (img.shape().count() == 0) throw std::invalid_argument("conv2d_reflect: empty image");

    const auto& K = kernels::active();
    ImageTensor out(img.shape());
    for (int c = 0; c < img.channels(); ++c)
        K.conv2d_reflect_plane(img.plane(c), img.height(), img.width(), kernel.data(), ksize,
                               out.plane(c));
    return out;
}

Shape downsample_shape(Shape in, SampleScheme scheme) {
    switch (scheme) {
        case SampleScheme::rc: return {in.c, ceil_half(in.h), ceil_half(in.w)};
        case SampleScheme::r: return {in.c, ceil_half(in.h), in.w};
        case SampleScheme::c: return {in.c, in.h, ceil_half(in.w)};
        case SampleScheme::original: break;
    }
    throw std::invalid_argument("downsample: scheme must be rc, r or c");
}

ImageTensor downsample(const ImageTensor& img, SampleScheme scheme) {
    const Shape out_shape = downsample_shape(img.shape(), scheme);
    const int sy = (scheme == SampleScheme::rc || scheme == SampleScheme::r) ? 2 : 1;
    const int sx = (scheme == SampleScheme::rc || scheme == SampleScheme::c) ? 2 : 1;

    ImageTensor out(out_shape);
    for (int c = 0; c < out_shape.c; ++c)
        for (int y = 0; y < out_shape.h; ++y)
            for (int x = 0; x < out_shape.w; ++x) out.at(c, y, x) = img.at(c, y * sy, x * sx);
    return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("resize_bilinear: target dims must be >= 1");

    const int in_h = img.height();
    const int in_w = img.width();
    std::vector<LerpCoord> ys(out_h), xs(out_w);
    for (int y = 0; y < out_h; ++y) ys[y] = lerp_coord(y, in_h, out_h);
    for (int x = 0; x < out_w; ++x) xs[x] = lerp_coord(x, in_w, out_w);

    ImageTensor out(img.channels(), out_h, out_w);
    for (int c = 0; c < img.channels(); ++c) {
        for (int y = 0; y < out_h; ++y) {
            const LerpCoord ry = ys[y];
            for (int x = 0; x < out_w; ++x) {
                const LerpCoord rx = xs[x];
                const float a = img.at(c, ry.i0, rx.i0);
                const float b = img.at(c, ry.i0, rx.i1);
                const float d = img.at(c, ry.i1, rx.i0);
                const float e = img.at(c, ry.i1, rx.i1);
                // Lerp form keeps constants exact and identity resizes bitwise.
                const float top = a + rx.t * (b - a);
                const float bot = d + rx.t * (e - d);
                out.at(c, y, x) = top + ry.t * (bot - top);
            }
        }
    }
    return out;
}

ImageTensor resize_nearest(const ImageTensor& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("resize_nearest: target dims must be >= 1");

    ImageTensor out(img.channels(), out_h, out_w);
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < out_h; ++y) {
            const LerpCoord ry = lerp_coord(y, img.height(), out_h);
            const int sy = ry.t < 0.5f ? ry.i0 : ry.i1;
            for (int x = 0; x < out_w; ++x) {
                const LerpCoord rx = lerp_coord(x, img.width(), out_w);
                out.at(c, y, x) = img.at(c, sy, rx.t < 0.5f ? rx.i0 : rx.i1);
            }
        }
    return out;
}

LinearOpDescriptor make_blur_op(Shape in) {
    return {LinearOpKind::blur5x5, in, in};
}

LinearOpDescriptor make_downsample_op(Shape in, SampleScheme scheme) {
    LinearOpKind kind;
    switch (scheme) {
        case SampleScheme::rc: kind = LinearOpKind::downsample_rc; break;
        case SampleScheme::r: kind = LinearOpKind::downsample_r; break;
        case SampleScheme::c: kind = LinearOpKind::downsample_c; break;
        default: throw std::invalid_argument("make_downsample_op: bad scheme");
    }
    return {kind, in, downsample_shape(in, scheme)};
}

LinearOpDescriptor make_resize_op(Shape in, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("make_resize_op: target dims must be >= 1");
    return {LinearOpKind::resize_bilinear, in, {in.c, out_h, out_w}};
}

ImageTensor apply_forward(const LinearOpDescriptor& op, const ImageTensor& x) {
    if (x.shape() != op.input_shape)
        throw std::invalid_argument(std::string("apply_forward(") + to_string(op.kind) +
                                    "): input shape " + x.shape().str() + " != " +
                                    op.input_shape.str());
    switch (op.kind) {
        case LinearOpKind::blur5x5: return conv2d_reflect(x, blur5x5_coeffs(), 5);
        case LinearOpKind::downsample_rc: return downsample(x, SampleScheme::rc);
        case LinearOpKind::downsample_r: return downsample(x, SampleScheme::r);
        case LinearOpKind::downsample_c: return downsample(x, SampleScheme::c);
        case LinearOpKind::resize_bilinear:
            return resize_bilinear(x, op.output_shape.h, op.output_shape.w);
    }
    throw std::invalid_argument("apply_forward: unknown op kind");
}

ImageTensor apply_adjoint(const LinearOpDescriptor& op, const ImageTensor& cot) {
    if (cot.shape() != op.output_shape)
        throw std::invalid_argument(std::string("apply_adjoint(") + to_string(op.kind) +
                                    "): cotangent shape " + cot.shape().str() + " != " +
                                    op.output_shape.str());

    ImageTensor out(op.input_shape);
    switch (op.kind) {
        case LinearOpKind::blur5x5: {
            // Transpose of gather-with-reflection is scatter-with-reflection.
            const auto& k = blur5x5_coeffs();
            const int h = op.input_shape.h;
            const int w = op.input_shape.w;
            for (int c = 0; c < op.input_shape.c; ++c) {
                float* dst = out.plane(c);
                const float* src = cot.plane(c);
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) {
                        const float v = src[static_cast<std::size_t>(y) * w + x];
                        for (int ky = 0; ky < 5; ++ky) {
                            const int ry = reflect_index(y + ky - 2, h);
                            for (int kx = 0; kx < 5; ++kx) {
                                const int rx = reflect_index(x + kx - 2, w);
                                dst[static_cast<std::size_t>(ry) * w + rx] += k[ky * 5 + kx] * v;
                            }
                        }
                    }
            }
            return out;
        }
        case LinearOpKind::downsample_rc:
        case LinearOpKind::downsample_r:
        case LinearOpKind::downsample_c: {
            const int sy = op.kind != LinearOpKind::downsample_c ? 2 : 1;
            const int sx = op.kind != LinearOpKind::downsample_r ? 2 : 1;
            for (int c = 0; c < op.output_shape.c; ++c)
                for (int y = 0; y < op.output_shape.h; ++y)
                    for (int x = 0; x < op.output_shape.w; ++x)
                        out.at(c, y * sy, x * sx) = cot.at(c, y, x);
            return out;
        }
        case LinearOpKind::resize_bilinear: {
            const int out_h = op.output_shape.h;
            const int out_w = op.output_shape.w;
            std::vector<LerpCoord> ys(out_h), xs(out_w);
            for (int y = 0; y < out_h; ++y) ys[y] = lerp_coord(y, op.input_shape.h, out_h);
            for (int x = 0; x < out_w; ++x) xs[x] = lerp_coord(x, op.input_shape.w, out_w);

            for (int c = 0; c < op.output_shape.c; ++c)
                for (int y = 0; y < out_h; ++y) {
                    const LerpCoord ry = ys[y];
                    for (int x = 0; x < out_w; ++x) {
                        const LerpCoord rx = xs[x];
                        const float v = cot.at(c, y, x);
                        out.at(c, ry.i0, rx.i0) += (1.0f - ry.t) * (1.0f - rx.t) * v;
                        out.at(c, ry.i0, rx.i1) += (1.0f - ry.t) * rx.t * v;
                        out.at(c, ry.i1, rx.i0) += ry.t * (1.0f - rx.t) * v;
                        out.at(c, ry.i1, rx.i1) += ry.t * rx.t * v;
                    }
                }
            return out;
        }
    }
    throw std::invalid_argument("apply_adjoint: unknown op kind");
}

namespace detail {
std::span<const float> blur5x5_kernel() { return blur5x5_coeffs(); }
} // namespace detail

} // namespace sgp
