#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sgp {

struct Shape {
    int c = 0;
    int h = 0;
    int w = 0;

    bool operator==(const Shape&) const = default;
    std::int64_t count() const { return static_cast<std::int64_t>(c) * h * w; }
    std::string str() const {
        return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
};

// Dense single-precision C x H x W image in row-major order, values
// semantically in [0,1]. All ops taking it are pure: inputs are never
// mutated and repeated calls are bit-identical.
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(int c, int h, int w, float fill = 0.0f)
        : shape_{c, h, w}, data_(static_cast<std::size_t>(shape_.count()), fill) {}
    explicit ImageTensor(Shape s, float fill = 0.0f) : ImageTensor(s.c, s.h, s.w, fill) {}

    const Shape& shape() const { return shape_; }
    int channels() const { return shape_.c; }
    int height() const { return shape_.h; }
    int width() const { return shape_.w; }
    std::size_t size() const { return data_.size(); }

    float& at(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x];
    }
    float at(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x];
    }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float* plane(int c) { return data_.data() + static_cast<std::size_t>(c) * shape_.h * shape_.w; }
    const float* plane(int c) const {
        return data_.data() + static_cast<std::size_t>(c) * shape_.h * shape_.w;
    }

    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }

    bool operator==(const ImageTensor&) const = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

enum class SampleScheme {
    original = 0, // no sampling (pyramid layer 1)
    rc = 1,       // keep even rows and even columns
    r = 2,        // keep even rows
    c = 3,        // keep even columns
};

enum class LinearOpKind {
    blur5x5, // fixed binomial 5x5 kernel, reflect padding
    downsample_rc,
    downsample_r,
    downsample_c,
    resize_bilinear,
};

// Records one step of a linear transformation pipeline so its exact
// transpose can be applied when pulling gradients back to the input.
struct LinearOpDescriptor {
    LinearOpKind kind;
    Shape input_shape;
    Shape output_shape;
};

const char* to_string(LinearOpKind kind);

// KxK cross-correlation per channel, reflect padding without edge
// duplication (indices ...,2,1,0 | 1,2,...). Kernel side must be odd.
ImageTensor conv2d_reflect(const ImageTensor& img, std::span<const float> kernel, int ksize);

// Keeps pixels at even 0-based indices along the sampled axes; output dims
// are ceil(n/2), so 1-pixel axes pass through unchanged.
ImageTensor downsample(const ImageTensor& img, SampleScheme scheme);
Shape downsample_shape(Shape in, SampleScheme scheme);

// Bilinear interpolation with half-pixel-center alignment. Constant images
// map to the same constant exactly and identity targets return the input
// value-for-value.
ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w);

// Nearest-neighbor alternative for ablation runs.
ImageTensor resize_nearest(const ImageTensor& img, int out_h, int out_w);

LinearOpDescriptor make_blur_op(Shape in);
LinearOpDescriptor make_downsample_op(Shape in, SampleScheme scheme);
LinearOpDescriptor make_resize_op(Shape in, int out_h, int out_w);

// Applies the linear map named by the descriptor.
ImageTensor apply_forward(const LinearOpDescriptor& op, const ImageTensor& x);

// Applies the exact transpose: <Lx, y> == <x, apply_adjoint(L, y)>.
ImageTensor apply_adjoint(const LinearOpDescriptor& op, const ImageTensor& cotangent);

namespace detail {
// Row-major 5x5 binomial smoothing kernel (outer product of [1 4 6 4 1]/16
// with itself). Shared by the blur op and the pyramid builder.
std::span<const float> blur5x5_kernel();
} // namespace detail

} // namespace sgp
