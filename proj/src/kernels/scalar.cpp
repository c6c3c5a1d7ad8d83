#include "sgp/kernels.hpp"

#include <cmath>

// Reference backend. Every loop here defines the arithmetic the SIMD
// backends must reproduce exactly.
namespace sgp::kernels {
namespace {

void axpy_scalar(float* y, float a, const float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(float* y, float a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

void momentum_update_scalar(float* g, float mu, const float* h, float s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) g[i] = mu * g[i] + s * h[i];
}

void sign_step_scalar(float* x, const float* g, float alpha, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const float s = (g[i] > 0.0f ? 1.0f : 0.0f) - (g[i] < 0.0f ? 1.0f : 0.0f);
        x[i] += alpha * s;
    }
}

void clamp_scalar(float* x, float lo, float hi, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        float v = x[i] < lo ? lo : x[i];
        x[i] = v > hi ? hi : v;
    }
}

void relu_scalar(float* y, const float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_scalar(float* dx, const float* x, const float* dy, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

// 8-way blocked reduction; see kernels.hpp for the exact tree.
template <class Term>
float blocked_reduce(std::size_t n, Term term) {
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    const std::size_t blocks = n / 8;
    for (std::size_t k = 0; k < blocks; ++k)
        for (std::size_t j = 0; j < 8; ++j) acc[j] += term(8 * k + j);
    float total = ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
                  ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (std::size_t i = blocks * 8; i < n; ++i) total += term(i);
    return total;
}

float sum_scalar(const float* x, std::size_t n) {
    return blocked_reduce(n, [x](std::size_t i) { return x[i]; });
}

float dot_scalar(const float* x, const float* y, std::size_t n) {
    return blocked_reduce(n, [x, y](std::size_t i) { return x[i] * y[i]; });
}

float l1_norm_scalar(const float* x, std::size_t n) {
    return blocked_reduce(n, [x](std::size_t i) { return std::fabs(x[i]); });
}

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

void conv2d_reflect_plane_scalar(const float* in, int h, int w,
                                 const float* kernel, int ksize, float* out) {
    const int c = ksize / 2;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int ky = 0; ky < ksize; ++ky) {
                const float* row = in + static_cast<std::size_t>(reflect_index(y + ky - c, h)) * w;
                for (int kx = 0; kx < ksize; ++kx)
                    acc += kernel[ky * ksize + kx] * row[reflect_index(x + kx - c, w)];
            }
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
}

} // namespace

const Ops& scalar() {
    static const Ops ops = {
        "scalar",
        axpy_scalar,
        scale_scalar,
        momentum_update_scalar,
        sign_step_scalar,
        clamp_scalar,
        relu_scalar,
        relu_backward_scalar,
        sum_scalar,
        dot_scalar,
        l1_norm_scalar,
        conv2d_reflect_plane_scalar,
    };
    return ops;
}

} // namespace sgp::kernels
