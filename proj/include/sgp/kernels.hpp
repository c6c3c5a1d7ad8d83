#pragma once

#include <cstddef>

// Data-parallel inner loops behind every tensor and network op.
//
// Two backends: a scalar reference (the semantic definition) and an AVX2
// variant selected at runtime. Both compute bit-identical results:
//   - element-wise ops perform the same per-element IEEE operations,
//   - reductions (sum, dot, l1_norm) use a fixed 8-way blocked order:
//       acc[j] += x[8k + j]                       for all full blocks,
//       total  = ((a0+a1)+(a2+a3)) + ((a4+a5)+(a6+a7)),
//       then tail elements added one by one in ascending order,
//   - convolution accumulates taps in ascending (ky, kx) order with separate
//     multiply and add (builds compile with -ffp-contract=off; the AVX2
//     kernels do not use FMA).
// The environment variable SGP_KERNELS=scalar|avx2 overrides dispatch.
namespace sgp::kernels {

struct Ops {
    const char* name;

    // y[i] += a * x[i]
    void (*axpy)(float* y, float a, const float* x, std::size_t n);
    // y[i] *= a
    void (*scale)(float* y, float a, std::size_t n);
    // g[i] = mu * g[i] + s * h[i]
    void (*momentum_update)(float* g, float mu, const float* h, float s, std::size_t n);
    // x[i] += alpha * sign(g[i]), sign(0) = 0
    void (*sign_step)(float* x, const float* g, float alpha, std::size_t n);
    // x[i] = min(max(x[i], lo), hi)
    void (*clamp)(float* x, float lo, float hi, std::size_t n);
    // y[i] = max(x[i], 0)
    void (*relu)(float* y, const float* x, std::size_t n);
    // dx[i] = x[i] > 0 ? dy[i] : 0   (derivative at 0 defined as 0)
    void (*relu_backward)(float* dx, const float* x, const float* dy, std::size_t n);

    float (*sum)(const float* x, std::size_t n);
    float (*dot)(const float* x, const float* y, std::size_t n);
    float (*l1_norm)(const float* x, std::size_t n);

    // Single-plane KxK cross-correlation, reflect padding without edge
    // duplication (indices ...,2,1,0 | 1,2,...). ksize odd, h,w >= 1.
    void (*conv2d_reflect_plane)(const float* in, int h, int w,
                                 const float* kernel, int ksize, float* out);
};

const Ops& scalar();

// Null when the binary was built without AVX2 support or the CPU lacks it.
const Ops* avx2();

// Backend chosen once per process.
const Ops& active();

} // namespace sgp::kernels
