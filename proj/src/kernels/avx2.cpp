#include "sgp/kernels.hpp"

#include <immintrin.h>

#include <cmath>

// AVX2 backend. Bit-identical to the scalar reference: same per-element op
// sequences, same 8-way blocked reduction tree, no FMA.
namespace sgp::kernels {
namespace {

// ((a0+a1)+(a2+a3)) + ((a4+a5)+(a6+a7)) -- the tree the scalar backend uses.
float hsum_tree(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    hi = _mm_hadd_ps(hi, hi);
    hi = _mm_hadd_ps(hi, hi);
    return _mm_cvtss_f32(_mm_add_ss(lo, hi));
}

void axpy_avx2(float* y, float a, const float* x, std::size_t n) {
    const __m256 av = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 yv = _mm256_loadu_ps(y + i);
        const __m256 xv = _mm256_loadu_ps(x + i);
        _mm256_storeu_ps(y + i, _mm256_add_ps(yv, _mm256_mul_ps(av, xv)));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(float* y, float a, std::size_t n) {
    const __m256 av = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(y + i), av));
    for (; i < n; ++i) y[i] *= a;
}

void momentum_update_avx2(float* g, float mu, const float* h, float s, std::size_t n) {
    const __m256 muv = _mm256_set1_ps(mu);
    const __m256 sv = _mm256_set1_ps(s);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gv = _mm256_mul_ps(muv, _mm256_loadu_ps(g + i));
        const __m256 hv = _mm256_mul_ps(sv, _mm256_loadu_ps(h + i));
        _mm256_storeu_ps(g + i, _mm256_add_ps(gv, hv));
    }
    for (; i < n; ++i) g[i] = mu * g[i] + s * h[i];
}

void sign_step_avx2(float* x, const float* g, float alpha, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gv = _mm256_loadu_ps(g + i);
        const __m256 pos = _mm256_and_ps(_mm256_cmp_ps(gv, zero, _CMP_GT_OQ), one);
        const __m256 neg = _mm256_and_ps(_mm256_cmp_ps(gv, zero, _CMP_LT_OQ), one);
        const __m256 step = _mm256_mul_ps(av, _mm256_sub_ps(pos, neg));
        _mm256_storeu_ps(x + i, _mm256_add_ps(_mm256_loadu_ps(x + i), step));
    }
    for (; i < n; ++i) {
        const float s = (g[i] > 0.0f ? 1.0f : 0.0f) - (g[i] < 0.0f ? 1.0f : 0.0f);
        x[i] += alpha * s;
    }
}

void clamp_avx2(float* x, float lo, float hi, std::size_t n) {
    const __m256 lov = _mm256_set1_ps(lo);
    const __m256 hiv = _mm256_set1_ps(hi);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 v = _mm256_max_ps(_mm256_loadu_ps(x + i), lov);
        _mm256_storeu_ps(x + i, _mm256_min_ps(v, hiv));
    }
    for (; i < n; ++i) {
        float v = x[i] < lo ? lo : x[i];
        x[i] = v > hi ? hi : v;
    }
}

void relu_avx2(float* y, const float* x, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_avx2(float* dx, const float* x, const float* dy, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
    }
    for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

float sum_avx2(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    const std::size_t blocks = n / 8;
    for (std::size_t k = 0; k < blocks; ++k)
        acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + 8 * k));
    float total = hsum_tree(acc);
    for (std::size_t i = blocks * 8; i < n; ++i) total += x[i];
    return total;
}

float dot_avx2(const float* x, const float* y, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    const std::size_t blocks = n / 8;
    for (std::size_t k = 0; k < blocks; ++k) {
        const __m256 xv = _mm256_loadu_ps(x + 8 * k);
        const __m256 yv = _mm256_loadu_ps(y + 8 * k);
        acc = _mm256_add_ps(acc, _mm256_mul_ps(xv, yv));
    }
    float total = hsum_tree(acc);
    for (std::size_t i = blocks * 8; i < n; ++i) total += x[i] * y[i];
    return total;
}

float l1_norm_avx2(const float* x, std::size_t n) {
    const __m256 abs_mask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7FFFFFFF));
    __m256 acc = _mm256_setzero_ps();
    const std::size_t blocks = n / 8;
    for (std::size_t k = 0; k < blocks; ++k)
        acc = _mm256_add_ps(acc, _mm256_and_ps(_mm256_loadu_ps(x + 8 * k), abs_mask));
    float total = hsum_tree(acc);
    for (std::size_t i = blocks * 8; i < n; ++i) total += std::fabs(x[i]);
    return total;
}

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

float conv_pixel(const float* in, int h, int w, const float* kernel, int ksize,
                 int y, int x) {
    const int c = ksize / 2;
    float acc = 0.0f;
    for (int ky = 0; ky < ksize; ++ky) {
        const float* row = in + static_cast<std::size_t>(reflect_index(y + ky - c, h)) * w;
        for (int kx = 0; kx < ksize; ++kx)
            acc += kernel[ky * ksize + kx] * row[reflect_index(x + kx - c, w)];
    }
    return acc;
}

void conv2d_reflect_plane_avx2(const float* in, int h, int w,
                               const float* kernel, int ksize, float* out) {
    const int c = ksize / 2;
    for (int y = 0; y < h; ++y) {
        float* out_row = out + static_cast<std::size_t>(y) * w;
        int x = 0;
        // Left edge (column reflection) stays scalar.
        for (; x < c && x < w; ++x) out_row[x] = conv_pixel(in, h, w, kernel, ksize, y, x);
        // Interior: all column taps in range, 8 outputs per step.
        for (; x + 7 <= w - 1 - c; x += 8) {
            __m256 acc = _mm256_setzero_ps();
            for (int ky = 0; ky < ksize; ++ky) {
                const float* row = in + static_cast<std::size_t>(reflect_index(y + ky - c, h)) * w;
                for (int kx = 0; kx < ksize; ++kx) {
                    const __m256 kv = _mm256_set1_ps(kernel[ky * ksize + kx]);
                    const __m256 iv = _mm256_loadu_ps(row + x + kx - c);
                    acc = _mm256_add_ps(acc, _mm256_mul_ps(kv, iv));
                }
            }
            _mm256_storeu_ps(out_row + x, acc);
        }
        for (; x < w; ++x) out_row[x] = conv_pixel(in, h, w, kernel, ksize, y, x);
    }
}

} // namespace

namespace detail {

const Ops& avx2_table() {
    static const Ops ops = {
        "avx2",
        axpy_avx2,
        scale_avx2,
        momentum_update_avx2,
        sign_step_avx2,
        clamp_avx2,
        relu_avx2,
        relu_backward_avx2,
        sum_avx2,
        dot_avx2,
        l1_norm_avx2,
        conv2d_reflect_plane_avx2,
    };
    return ops;
}

} // namespace detail
} // namespace sgp::kernels
