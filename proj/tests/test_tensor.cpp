#include <stdexcept>
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sgp/pyramid.hpp"
#include "sgp/rng.hpp"
#include "sgp/tensor.hpp"
#include "support/oracles.hpp"

using namespace sgp;

namespace {

ImageTensor random_image(int c, int h, int w, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    ImageTensor t(c, h, w);
    for (float& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

std::vector<float> narrow_kernel(const std::vector<double>& k) {
    std::vector<float> f(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) f[i] = static_cast<float>(k[i]);
    return f;
}

} // namespace

TEST_CASE("reflected convolution agrees with a dense double implementation") {
    Rng rng(11);
    for (auto [h, w] : {std::pair{1, 1}, {1, 6}, {2, 2}, {4, 9}, {16, 16}, {7, 13}}) {
        for (int ksize : {1, 3, 5}) {
            CAPTURE(h);
            CAPTURE(w);
            CAPTURE(ksize);
            const ImageTensor x = random_image(3, h, w, rng);
            std::vector<double> kd(static_cast<std::size_t>(ksize) * ksize);
            for (double& v : kd) v = rng.uniform(-0.5f, 0.5f);
            const ImageTensor got = conv2d_reflect(x, narrow_kernel(kd), ksize);
            const oracle::DTensor want = oracle::conv2d_reflect(oracle::widen(x), kd, ksize);
            CHECK(oracle::max_abs_diff(got, want) < 1e-5);
        }
    }
}

TEST_CASE("convolution validates its kernel arguments") {
    const ImageTensor x(1, 4, 4);
    const std::vector<float> k4(16, 0.1f);
    CHECK_THROWS_AS(conv2d_reflect(x, k4, 4), std::invalid_argument);  // even side
    const std::vector<float> k_short(3, 0.1f);
    CHECK_THROWS_AS(conv2d_reflect(x, k_short, 3), std::invalid_argument); // size mismatch
}

TEST_CASE("downsample keeps even indices and obeys the ceil shape law") {
    Rng rng(3);
    for (int h = 1; h <= 9; ++h)
        for (int w = 1; w <= 9; ++w) {
            const ImageTensor x = random_image(2, h, w, rng);
            for (SampleScheme s : {SampleScheme::rc, SampleScheme::r, SampleScheme::c}) {
                const Shape want = downsample_shape(x.shape(), s);
                const int sy = s == SampleScheme::c ? 1 : 2;
                const int sx = s == SampleScheme::r ? 1 : 2;
                CHECK(want.h == (h + sy - 1) / sy);
                CHECK(want.w == (w + sx - 1) / sx);
                const ImageTensor out = downsample(x, s);
                REQUIRE(out.shape() == want);
                for (int c = 0; c < 2; ++c)
                    for (int y = 0; y < out.height(); ++y)
                        for (int xx = 0; xx < out.width(); ++xx)
                            CHECK(out.at(c, y, xx) == x.at(c, y * sy, xx * sx));
            }
        }
}

TEST_CASE("bilinear resize matches the double reference") {
    Rng rng(17);
    const int cases[][4] = {{5, 7, 10, 14}, {8, 8, 3, 3}, {4, 6, 9, 5}, {1, 9, 4, 4}, {3, 3, 8, 8}};
    for (auto [h, w, oh, ow] : cases) {
        CAPTURE(h);
        CAPTURE(w);
        const ImageTensor x = random_image(3, h, w, rng);
        const ImageTensor got = resize_bilinear(x, oh, ow);
        REQUIRE(got.shape() == Shape{3, oh, ow});
        CHECK(oracle::max_abs_diff(got, oracle::resize_bilinear(oracle::widen(x), oh, ow)) < 1e-5);
    }
}

TEST_CASE("resize keeps constants exact and identity targets bitwise") {
    ImageTensor c(3, 6, 5, 0.137f);
    const ImageTensor up = resize_bilinear(c, 17, 11);
    for (float v : up.values()) CHECK(v == 0.137f);

    Rng rng(23);
    const ImageTensor x = random_image(2, 9, 4, rng);
    CHECK(resize_bilinear(x, 9, 4) == x);

    // single-pixel axes broadcast the lone sample
    ImageTensor px(1, 1, 1, 0.5f);
    const ImageTensor spread = resize_bilinear(px, 4, 3);
    for (float v : spread.values()) CHECK(v == 0.5f);
}

TEST_CASE("nearest resize replicates blocks on integer upscales") {
    ImageTensor x(1, 2, 2);
    x.at(0, 0, 0) = 1.0f;
    x.at(0, 0, 1) = 2.0f;
    x.at(0, 1, 0) = 3.0f;
    x.at(0, 1, 1) = 4.0f;
    const ImageTensor up = resize_nearest(x, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx)
            CHECK(up.at(0, y, xx) == x.at(0, y / 2, xx / 2));
}

TEST_CASE("descriptor forward application matches the direct functions bitwise") {
    Rng rng(31);
    const ImageTensor x = random_image(3, 10, 12, rng);

    CHECK(apply_forward(make_blur_op(x.shape()), x) == conv2d_reflect(x, gaussian5x5(), 5));
    for (SampleScheme s : {SampleScheme::rc, SampleScheme::r, SampleScheme::c})
        CHECK(apply_forward(make_downsample_op(x.shape(), s), x) == downsample(x, s));
    CHECK(apply_forward(make_resize_op(x.shape(), 6, 19), x) == resize_bilinear(x, 6, 19));
}

TEST_CASE("adjoints satisfy the dot-product identity for every op") {
    Rng rng(57);
    const Shape in{3, 11, 13};
    std::vector<LinearOpDescriptor> ops = {
        make_blur_op(in),
        make_downsample_op(in, SampleScheme::rc),
        make_downsample_op(in, SampleScheme::r),
        make_downsample_op(in, SampleScheme::c),
        make_resize_op(in, 7, 9),
        make_resize_op(in, 22, 5),
    };
    for (const LinearOpDescriptor& op : ops) {
        CAPTURE(to_string(op.kind));
        for (int trial = 0; trial < 20; ++trial) {
            ImageTensor x(op.input_shape), y(op.output_shape);
            for (float& v : x.values()) v = rng.uniform(-1.0f, 1.0f);
            for (float& v : y.values()) v = rng.uniform(-1.0f, 1.0f);
            const double lhs = oracle::dot(apply_forward(op, x), y);
            const double rhs = oracle::dot(x, apply_adjoint(op, y));
            const double scale = std::max({std::fabs(lhs), std::fabs(rhs), 1e-6});
            CHECK(std::fabs(lhs - rhs) / scale < 1e-4);
        }
    }
}

TEST_CASE("adjoint values match the double transpose") {
    Rng rng(71);
    const Shape in{2, 6, 9};
    for (const LinearOpDescriptor& op :
         {make_blur_op(in), make_downsample_op(in, SampleScheme::rc),
          make_resize_op(in, 13, 4)}) {
        ImageTensor cot(op.output_shape);
        for (float& v : cot.values()) v = rng.uniform(-1.0f, 1.0f);
        const ImageTensor got = apply_adjoint(op, cot);
        const oracle::DTensor want = oracle::apply_adjoint(op, oracle::widen(cot));
        CHECK(oracle::max_abs_diff(got, want) < 1e-5);
    }
}

TEST_CASE("tensor ops leave their inputs untouched") {
    Rng rng(101);
    const ImageTensor x = random_image(3, 8, 8, rng);
    const ImageTensor copy = x;
    (void)conv2d_reflect(x, std::vector<float>(25, 0.04f), 5);
    (void)downsample(x, SampleScheme::rc);
    (void)resize_bilinear(x, 5, 13);
    (void)resize_nearest(x, 3, 3);
    (void)apply_adjoint(make_blur_op(x.shape()), x);
    CHECK(x == copy);
}

TEST_CASE("op kind names are distinct and non-empty") {
    for (LinearOpKind k : {LinearOpKind::blur5x5, LinearOpKind::downsample_rc,
                           LinearOpKind::downsample_r, LinearOpKind::downsample_c,
                           LinearOpKind::resize_bilinear})
        CHECK(to_string(k)[0] != '\0');
}
