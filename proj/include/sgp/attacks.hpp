#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgp/nn.hpp"
#include "sgp/pyramid.hpp"
#include "sgp/rng.hpp"
#include "sgp/tensor.hpp"

namespace sgp {

// How gradients at reduced scales reach input scale. `chained` applies the
// exact adjoint of every op between the input and the fed image; `detached`
// treats each fed image as a leaf and uses its raw gradient (the shapes
// already match the input because fed images live at model scale).
enum class GradMode { chained, detached };

struct AttackConfig {
    float epsilon = 16.0f / 255.0f; // L-inf budget on the [0,1] pixel scale
    int steps = 10;                 // T; per-step size is epsilon / T
    float momentum = 1.0f;          // mu
    int depth = 3;                  // pyramid layers m; 1 disables the pyramid
    GradMode grad_mode = GradMode::chained;
    bool clip_to_valid = true; // clamp adversarial pixels to [0,1]

    bool use_dim = false; // random resize+pad diversity per gradient call
    float dim_prob = 0.5f;
    bool use_tim = false; // smooth the averaged gradient
    int tim_ksize = 7;
    bool use_sim = false; // average over x / 2^k copies
    int sim_copies = 5;

    std::uint64_t seed = 0; // drives the diversity draws
};

// Named presets over a base config: fgsm, mifgsm, dim, tim, sim, sgp,
// sgp-dim, sgp-tim, sgp-sim, sgp-std (std = dim+tim+sim combined). The
// single-step and non-pyramid presets override steps/depth accordingly.
AttackConfig attack_preset(const std::string& name, const AttackConfig& base);
const std::vector<std::string>& attack_names();

// Weighted logit fusion: logits = sum_i w[i] * logits_i, loss on the fused
// logits, gradients accumulated per model in index order. With a single
// weight-1 model this reproduces Classifier::loss_and_input_grad bit for bit.
struct Ensemble {
    std::vector<const Classifier*> models;
    std::vector<float> weights;
};

std::pair<float, ImageTensor> ensemble_grad(const Ensemble& ens, const ImageTensor& x, int y);

// One random resize-and-pad draw. The image is resized to rh x rw, placed at
// (oy, ox) on a zero canvas ~1.1x the input, and resized back to input scale.
struct DimDraw {
    bool apply = false;
    int rh = 0, rw = 0, oy = 0, ox = 0;
    int canvas_h = 0, canvas_w = 0;
};

DimDraw dim_draw(Shape in, float prob, Rng& rng);
ImageTensor dim_apply(const ImageTensor& x, const DimDraw& d);
// Transpose of dim_apply: resize adjoint, crop, resize adjoint.
ImageTensor dim_pullback(const DimDraw& d, Shape in, const ImageTensor& grad);

// Normalized Gaussian taps with sigma = ksize / 3 (computed in double and
// cast); ksize must be odd. ksize == 1 degenerates to identity.
std::vector<float> tim_kernel(int ksize);
ImageTensor tim_smooth_gradient(const ImageTensor& grad, int ksize);

// Per-step averaged gradient over the multi-scale examples (times diversity
// copies when enabled), with depth 1 short-circuiting to the plain ensemble
// gradient. step seeds the diversity draws.
struct GradStats {
    float mean_loss = 0.0f;
    int gradient_calls = 0;
};

ImageTensor composite_gradient(const Ensemble& ens, const ImageTensor& x, int y,
                               const AttackConfig& cfg, int step, GradStats* stats = nullptr);

struct AttackResult {
    ImageTensor x_adv;
    int gradient_calls = 0;
    std::vector<float> step_loss; // mean loss observed at each step
};

// Iterative sign attack with momentum: g <- mu*g + gbar/||gbar||_1 and
// x <- x + (epsilon/T)*sign(g), optionally clamped to [0,1]. depth m makes
// each step average 3m-2 scale gradients, so gradient_calls = (3m-2)*T when
// no scale copies are in play.
AttackResult sgp_attack(const Ensemble& ens, const ImageTensor& x, int y,
                        const AttackConfig& cfg);
AttackResult sgp_attack(const Classifier& model, const ImageTensor& x, int y,
                        const AttackConfig& cfg);

} // namespace sgp
