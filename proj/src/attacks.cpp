#include "sgp/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sgp/kernels.hpp"

namespace sgp {
namespace {

void validate_ensemble(const Ensemble& ens, const ImageTensor& x, int y) {
    if (ens.models.empty()) throw std::invalid_argument("ensemble: no models");
    if (ens.models.size() != ens.weights.size())
        throw std::invalid_argument("ensemble: weight count differs from model count");
    for (const Classifier* m : ens.models) {
        if (!m) throw std::invalid_argument("ensemble: null model");
        if (m->input_shape() != x.shape())
            throw std::invalid_argument("ensemble: model expects " + m->input_shape().str() +
                                        ", image is " + x.shape().str());
        if (m->num_classes() != ens.models.front()->num_classes())
            throw std::invalid_argument("ensemble: class counts differ");
    }
    if (y < 0 || y >= ens.models.front()->num_classes())
        throw std::invalid_argument("ensemble: label out of range");
}

} // namespace

const std::vector<std::string>& attack_names() {
    static const std::vector<std::string> names = {"fgsm", "mifgsm", "dim",     "tim",
                                                   "sim",  "sgp",    "sgp-dim", "sgp-tim",
                                                   "sgp-sim", "sgp-std"};
    return names;
}

AttackConfig attack_preset(const std::string& name, const AttackConfig& base) {
    AttackConfig c = base;
    c.use_dim = c.use_tim = c.use_sim = false;
    if (name == "fgsm") {
        c.depth = 1;
        c.steps = 1;
    } else if (name == "mifgsm") {
        c.depth = 1;
    } else if (name == "dim") {
        c.depth = 1;
        c.use_dim = true;
    } else if (name == "tim") {
        c.depth = 1;
        c.use_tim = true;
    } else if (name == "sim") {
        c.depth = 1;
        c.use_sim = true;
    } else if (name == "sgp") {
    } else if (name == "sgp-dim") {
        c.use_dim = true;
    } else if (name == "sgp-tim") {
        c.use_tim = true;
    } else if (name == "sgp-sim") {
        c.use_sim = true;
    } else if (name == "sgp-std") {
        c.use_dim = c.use_tim = c.use_sim = true;
    } else {
        throw std::invalid_argument("unknown attack '" + name + "'");
    }
    return c;
}

std::pair<float, ImageTensor> ensemble_grad(const Ensemble& ens, const ImageTensor& x, int y) {
    validate_ensemble(ens, x, y);
    const auto& K = kernels::active();
    const int nc = ens.models.front()->num_classes();

    std::vector<Tape> tapes;
    tapes.reserve(ens.models.size());
    std::vector<float> fused(nc, 0.0f);
    for (std::size_t i = 0; i < ens.models.size(); ++i) {
        tapes.push_back(ens.models[i]->forward_tape(x));
        K.axpy(fused.data(), ens.weights[i], tapes[i].logits().data(), fused.size());
    }

    std::vector<float> dlogits;
    const float loss = cross_entropy_from_logits(fused, y, &dlogits);
    dlogits[y] -= 1.0f;

    ImageTensor total(x.shape());
    std::vector<float> scaled(nc);
    for (std::size_t i = 0; i < ens.models.size(); ++i) {
        std::copy(dlogits.begin(), dlogits.end(), scaled.begin());
        K.scale(scaled.data(), ens.weights[i], scaled.size());
        const ImageTensor g = ens.models[i]->input_grad_from_dlogits(tapes[i], scaled);
        K.axpy(total.data(), 1.0f, g.data(), total.size());
    }
    return {loss, std::move(total)};
}

DimDraw dim_draw(Shape in, float prob, Rng& rng) {
    DimDraw d;
    d.canvas_h = static_cast<int>(std::lround(1.1 * in.h));
    d.canvas_w = static_cast<int>(std::lround(1.1 * in.w));
    if (rng.uniform() >= prob) return d;
    d.apply = true;
    d.rh = in.h + static_cast<int>(rng.uniform_int(d.canvas_h - in.h + 1));
    d.rw = in.w + static_cast<int>(rng.uniform_int(d.canvas_w - in.w + 1));
    d.oy = static_cast<int>(rng.uniform_int(d.canvas_h - d.rh + 1));
    d.ox = static_cast<int>(rng.uniform_int(d.canvas_w - d.rw + 1));
    return d;
}

ImageTensor dim_apply(const ImageTensor& x, const DimDraw& d) {
    if (!d.apply) return x;
    const ImageTensor resized = resize_bilinear(x, d.rh, d.rw);
    ImageTensor canvas(x.channels(), d.canvas_h, d.canvas_w);
    for (int c = 0; c < x.channels(); ++c)
        for (int y = 0; y < d.rh; ++y)
            for (int px = 0; px < d.rw; ++px)
                canvas.at(c, d.oy + y, d.ox + px) = resized.at(c, y, px);
    return resize_bilinear(canvas, x.height(), x.width());
}

ImageTensor dim_pullback(const DimDraw& d, Shape in, const ImageTensor& grad) {
    if (!d.apply) return grad;
    if (grad.shape() != in)
        throw std::invalid_argument("dim_pullback: gradient shape mismatch");

    const Shape canvas_shape{in.c, d.canvas_h, d.canvas_w};
    const ImageTensor at_canvas =
        apply_adjoint(make_resize_op(canvas_shape, in.h, in.w), grad);

    ImageTensor cropped(in.c, d.rh, d.rw); // zero-pad adjoint is a crop
    for (int c = 0; c < in.c; ++c)
        for (int y = 0; y < d.rh; ++y)
            for (int px = 0; px < d.rw; ++px)
                cropped.at(c, y, px) = at_canvas.at(c, d.oy + y, d.ox + px);

    return apply_adjoint(make_resize_op(in, d.rh, d.rw), cropped);
}

std::vector<float> tim_kernel(int ksize) {
    if (ksize < 1 || ksize % 2 == 0)
        throw std::invalid_argument("tim_kernel: size must be odd and >= 1");
    if (ksize == 1) return {1.0f};

    const double sigma = ksize / 3.0;
    const int c = ksize / 2;
    std::vector<double> wd(static_cast<std::size_t>(ksize) * ksize);
    double sum = 0.0;
    for (int y = 0; y < ksize; ++y)
        for (int x = 0; x < ksize; ++x) {
            const double d2 = static_cast<double>((y - c) * (y - c) + (x - c) * (x - c));
            wd[static_cast<std::size_t>(y) * ksize + x] = std::exp(-d2 / (2.0 * sigma * sigma));
            sum += wd[static_cast<std::size_t>(y) * ksize + x];
        }
    std::vector<float> out(wd.size());
    for (std::size_t i = 0; i < wd.size(); ++i) out[i] = static_cast<float>(wd[i] / sum);
    return out;
}

ImageTensor tim_smooth_gradient(const ImageTensor& grad, int ksize) {
    const auto k = tim_kernel(ksize);
    if (ksize == 1) return grad;
    return conv2d_reflect(grad, k, ksize);
}

ImageTensor composite_gradient(const Ensemble& ens, const ImageTensor& x, int y,
                               const AttackConfig& cfg, int step, GradStats* stats) {
    if (cfg.depth < 1) throw std::invalid_argument("composite_gradient: depth must be >= 1");
    if (cfg.use_sim && cfg.sim_copies < 1)
        throw std::invalid_argument("composite_gradient: sim_copies must be >= 1");

    if (cfg.depth == 1 && !cfg.use_dim && !cfg.use_sim) {
        auto [loss, g] = ensemble_grad(ens, x, y);
        if (stats) {
            stats->mean_loss = loss;
            stats->gradient_calls = 1;
        }
        return g;
    }

    const auto& K = kernels::active();
    const Shape ms = x.shape();
    const std::size_t n = static_cast<std::size_t>(ms.count());
    const SgpPyramid pyr = build_sgp(x, cfg.depth);
    const int copies = cfg.use_sim ? cfg.sim_copies : 1;

    ImageTensor total(ms);
    float loss_sum = 0.0f;
    int calls = 0;
    for (std::size_t e = 0; e < pyr.examples.size(); ++e) {
        const ScaleExample& ex = pyr.examples[e];
        const bool needs_resize = !(ex.image.shape() == ms);
        LinearOpDescriptor rop{};
        ImageTensor fed_base = ex.image;
        if (needs_resize) {
            rop = make_resize_op(ex.image.shape(), ms.h, ms.w);
            fed_base = apply_forward(rop, ex.image);
        }
        for (int k = 0; k < copies; ++k) {
            const float sfac = 1.0f / static_cast<float>(1u << k);
            ImageTensor fed = fed_base;
            if (cfg.use_sim && k > 0) K.scale(fed.data(), sfac, n);

            DimDraw draw;
            if (cfg.use_dim) {
                Rng rng(derive_seed(derive_seed(derive_seed(cfg.seed, step), e), k));
                draw = dim_draw(ms, cfg.dim_prob, rng);
                if (draw.apply) fed = dim_apply(fed, draw);
            }

            auto [loss, grad] = ensemble_grad(ens, fed, y);
            loss_sum += loss;
            ++calls;

            if (cfg.grad_mode == GradMode::chained) {
                if (draw.apply) grad = dim_pullback(draw, ms, grad);
                if (cfg.use_sim && k > 0) K.scale(grad.data(), sfac, n);
                if (needs_resize) grad = apply_adjoint(rop, grad);
                if (!ex.chain.empty()) grad = pullback_to_input(ex, grad);
            }
            K.axpy(total.data(), 1.0f, grad.data(), n);
        }
    }

    K.scale(total.data(), 1.0f / static_cast<float>(calls), n);
    if (stats) {
        stats->mean_loss = loss_sum / static_cast<float>(calls);
        stats->gradient_calls = calls;
    }
    return total;
}

AttackResult sgp_attack(const Ensemble& ens, const ImageTensor& x, int y,
                        const AttackConfig& cfg) {
    validate_ensemble(ens, x, y);
    if (cfg.epsilon < 0.0f) throw std::invalid_argument("attack: epsilon must be >= 0");
    if (cfg.steps < 1) throw std::invalid_argument("attack: steps must be >= 1");
    if (cfg.tim_ksize < 1 || cfg.tim_ksize % 2 == 0)
        throw std::invalid_argument("attack: tim_ksize must be odd");
    if (!(cfg.dim_prob >= 0.0f && cfg.dim_prob <= 1.0f))
        throw std::invalid_argument("attack: dim_prob must be in [0, 1]");

    const auto& K = kernels::active();
    const std::size_t n = x.size();
    const float alpha = cfg.epsilon / static_cast<float>(cfg.steps);

    AttackResult res;
    res.x_adv = x;
    ImageTensor g(x.shape()); // momentum accumulator, starts at zero

    for (int t = 0; t < cfg.steps; ++t) {
        GradStats st;
        ImageTensor gbar = composite_gradient(ens, res.x_adv, y, cfg, t, &st);
        if (cfg.use_tim && cfg.tim_ksize > 1) gbar = tim_smooth_gradient(gbar, cfg.tim_ksize);

        const float l1 = K.l1_norm(gbar.data(), n);
        const float inv = l1 > 0.0f ? 1.0f / l1 : 0.0f;
        K.momentum_update(g.data(), cfg.momentum, gbar.data(), inv, n);
        K.sign_step(res.x_adv.data(), g.data(), alpha, n);
        if (cfg.clip_to_valid) K.clamp(res.x_adv.data(), 0.0f, 1.0f, n);

        res.gradient_calls += st.gradient_calls;
        res.step_loss.push_back(st.mean_loss);
    }
    return res;
}

AttackResult sgp_attack(const Classifier& model, const ImageTensor& x, int y,
                        const AttackConfig& cfg) {
    return sgp_attack(Ensemble{{&model}, {1.0f}}, x, y, cfg);
}

} // namespace sgp
