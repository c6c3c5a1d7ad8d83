#include "sgp/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>
#include <zlib.h>

#include "sgp/errors.hpp"
#include "sgp/kernels.hpp"
#include "sgp/rng.hpp"

namespace sgp {
namespace {

// Inclusive index range of output positions whose input tap (offset d) stays
// inside [0, n) under zero padding.
struct TapRange {
    int lo, hi;
};
TapRange tap_range(int d, int n) { return {d > 0 ? 0 : -d, d > 0 ? n - 1 - d : n - 1}; }

std::size_t plane_size(Shape s) { return static_cast<std::size_t>(s.h) * s.w; }

void conv3x3_forward(const float* in, const LayerDesc& L, const float* W, const float* b,
                     float* out) {
    const auto& K = kernels::active();
    const int h = L.in_shape.h, w = L.in_shape.w;
    const std::size_t plane = plane_size(L.in_shape);
    for (int co = 0; co < L.out_shape.c; ++co) {
        float* op = out + co * plane;
        std::fill(op, op + plane, b[co]);
        for (int ci = 0; ci < L.in_shape.c; ++ci) {
            const float* ip = in + ci * plane;
            const float* wp = W + (static_cast<std::size_t>(co) * L.in_shape.c + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                const TapRange yr = tap_range(ky - 1, h);
                for (int kx = 0; kx < 3; ++kx) {
                    const TapRange xr = tap_range(kx - 1, w);
                    const int len = xr.hi - xr.lo + 1;
                    if (len <= 0) continue;
                    const float wv = wp[ky * 3 + kx];
                    for (int y = yr.lo; y <= yr.hi; ++y)
                        K.axpy(op + static_cast<std::size_t>(y) * w + xr.lo, wv,
                               ip + static_cast<std::size_t>(y + ky - 1) * w + (xr.lo + kx - 1),
                               static_cast<std::size_t>(len));
                }
            }
        }
    }
}

void conv3x3_backward_dx(const float* dy, const LayerDesc& L, const float* W, float* dx) {
    const auto& K = kernels::active();
    const int h = L.in_shape.h, w = L.in_shape.w;
    const std::size_t plane = plane_size(L.in_shape);
    std::fill(dx, dx + static_cast<std::size_t>(L.in_shape.c) * plane, 0.0f);
    for (int co = 0; co < L.out_shape.c; ++co) {
        const float* dyp = dy + co * plane;
        for (int ci = 0; ci < L.in_shape.c; ++ci) {
            float* dxp = dx + ci * plane;
            const float* wp = W + (static_cast<std::size_t>(co) * L.in_shape.c + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                const TapRange yr = tap_range(ky - 1, h);
                for (int kx = 0; kx < 3; ++kx) {
                    const TapRange xr = tap_range(kx - 1, w);
                    const int len = xr.hi - xr.lo + 1;
                    if (len <= 0) continue;
                    const float wv = wp[ky * 3 + kx];
                    for (int y = yr.lo; y <= yr.hi; ++y)
                        K.axpy(dxp + static_cast<std::size_t>(y + ky - 1) * w + (xr.lo + kx - 1),
                               wv, dyp + static_cast<std::size_t>(y) * w + xr.lo,
                               static_cast<std::size_t>(len));
                }
            }
        }
    }
}

void conv3x3_backward_dw(const float* in, const float* dy, const LayerDesc& L, float* dW,
                         float* db) {
    const auto& K = kernels::active();
    const int h = L.in_shape.h, w = L.in_shape.w;
    const std::size_t plane = plane_size(L.in_shape);
    for (int co = 0; co < L.out_shape.c; ++co) {
        const float* dyp = dy + co * plane;
        db[co] += K.sum(dyp, plane);
        for (int ci = 0; ci < L.in_shape.c; ++ci) {
            const float* ip = in + ci * plane;
            float* dwp = dW + (static_cast<std::size_t>(co) * L.in_shape.c + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                const TapRange yr = tap_range(ky - 1, h);
                for (int kx = 0; kx < 3; ++kx) {
                    const TapRange xr = tap_range(kx - 1, w);
                    const int len = xr.hi - xr.lo + 1;
                    if (len <= 0) continue;
                    float acc = 0.0f;
                    for (int y = yr.lo; y <= yr.hi; ++y)
                        acc += K.dot(
                            ip + static_cast<std::size_t>(y + ky - 1) * w + (xr.lo + kx - 1),
                            dyp + static_cast<std::size_t>(y) * w + xr.lo,
                            static_cast<std::size_t>(len));
                    dwp[ky * 3 + kx] += acc;
                }
            }
        }
    }
}

void maxpool2_forward(const float* in, const LayerDesc& L, float* out, std::vector<int>& argmax) {
    const int w = L.in_shape.w;
    const int oh = L.out_shape.h, ow = L.out_shape.w;
    argmax.resize(static_cast<std::size_t>(L.out_shape.count()));
    std::size_t o = 0;
    for (int c = 0; c < L.in_shape.c; ++c) {
        const std::size_t base = c * plane_size(L.in_shape);
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x, ++o) {
                int best = static_cast<int>(base + static_cast<std::size_t>(2 * y) * w + 2 * x);
                float bv = in[best];
                // Window order (0,0),(0,1),(1,0),(1,1); first maximum wins.
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int idx =
                            static_cast<int>(base + static_cast<std::size_t>(2 * y + dy) * w +
                                             (2 * x + dx));
                        if (in[idx] > bv) {
                            bv = in[idx];
                            best = idx;
                        }
                    }
                out[o] = bv;
                argmax[o] = best;
            }
    }
}

void dense_forward(const float* in, const LayerDesc& L, const float* W, const float* b,
                   float* out) {
    const auto& K = kernels::active();
    const std::size_t n_in = static_cast<std::size_t>(L.in_shape.count());
    for (int o = 0; o < L.out_shape.c; ++o) out[o] = b[o] + K.dot(W + o * n_in, in, n_in);
}

float ce_from_logits(std::span<const float> z, int y, std::vector<float>* probs) {
    const float m = *std::max_element(z.begin(), z.end());
    std::vector<float> e(z.size());
    float sum = 0.0f;
    for (std::size_t i = 0; i < z.size(); ++i) {
        e[i] = std::exp(z[i] - m);
        sum += e[i];
    }
    if (probs) {
        const float inv = 1.0f / sum;
        probs->resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) (*probs)[i] = e[i] * inv;
    }
    return m + std::log(sum) - z[y];
}

struct StackBuilder {
    Shape cur;
    std::size_t offset = 0;
    std::vector<LayerDesc> layers;

    void conv3x3(int cout) {
        LayerDesc L;
        L.kind = LayerKind::conv3x3;
        L.in_shape = cur;
        L.out_shape = {cout, cur.h, cur.w};
        L.w_offset = offset;
        L.w_count = static_cast<std::size_t>(cout) * cur.c * 9;
        L.b_offset = offset + L.w_count;
        L.b_count = static_cast<std::size_t>(cout);
        offset = L.b_offset + L.b_count;
        layers.push_back(L);
        cur = L.out_shape;
    }
    void relu() {
        layers.push_back({LayerKind::relu, cur, cur, 0, 0, 0, 0});
    }
    void maxpool2() {
        LayerDesc L{LayerKind::maxpool2, cur, {cur.c, cur.h / 2, cur.w / 2}, 0, 0, 0, 0};
        if (L.out_shape.h < 1 || L.out_shape.w < 1)
            throw std::invalid_argument("maxpool2: input too small");
        layers.push_back(L);
        cur = L.out_shape;
    }
    void dense(int out) {
        LayerDesc L;
        L.kind = LayerKind::dense;
        L.in_shape = cur;
        L.out_shape = {out, 1, 1};
        L.w_offset = offset;
        L.w_count = static_cast<std::size_t>(out) * cur.count();
        L.b_offset = offset + L.w_count;
        L.b_count = static_cast<std::size_t>(out);
        offset = L.b_offset + L.b_count;
        layers.push_back(L);
        cur = L.out_shape;
    }
};

} // namespace

std::vector<float> softmax(std::span<const float> logits) {
    std::vector<float> p;
    ce_from_logits(logits, 0, &p);
    return p;
}

float cross_entropy_from_logits(std::span<const float> logits, int y, std::vector<float>* probs) {
    if (y < 0 || y >= static_cast<int>(logits.size()))
        throw std::invalid_argument("cross_entropy_from_logits: label out of range");
    return ce_from_logits(logits, y, probs);
}

Classifier::Classifier(std::string architecture_id, Shape input_shape, int num_classes,
                       std::uint64_t seed)
    : arch_(std::move(architecture_id)), input_shape_(input_shape), num_classes_(num_classes) {
    if (num_classes < 2) throw std::invalid_argument("Classifier: need at least 2 classes");
    if (input_shape.c < 1 || input_shape.h < 8 || input_shape.w < 8)
        throw std::invalid_argument("Classifier: input must be at least 8x8");

    StackBuilder b;
    b.cur = input_shape;
    if (arch_ == "cnn_a") {
        b.conv3x3(16);
        b.relu();
        b.maxpool2();
        b.conv3x3(32);
        b.relu();
        b.maxpool2();
        b.dense(num_classes);
    } else if (arch_ == "cnn_b") {
        b.conv3x3(8);
        b.relu();
        b.conv3x3(8);
        b.relu();
        b.maxpool2();
        b.dense(64);
        b.relu();
        b.dense(num_classes);
    } else if (arch_ == "mlp") {
        b.dense(64);
        b.relu();
        b.dense(num_classes);
    } else {
        throw std::invalid_argument("Classifier: unknown architecture '" + arch_ + "'");
    }
    layers_ = std::move(b.layers);
    params_.assign(b.offset, 0.0f);

    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerDesc& L = layers_[i];
        if (L.w_count == 0) continue;
        const std::size_t fan_in = L.kind == LayerKind::conv3x3
                                       ? static_cast<std::size_t>(L.in_shape.c) * 9
                                       : static_cast<std::size_t>(L.in_shape.count());
        const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
        Rng rng(derive_seed(seed, i));
        for (std::size_t k = 0; k < L.w_count; ++k)
            params_[L.w_offset + k] = rng.uniform(-bound, bound);
        // biases stay zero
    }
}

Tape Classifier::forward_tape(const ImageTensor& x) const {
    if (x.shape() != input_shape_)
        throw std::invalid_argument("Classifier: input shape " + x.shape().str() +
                                    " != " + input_shape_.str());
    const auto& K = kernels::active();
    Tape t;
    t.input.assign(x.values().begin(), x.values().end());
    t.acts.resize(layers_.size());
    t.pool_argmax.resize(layers_.size());

    const float* cur = t.input.data();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerDesc& L = layers_[i];
        t.acts[i].resize(static_cast<std::size_t>(L.out_shape.count()));
        float* out = t.acts[i].data();
        switch (L.kind) {
            case LayerKind::conv3x3:
                conv3x3_forward(cur, L, params_.data() + L.w_offset, params_.data() + L.b_offset,
                                out);
                break;
            case LayerKind::relu:
                K.relu(out, cur, t.acts[i].size());
                break;
            case LayerKind::maxpool2:
                maxpool2_forward(cur, L, out, t.pool_argmax[i]);
                break;
            case LayerKind::dense:
                dense_forward(cur, L, params_.data() + L.w_offset, params_.data() + L.b_offset,
                              out);
                break;
        }
        cur = out;
    }
    return t;
}

std::vector<float> Classifier::forward(const ImageTensor& x) const {
    return forward_tape(x).logits();
}

int Classifier::predict(const ImageTensor& x) const {
    const auto z = forward(x);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

float Classifier::loss(const ImageTensor& x, int y) const {
    return ce_from_logits(forward(x), y, nullptr);
}

std::vector<float> Classifier::backprop(const Tape& tape, std::vector<float> cot, int top,
                                        int stop, std::span<float> param_grad) const {
    const auto& K = kernels::active();
    for (int i = top; i > stop; --i) {
        const LayerDesc& L = layers_[i];
        const float* in_act = i == 0 ? tape.input.data() : tape.acts[i - 1].data();
        std::vector<float> dx(static_cast<std::size_t>(L.in_shape.count()));
        switch (L.kind) {
            case LayerKind::conv3x3:
                if (!param_grad.empty())
                    conv3x3_backward_dw(in_act, cot.data(), L, param_grad.data() + L.w_offset,
                                        param_grad.data() + L.b_offset);
                conv3x3_backward_dx(cot.data(), L, params_.data() + L.w_offset, dx.data());
                break;
            case LayerKind::relu:
                K.relu_backward(dx.data(), in_act, cot.data(), dx.size());
                break;
            case LayerKind::maxpool2: {
                const auto& am = tape.pool_argmax[i];
                for (std::size_t j = 0; j < cot.size(); ++j) dx[am[j]] += cot[j];
                break;
            }
            case LayerKind::dense: {
                const std::size_t n_in = dx.size();
                if (!param_grad.empty()) {
                    float* dW = param_grad.data() + L.w_offset;
                    float* db = param_grad.data() + L.b_offset;
                    for (int o = 0; o < L.out_shape.c; ++o) {
                        K.axpy(dW + o * n_in, cot[o], in_act, n_in);
                        db[o] += cot[o];
                    }
                }
                const float* W = params_.data() + L.w_offset;
                for (int o = 0; o < L.out_shape.c; ++o) K.axpy(dx.data(), cot[o], W + o * n_in, n_in);
                break;
            }
        }
        cot = std::move(dx);
    }
    return cot;
}

std::pair<float, ImageTensor> Classifier::loss_and_input_grad(const ImageTensor& x, int y) const {
    const Tape tape = forward_tape(x);
    std::vector<float> dlogits;
    const float loss = ce_from_logits(tape.logits(), y, &dlogits);
    dlogits[y] -= 1.0f;
    auto g = backprop(tape, std::move(dlogits), static_cast<int>(layers_.size()) - 1, -1, {});

    ImageTensor grad(input_shape_);
    std::copy(g.begin(), g.end(), grad.data());
    return {loss, std::move(grad)};
}

float Classifier::loss_and_param_grad(const ImageTensor& x, int y,
                                      std::span<float> grad_accum) const {
    if (grad_accum.size() != params_.size())
        throw std::invalid_argument("loss_and_param_grad: gradient buffer size mismatch");
    const Tape tape = forward_tape(x);
    std::vector<float> dlogits;
    const float loss = ce_from_logits(tape.logits(), y, &dlogits);
    dlogits[y] -= 1.0f;
    backprop(tape, std::move(dlogits), static_cast<int>(layers_.size()) - 1, -1, grad_accum);
    return loss;
}

ImageTensor Classifier::input_grad_from_dlogits(const Tape& tape,
                                                std::span<const float> dlogits) const {
    if (dlogits.size() != static_cast<std::size_t>(num_classes_))
        throw std::invalid_argument("input_grad_from_dlogits: cotangent size mismatch");
    auto g = backprop(tape, std::vector<float>(dlogits.begin(), dlogits.end()),
                      static_cast<int>(layers_.size()) - 1, -1, {});
    ImageTensor grad(input_shape_);
    std::copy(g.begin(), g.end(), grad.data());
    return grad;
}

int Classifier::last_conv_layer() const {
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i)
        if (layers_[i].kind == LayerKind::conv3x3) return i;
    return -1;
}

std::vector<float> Classifier::logit_grad_at_layer(const Tape& tape, int class_idx,
                                                   int layer_idx) const {
    if (class_idx < 0 || class_idx >= num_classes_)
        throw std::invalid_argument("logit_grad_at_layer: class out of range");
    if (layer_idx < 0 || layer_idx >= static_cast<int>(layers_.size()))
        throw std::invalid_argument("logit_grad_at_layer: layer out of range");
    std::vector<float> onehot(num_classes_, 0.0f);
    onehot[class_idx] = 1.0f;
    return backprop(tape, std::move(onehot), static_cast<int>(layers_.size()) - 1, layer_idx, {});
}

TrainMetrics train(Classifier& model, const Dataset& ds, const TrainConfig& cfg) {
    if (ds.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (cfg.epochs < 1 || cfg.batch_size < 1)
        throw std::invalid_argument("train: epochs and batch_size must be >= 1");
    for (int lab : ds.labels)
        if (lab < 0 || lab >= model.num_classes())
            throw std::invalid_argument("train: label out of range");

    const auto& K = kernels::active();
    const std::size_t npar = model.params().size();
    std::vector<float> vel(npar, 0.0f), grad(npar);
    std::vector<int> order(ds.size());
    std::iota(order.begin(), order.end(), 0);

    TrainMetrics metrics;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, epoch));
        for (int i = ds.size() - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);

        double loss_sum = 0.0;
        for (int start = 0; start < ds.size(); start += cfg.batch_size) {
            const int bsz = std::min(cfg.batch_size, ds.size() - start);
            std::fill(grad.begin(), grad.end(), 0.0f);
            for (int k = 0; k < bsz; ++k) {
                const int idx = order[start + k];
                if (cfg.example_transform) {
                    const ImageTensor ex =
                        cfg.example_transform(model, ds.images[idx], ds.labels[idx], k);
                    loss_sum += model.loss_and_param_grad(ex, ds.labels[idx], grad);
                } else {
                    loss_sum += model.loss_and_param_grad(ds.images[idx], ds.labels[idx], grad);
                }
            }
            K.scale(grad.data(), 1.0f / static_cast<float>(bsz), npar);
            K.momentum_update(vel.data(), cfg.momentum, grad.data(), 1.0f, npar);
            K.axpy(model.params().data(), -cfg.lr, vel.data(), npar);
        }
        metrics.epoch_loss.push_back(static_cast<float>(loss_sum / ds.size()));
    }
    metrics.train_accuracy = accuracy(model, ds);
    return metrics;
}

float accuracy(const Classifier& model, const Dataset& ds) {
    if (ds.size() == 0) return 0.0f;
    int hits = 0;
    for (int i = 0; i < ds.size(); ++i)
        if (model.predict(ds.images[i]) == ds.labels[i]) ++hits;
    return static_cast<float>(hits) / static_cast<float>(ds.size());
}

namespace {

constexpr char kModelMagic[8] = {'S', 'G', 'P', 'M', 'O', 'D', 'L', '1'};

std::uint32_t payload_crc(const std::vector<float>& params) {
    return static_cast<std::uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(params.data()),
              static_cast<uInt>(params.size() * sizeof(float))));
}

void put_u32le(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

} // namespace

void save_model(const std::string& path, const Classifier& model) {
    nlohmann::json hdr;
    hdr["architecture_id"] = model.architecture_id();
    hdr["input_shape"] = {model.input_shape().c, model.input_shape().h, model.input_shape().w};
    hdr["num_classes"] = model.num_classes();
    nlohmann::json tensors = nlohmann::json::object();
    const auto& layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].w_count == 0) continue;
        const std::string base = "layer" + std::to_string(i);
        tensors[base + ".weight"] = {{"offset", layers[i].w_offset},
                                     {"count", layers[i].w_count}};
        tensors[base + ".bias"] = {{"offset", layers[i].b_offset}, {"count", layers[i].b_count}};
    }
    hdr["tensors"] = std::move(tensors);
    const std::string hs = hdr.dump();

    std::string blob(kModelMagic, sizeof kModelMagic);
    put_u32le(blob, static_cast<std::uint32_t>(hs.size()));
    blob += hs;
    const auto p = model.params();
    blob.append(reinterpret_cast<const char*>(p.data()), p.size() * sizeof(float));
    std::vector<float> pv(p.begin(), p.end());
    put_u32le(blob, payload_crc(pv));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataFormatError(path + ": cannot open for writing");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataFormatError(path + ": write failed");
}

Classifier load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelIoError(ModelIoCode::truncated, path + ": cannot open");
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());

    if (blob.size() < sizeof kModelMagic ||
        std::memcmp(blob.data(), kModelMagic, sizeof kModelMagic) != 0)
        throw ModelIoError(ModelIoCode::bad_magic, path + ": not a model file");
    if (blob.size() < sizeof kModelMagic + 4)
        throw ModelIoError(ModelIoCode::truncated, path + ": header length missing");

    const std::uint32_t hlen = get_u32le(blob.data() + 8);
    const std::size_t header_end = 12 + static_cast<std::size_t>(hlen);
    if (header_end > blob.size())
        throw ModelIoError(ModelIoCode::truncated, path + ": header runs past end of file");

    nlohmann::json hdr;
    try {
        hdr = nlohmann::json::parse(blob.begin() + 12, blob.begin() + header_end);
    } catch (const nlohmann::json::exception& e) {
        throw ModelIoError(ModelIoCode::bad_header, path + ": header is not valid JSON: " + e.what());
    }

    std::string arch;
    Shape shape{};
    int classes = 0;
    try {
        arch = hdr.at("architecture_id").get<std::string>();
        const auto& js = hdr.at("input_shape");
        shape = {js.at(0).get<int>(), js.at(1).get<int>(), js.at(2).get<int>()};
        classes = hdr.at("num_classes").get<int>();
        (void)hdr.at("tensors");
    } catch (const nlohmann::json::exception& e) {
        throw ModelIoError(ModelIoCode::bad_header, path + ": missing header field: " + e.what());
    }
    if (arch != "cnn_a" && arch != "cnn_b" && arch != "mlp")
        throw ModelIoError(ModelIoCode::unsupported_architecture,
                           path + ": unknown architecture '" + arch + "'");

    Classifier model(arch, shape, classes, 0);
    const std::size_t nfloats = model.params().size();
    const std::size_t need = header_end + nfloats * sizeof(float) + 4;
    if (blob.size() < need)
        throw ModelIoError(ModelIoCode::truncated, path + ": parameter payload cut short");
    if (blob.size() > need)
        throw ModelIoError(ModelIoCode::bad_header, path + ": trailing bytes after checksum");

    std::vector<float> payload(nfloats);
    std::memcpy(payload.data(), blob.data() + header_end, nfloats * sizeof(float));
    if (get_u32le(blob.data() + need - 4) != payload_crc(payload))
        throw ModelIoError(ModelIoCode::bad_crc, path + ": payload checksum mismatch");

    auto dst = model.params();
    const auto& layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].w_count == 0) continue;
        const std::string base = "layer" + std::to_string(i);
        for (const auto& [suffix, off, cnt] :
             {std::tuple{".weight", layers[i].w_offset, layers[i].w_count},
              std::tuple{".bias", layers[i].b_offset, layers[i].b_count}}) {
            const auto it = hdr["tensors"].find(base + suffix);
            if (it == hdr["tensors"].end())
                throw ModelIoError(ModelIoCode::bad_header,
                                   path + ": missing tensor " + base + suffix);
            std::size_t src_off, src_cnt;
            try {
                src_off = it->at("offset").get<std::size_t>();
                src_cnt = it->at("count").get<std::size_t>();
            } catch (const nlohmann::json::exception& e) {
                throw ModelIoError(ModelIoCode::bad_header,
                                   path + ": bad tensor entry " + base + suffix + ": " + e.what());
            }
            if (src_cnt != cnt || src_off + src_cnt > nfloats)
                throw ModelIoError(ModelIoCode::bad_header,
                                   path + ": tensor " + base + suffix + " out of bounds");
            std::copy_n(payload.begin() + src_off, cnt, dst.begin() + off);
        }
    }
    return model;
}

// Float64 re-execution of the forward pass with plain loops. grad_check uses
// it for central differences and for spotting kinks near the evaluation
// point: ReLU pre-activation signs (0 when within tol of the kink) and
// pooling argmax choices are recorded for comparison between the +-h runs.
struct F64Probe {
    const Classifier& m;

    double loss(std::span<const double> params, std::span<const double> input, int y,
                std::vector<signed char>& signs, std::vector<int>& argmax) const {
        constexpr double kink_tol = 1e-4;
        signs.clear();
        argmax.clear();
        std::vector<double> cur(input.begin(), input.end());
        for (const LayerDesc& L : m.layers()) {
            std::vector<double> out(static_cast<std::size_t>(L.out_shape.count()));
            switch (L.kind) {
                case LayerKind::conv3x3: {
                    const int h = L.in_shape.h, w = L.in_shape.w;
                    for (int co = 0; co < L.out_shape.c; ++co)
                        for (int y2 = 0; y2 < h; ++y2)
                            for (int x = 0; x < w; ++x) {
                                double acc = params[L.b_offset + co];
                                for (int ci = 0; ci < L.in_shape.c; ++ci)
                                    for (int ky = 0; ky < 3; ++ky)
                                        for (int kx = 0; kx < 3; ++kx) {
                                            const int iy = y2 + ky - 1, ix = x + kx - 1;
                                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                            acc += params[L.w_offset +
                                                          ((static_cast<std::size_t>(co) *
                                                                L.in_shape.c +
                                                            ci) *
                                                           9) +
                                                          ky * 3 + kx] *
                                                   cur[(static_cast<std::size_t>(ci) * h + iy) * w +
                                                       ix];
                                        }
                                out[(static_cast<std::size_t>(co) * h + y2) * w + x] = acc;
                            }
                    break;
                }
                case LayerKind::relu:
                    for (std::size_t i = 0; i < cur.size(); ++i) {
                        signs.push_back(cur[i] > kink_tol ? 1 : (cur[i] < -kink_tol ? -1 : 0));
                        out[i] = cur[i] > 0.0 ? cur[i] : 0.0;
                    }
                    break;
                case LayerKind::maxpool2: {
                    const int h = L.in_shape.h, w = L.in_shape.w;
                    std::size_t o = 0;
                    for (int c = 0; c < L.in_shape.c; ++c)
                        for (int y2 = 0; y2 < L.out_shape.h; ++y2)
                            for (int x = 0; x < L.out_shape.w; ++x, ++o) {
                                int best = static_cast<int>(
                                    (static_cast<std::size_t>(c) * h + 2 * y2) * w + 2 * x);
                                double bv = cur[best];
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx) {
                                        const int idx = static_cast<int>(
                                            (static_cast<std::size_t>(c) * h + 2 * y2 + dy) * w +
                                            2 * x + dx);
                                        if (cur[idx] > bv) {
                                            bv = cur[idx];
                                            best = idx;
                                        }
                                    }
                                out[o] = bv;
                                argmax.push_back(best);
                            }
                    break;
                }
                case LayerKind::dense: {
                    const std::size_t n_in = cur.size();
                    for (int o = 0; o < L.out_shape.c; ++o) {
                        double acc = params[L.b_offset + o];
                        for (std::size_t i = 0; i < n_in; ++i)
                            acc += params[L.w_offset + o * n_in + i] * cur[i];
                        out[o] = acc;
                    }
                    break;
                }
            }
            cur = std::move(out);
        }
        const double mz = *std::max_element(cur.begin(), cur.end());
        double sum = 0.0;
        for (double z : cur) sum += std::exp(z - mz);
        return mz + std::log(sum) - cur[y];
    }
};

GradCheckResult grad_check(const Classifier& model, const ImageTensor& x, int y,
                           int param_samples, int input_samples, std::uint64_t seed) {
    constexpr double h = 1e-3;

    std::vector<float> pgrad(model.params().size(), 0.0f);
    model.loss_and_param_grad(x, y, pgrad);
    const auto [loss0, igrad] = model.loss_and_input_grad(x, y);
    (void)loss0;

    std::vector<double> P(model.params().begin(), model.params().end());
    std::vector<double> X(x.values().begin(), x.values().end());
    const F64Probe probe{model};

    Rng rng(seed);
    std::set<std::size_t> pidx, xidx;
    for (int i = 0; i < param_samples; ++i) pidx.insert(rng.uniform_int(P.size()));
    for (int i = 0; i < input_samples; ++i) xidx.insert(rng.uniform_int(X.size()));

    GradCheckResult res;
    std::vector<signed char> s_plus, s_minus;
    std::vector<int> a_plus, a_minus;
    auto check = [&](double* slot, float analytic) {
        const double orig = *slot;
        *slot = orig + h;
        const double lp = probe.loss(P, X, y, s_plus, a_plus);
        *slot = orig - h;
        const double lm = probe.loss(P, X, y, s_minus, a_minus);
        *slot = orig;

        // A coordinate is unreliable only when the two runs straddle a kink:
        // some ReLU sign (0 = within tol of the kink) or pooling argmax
        // changes between +h and -h.
        if (s_plus != s_minus || a_plus != a_minus) {
            ++res.excluded;
            return;
        }
        const double numeric = (lp - lm) / (2.0 * h);
        const double rel = std::fabs(numeric - analytic) /
                           std::max(std::fabs(numeric) + std::fabs(analytic), 1e-2);
        res.max_rel_err = std::max(res.max_rel_err, static_cast<float>(rel));
        ++res.checked;
    };

    for (std::size_t i : pidx) check(&P[i], pgrad[i]);
    for (std::size_t i : xidx) check(&X[i], igrad.data()[i]);
    res.pass = res.checked > 0 && res.max_rel_err <= 1e-3f;
    return res;
}

} // namespace sgp
