#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sgp/data.hpp"
#include "sgp/tensor.hpp"

namespace sgp {

enum class LayerKind { conv3x3, relu, maxpool2, dense };

struct LayerDesc {
    LayerKind kind;
    Shape in_shape;
    Shape out_shape; // dense outputs are {n, 1, 1}; dense inputs flatten row-major
    std::size_t w_offset = 0, w_count = 0;
    std::size_t b_offset = 0, b_count = 0;
};

// Forward activations kept for the backward passes. acts[i] is the output of
// layer i; the final entry holds the logits.
struct Tape {
    std::vector<float> input;
    std::vector<std::vector<float>> acts;
    std::vector<std::vector<int>> pool_argmax; // flat input index per pooled cell

    const std::vector<float>& logits() const { return acts.back(); }
};

std::vector<float> softmax(std::span<const float> logits);

// Numerically shifted cross-entropy: max(z) + log(sum exp(z - max)) - z[y].
// Optionally also yields the softmax probabilities from the same pass, so
// callers share one arithmetic path with the training loss.
float cross_entropy_from_logits(std::span<const float> logits, int y,
                                std::vector<float>* probs = nullptr);

// Small fixed zoo. conv3x3 is stride 1 with zero padding 1; maxpool2 is 2x2
// stride 2 with floor shapes and first-maximum tie-break; ReLU'(0) = 0.
//   cnn_a: conv16-relu-pool-conv32-relu-pool-dense
//   cnn_b: conv8-relu-conv8-relu-pool-dense64-relu-dense
//   mlp:   dense64-relu-dense
class Classifier {
public:
    // Weights start uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] from a
    // per-layer seed stream; biases start at zero.
    Classifier(std::string architecture_id, Shape input_shape, int num_classes,
               std::uint64_t seed);

    const std::string& architecture_id() const { return arch_; }
    Shape input_shape() const { return input_shape_; }
    int num_classes() const { return num_classes_; }
    const std::vector<LayerDesc>& layers() const { return layers_; }
    std::span<float> params() { return params_; }
    std::span<const float> params() const { return params_; }

    Tape forward_tape(const ImageTensor& x) const;
    std::vector<float> forward(const ImageTensor& x) const;
    int predict(const ImageTensor& x) const;

    float loss(const ImageTensor& x, int y) const;
    std::pair<float, ImageTensor> loss_and_input_grad(const ImageTensor& x, int y) const;
    // Adds this example's parameter gradient into grad_accum (size == params).
    float loss_and_param_grad(const ImageTensor& x, int y, std::span<float> grad_accum) const;

    // Input gradient for an arbitrary logit cotangent; shares the backward
    // pass with loss_and_input_grad so weighted fusions stay bit-stable.
    ImageTensor input_grad_from_dlogits(const Tape& tape, std::span<const float> dlogits) const;

    // Index of the deepest conv3x3 layer, -1 if the stack has none.
    int last_conv_layer() const;
    // d(logit[class_idx]) / d(output of layer layer_idx).
    std::vector<float> logit_grad_at_layer(const Tape& tape, int class_idx, int layer_idx) const;

private:
    friend struct F64Probe;
    std::vector<float> backprop(const Tape& tape, std::vector<float> cot, int top, int stop,
                                std::span<float> param_grad) const;

    std::string arch_;
    Shape input_shape_;
    int num_classes_;
    std::vector<LayerDesc> layers_;
    std::vector<float> params_;
};

struct TrainConfig {
    int epochs = 6;
    int batch_size = 16;
    float lr = 0.05f;
    float momentum = 0.9f;
    std::uint64_t seed = 1;
    // Optional per-example substitution applied before the gradient pass,
    // e.g. to swap in perturbed copies. Receives the position inside the
    // batch so callers can target a deterministic subset.
    std::function<ImageTensor(const Classifier&, const ImageTensor&, int label, int batch_pos)>
        example_transform;
};

struct TrainMetrics {
    std::vector<float> epoch_loss;
    float train_accuracy = 0.0f;
};

// Plain SGD with classical momentum (v = m*v + g; p -= lr*v) over batches of
// a per-epoch reshuffled index order. Fully seeded: same config, same bits.
TrainMetrics train(Classifier& model, const Dataset& ds, const TrainConfig& cfg);

float accuracy(const Classifier& model, const Dataset& ds);

// Serialized container: magic "SGPMODL1", little-endian u32 JSON header
// length, JSON header (architecture, shapes, tensor table), packed f32
// parameter payload, CRC-32 of the payload bytes.
void save_model(const std::string& path, const Classifier& model);
Classifier load_model(const std::string& path);

struct GradCheckResult {
    int checked = 0;
    int excluded = 0;   // coordinates skipped because a kink sat inside +-h
    float max_rel_err = 0.0f;
    bool pass = false;
};

// Central-difference validation of the analytic gradients in float64
// (h = 1e-3). Samples parameter and input coordinates from a seeded stream;
// coordinates whose perturbation flips a ReLU sign or a pooling argmax, or
// that sit within 1e-4 of a ReLU kink, are excluded and counted.
GradCheckResult grad_check(const Classifier& model, const ImageTensor& x, int y,
                           int param_samples, int input_samples, std::uint64_t seed);

} // namespace sgp
