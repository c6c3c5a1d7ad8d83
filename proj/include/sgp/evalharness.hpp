#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sgp/attacks.hpp"
#include "sgp/data.hpp"
#include "sgp/nn.hpp"

namespace sgp {

// A target model behind an optional input-cleansing step.
struct DefenseWrapper {
    std::string name;
    const Classifier* model = nullptr;
    std::function<ImageTensor(const ImageTensor&)> preprocess; // empty = identity

    int predict(const ImageTensor& x) const {
        return model->predict(preprocess ? preprocess(x) : x);
    }
};

// none: identity. blur: 7x7 Gaussian (sigma 1). bitdepth: requantize pixels
// to 4 bits. adv_trained: identity preprocessing; pass the hardened model.
DefenseWrapper make_defense(const std::string& name, const Classifier& model);
const std::vector<std::string>& defense_names();

struct AdvExample {
    ImageTensor x;     // clean input, kept for the filtering convention
    ImageTensor x_adv;
    int y = 0;
};

struct SuccessRate {
    int n = 0;      // examples the target classifies correctly when clean
    int fooled = 0; // of those, how many flip under the perturbation
    float rate = 0.0f;
};

// Success is only counted over examples the clean target gets right; an
// empty filtered set reports n = 0, rate 0.
SuccessRate attack_success_rate(const DefenseWrapper& target,
                                const std::vector<AdvExample>& batch);

// One adversarial copy per dataset example. Per-example seed streams are
// derived from cfg.seed, so results do not depend on the thread count.
std::vector<AdvExample> craft_adversarial(const Ensemble& surrogate, const Dataset& ds,
                                          const AttackConfig& cfg, int threads = 1);

struct NamedModel {
    std::string name;
    const Classifier* model = nullptr;
};

struct TransferCell {
    std::string surrogate, attack, target;
    SuccessRate sr;
};

// Full cross product in deterministic order: surrogate-major, then attack,
// then target. Each (surrogate, attack) pair crafts its batch once.
std::vector<TransferCell> transfer_matrix(const std::vector<NamedModel>& surrogates,
                                          const std::vector<std::string>& attacks,
                                          const std::vector<DefenseWrapper>& targets,
                                          const Dataset& ds, const AttackConfig& base,
                                          int threads = 1);

struct AblationRow {
    int depth = 0;
    SuccessRate sr;
    int gradient_calls = 0; // per example
};

// Plain pyramid attack swept over depth 1..max_m against one target.
std::vector<AblationRow> ablate_depth(const Ensemble& surrogate, const DefenseWrapper& target,
                                      const Dataset& ds, const AttackConfig& base, int max_m,
                                      int threads = 1);

// Class evidence map: channel-weighted sum of the deepest convolution's
// output (weights = spatial mean of the class logit's gradient there),
// rectified, bilinearly upsampled to input size and scaled so the peak is 1
// (all-zero maps stay zero). Architectures without convolutions are refused.
ImageTensor gradcam(const Classifier& model, const ImageTensor& x, int class_idx);

// Trains arch from scratch; examples at odd batch positions are replaced by
// single-step sign-attack copies against the current weights (budget
// acfg.epsilon). A zero budget reproduces plain training bit for bit.
Classifier adversarial_training(const std::string& arch, const Dataset& ds,
                                const TrainConfig& tcfg, float train_epsilon);

// CSV with the exact header "surrogate,attack,target,n,fooled,rate"; rate
// uses fixed 4-decimal formatting. parse_csv round-trips emit_csv output.
std::string emit_csv(const std::vector<TransferCell>& cells);
std::vector<TransferCell> parse_csv(const std::string& text);
// Markdown pivot grid, one table per surrogate: rows attacks, columns targets.
std::string emit_markdown(const std::vector<TransferCell>& cells);

// Adversarial batch archive: one 8-bit netpbm pair per example plus
// archive.json (labels and caller-supplied metadata). Because clean pixels
// sit on the 1/255 grid and the step budget is quantized the same way, the
// perturbation survives the 8-bit round trip.
void save_adv_archive(const std::string& dir, const std::vector<AdvExample>& batch,
                      const std::string& meta_json);
std::vector<AdvExample> load_adv_archive(const std::string& dir);

} // namespace sgp
