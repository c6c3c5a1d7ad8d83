#include "sgp/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sgp/errors.hpp"
#include "sgp/image_io.hpp"
#include "sgp/kernels.hpp"
#include "sgp/parallel.hpp"
#include "sgp/rng.hpp"

namespace fs = std::filesystem;

namespace sgp {
namespace {

std::vector<float> blur_defense_kernel() {
    // sigma = 1, taps out to 3 sigma -> 7x7.
    constexpr int ksize = 7;
    std::vector<double> wd(ksize * ksize);
    double sum = 0.0;
    for (int y = 0; y < ksize; ++y)
        for (int x = 0; x < ksize; ++x) {
            const double d2 = static_cast<double>((y - 3) * (y - 3) + (x - 3) * (x - 3));
            wd[y * ksize + x] = std::exp(-d2 / 2.0);
            sum += wd[y * ksize + x];
        }
    std::vector<float> out(wd.size());
    for (std::size_t i = 0; i < wd.size(); ++i) out[i] = static_cast<float>(wd[i] / sum);
    return out;
}

std::string format_rate(float rate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", rate);
    return buf;
}

} // namespace

const std::vector<std::string>& defense_names() {
    static const std::vector<std::string> names = {"none", "blur", "bitdepth", "adv_trained"};
    return names;
}

DefenseWrapper make_defense(const std::string& name, const Classifier& model) {
    DefenseWrapper d;
    d.name = name;
    d.model = &model;
    if (name == "none" || name == "adv_trained") {
        // identity preprocessing; adv_trained differs only in the weights
    } else if (name == "blur") {
        d.preprocess = [k = blur_defense_kernel()](const ImageTensor& x) {
            return conv2d_reflect(x, k, 7);
        };
    } else if (name == "bitdepth") {
        d.preprocess = [](const ImageTensor& x) {
            ImageTensor out = x;
            for (float& v : out.values())
                v = std::round(std::clamp(v, 0.0f, 1.0f) * 15.0f) / 15.0f;
            return out;
        };
    } else {
        throw std::invalid_argument("unknown defense '" + name + "'");
    }
    return d;
}

SuccessRate attack_success_rate(const DefenseWrapper& target,
                                const std::vector<AdvExample>& batch) {
    SuccessRate sr;
    for (const AdvExample& e : batch) {
        if (target.predict(e.x) != e.y) continue; // clean miss: out of scope
        ++sr.n;
        if (target.predict(e.x_adv) != e.y) ++sr.fooled;
    }
    sr.rate = sr.n > 0 ? static_cast<float>(sr.fooled) / static_cast<float>(sr.n) : 0.0f;
    return sr;
}

std::vector<AdvExample> craft_adversarial(const Ensemble& surrogate, const Dataset& ds,
                                          const AttackConfig& cfg, int threads) {
    kernels::active(); // pin the backend before any worker races to pick one
    std::vector<AdvExample> out(ds.size());
    parallel_for(ds.size(), threads, [&](std::size_t i) {
        AttackConfig c = cfg;
        c.seed = derive_seed(cfg.seed, i);
        AttackResult r = sgp_attack(surrogate, ds.images[i], ds.labels[i], c);
        out[i] = {ds.images[i], std::move(r.x_adv), ds.labels[i]};
    });
    return out;
}

std::vector<TransferCell> transfer_matrix(const std::vector<NamedModel>& surrogates,
                                          const std::vector<std::string>& attacks,
                                          const std::vector<DefenseWrapper>& targets,
                                          const Dataset& ds, const AttackConfig& base,
                                          int threads) {
    std::vector<TransferCell> cells;
    for (const NamedModel& s : surrogates) {
        const Ensemble ens{{s.model}, {1.0f}};
        for (const std::string& atk : attacks) {
            const AttackConfig cfg = attack_preset(atk, base);
            const auto batch = craft_adversarial(ens, ds, cfg, threads);
            for (const DefenseWrapper& t : targets)
                cells.push_back({s.name, atk, t.name, attack_success_rate(t, batch)});
        }
    }
    return cells;
}

std::vector<AblationRow> ablate_depth(const Ensemble& surrogate, const DefenseWrapper& target,
                                      const Dataset& ds, const AttackConfig& base, int max_m,
                                      int threads) {
    if (max_m < 1) throw std::invalid_argument("ablate_depth: max_m must be >= 1");
    std::vector<AblationRow> rows;
    for (int m = 1; m <= max_m; ++m) {
        AttackConfig cfg = attack_preset("sgp", base);
        cfg.depth = m;
        const auto batch = craft_adversarial(surrogate, ds, cfg, threads);
        AblationRow row;
        row.depth = m;
        row.sr = attack_success_rate(target, batch);
        row.gradient_calls = (3 * m - 2) * cfg.steps;
        rows.push_back(row);
    }
    return rows;
}

ImageTensor gradcam(const Classifier& model, const ImageTensor& x, int class_idx) {
    const int conv_idx = model.last_conv_layer();
    if (conv_idx < 0)
        throw std::invalid_argument("gradcam: architecture '" + model.architecture_id() +
                                    "' has no convolution layers");
    if (class_idx < 0 || class_idx >= model.num_classes())
        throw std::invalid_argument("gradcam: class out of range");

    const auto& K = kernels::active();
    const Tape tape = model.forward_tape(x);
    const Shape as = model.layers()[conv_idx].out_shape;
    const std::size_t plane = static_cast<std::size_t>(as.h) * as.w;
    const std::vector<float>& acts = tape.acts[conv_idx];
    const std::vector<float> grads = model.logit_grad_at_layer(tape, class_idx, conv_idx);

    ImageTensor heat(1, as.h, as.w);
    for (int c = 0; c < as.c; ++c) {
        const float w = K.sum(grads.data() + c * plane, plane) / static_cast<float>(plane);
        K.axpy(heat.data(), w, acts.data() + c * plane, plane);
    }
    for (float& v : heat.values()) v = v > 0.0f ? v : 0.0f;

    ImageTensor up = resize_bilinear(heat, x.height(), x.width());
    const float peak = *std::max_element(up.values().begin(), up.values().end());
    if (peak > 0.0f) K.scale(up.data(), 1.0f / peak, up.size());
    return up;
}

Classifier adversarial_training(const std::string& arch, const Dataset& ds,
                                const TrainConfig& tcfg, float train_epsilon) {
    if (ds.size() == 0) throw std::invalid_argument("adversarial_training: empty dataset");
    Classifier model(arch, ds.images.front().shape(), ds.num_classes, tcfg.seed);

    AttackConfig fgsm;
    fgsm.epsilon = train_epsilon;
    fgsm.steps = 1;
    fgsm.depth = 1;

    TrainConfig cfg = tcfg;
    cfg.example_transform = [fgsm](const Classifier& m, const ImageTensor& x, int label,
                                   int batch_pos) {
        if (batch_pos % 2 == 0) return x;
        return sgp_attack(m, x, label, fgsm).x_adv;
    };
    train(model, ds, cfg);
    return model;
}

std::string emit_csv(const std::vector<TransferCell>& cells) {
    std::string out = "surrogate,attack,target,n,fooled,rate\n";
    for (const TransferCell& c : cells)
        out += c.surrogate + "," + c.attack + "," + c.target + "," + std::to_string(c.sr.n) +
               "," + std::to_string(c.sr.fooled) + "," + format_rate(c.sr.rate) + "\n";
    return out;
}

std::vector<TransferCell> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "surrogate,attack,target,n,fooled,rate")
        throw DataFormatError("results csv: missing or wrong header");

    std::vector<TransferCell> cells;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        TransferCell c;
        std::string n, fooled, rate;
        if (!std::getline(row, c.surrogate, ',') || !std::getline(row, c.attack, ',') ||
            !std::getline(row, c.target, ',') || !std::getline(row, n, ',') ||
            !std::getline(row, fooled, ',') || !std::getline(row, rate))
            throw DataFormatError("results csv: malformed row '" + line + "'");
        try {
            c.sr.n = std::stoi(n);
            c.sr.fooled = std::stoi(fooled);
            c.sr.rate = std::stof(rate);
        } catch (const std::exception&) {
            throw DataFormatError("results csv: non-numeric field in '" + line + "'");
        }
        cells.push_back(std::move(c));
    }
    return cells;
}

std::string emit_markdown(const std::vector<TransferCell>& cells) {
    // Preserve first-appearance order for every axis.
    std::vector<std::string> surrogates, attacks, targets;
    auto note = [](std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };
    for (const TransferCell& c : cells) {
        note(surrogates, c.surrogate);
        note(attacks, c.attack);
        note(targets, c.target);
    }

    std::string out;
    for (const std::string& s : surrogates) {
        out += "## surrogate: " + s + "\n\n| attack |";
        for (const std::string& t : targets) out += " " + t + " |";
        out += "\n|---|";
        for (std::size_t i = 0; i < targets.size(); ++i) out += "---|";
        out += "\n";
        for (const std::string& a : attacks) {
            out += "| " + a + " |";
            for (const std::string& t : targets) {
                const auto it = std::find_if(cells.begin(), cells.end(), [&](const auto& c) {
                    return c.surrogate == s && c.attack == a && c.target == t;
                });
                out += it == cells.end() ? " - |" : " " + format_rate(it->sr.rate) + " |";
            }
            out += "\n";
        }
        out += "\n";
    }
    return out;
}

void save_adv_archive(const std::string& dir, const std::vector<AdvExample>& batch,
                      const std::string& meta_json) {
    fs::create_directories(dir);
    nlohmann::json meta;
    if (!meta_json.empty()) {
        try {
            meta = nlohmann::json::parse(meta_json);
        } catch (const nlohmann::json::exception& e) {
            throw DataFormatError(std::string("archive metadata is not valid JSON: ") + e.what());
        }
    }
    meta["n"] = batch.size();
    nlohmann::json labels = nlohmann::json::array();
    char name[48];
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::snprintf(name, sizeof name, "pair_%05zu_clean.ppm", i);
        write_netpbm((fs::path(dir) / name).string(), batch[i].x);
        std::snprintf(name, sizeof name, "pair_%05zu_adv.ppm", i);
        write_netpbm((fs::path(dir) / name).string(), batch[i].x_adv);
        labels.push_back(batch[i].y);
    }
    meta["labels"] = std::move(labels);
    std::ofstream js(fs::path(dir) / "archive.json");
    if (!js) throw DataFormatError(dir + "/archive.json: cannot open for writing");
    js << meta.dump(2) << "\n";
}

std::vector<AdvExample> load_adv_archive(const std::string& dir) {
    std::ifstream js(fs::path(dir) / "archive.json");
    if (!js) throw DataFormatError(dir + "/archive.json: cannot open");
    nlohmann::json meta;
    try {
        js >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw DataFormatError(dir + "/archive.json: " + e.what());
    }
    if (!meta.contains("n") || !meta.contains("labels") || !meta["labels"].is_array())
        throw DataFormatError(dir + "/archive.json: missing n or labels");
    const std::size_t n = meta["n"].get<std::size_t>();
    if (meta["labels"].size() != n)
        throw DataFormatError(dir + "/archive.json: label count mismatch");

    std::vector<AdvExample> batch(n);
    char name[48];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(name, sizeof name, "pair_%05zu_clean.ppm", i);
        batch[i].x = read_netpbm((fs::path(dir) / name).string());
        std::snprintf(name, sizeof name, "pair_%05zu_adv.ppm", i);
        batch[i].x_adv = read_netpbm((fs::path(dir) / name).string());
        batch[i].y = meta["labels"][i].get<int>();
    }
    return batch;
}

} // namespace sgp
