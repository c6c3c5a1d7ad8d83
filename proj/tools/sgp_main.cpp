// Command-line front end: gen-data, train, attack, eval, ablate, heatmap.
//
// Exit codes: 0 success, 1 usage error, 2 malformed data or model file,
// 3 infeasible pyramid depth for the given image size.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgp/attacks.hpp"
#include "sgp/data.hpp"
#include "sgp/errors.hpp"
#include "sgp/evalharness.hpp"
#include "sgp/image_io.hpp"
#include "sgp/nn.hpp"
#include "sgp/pyramid.hpp"
#include "sgp/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw sgp::DataFormatError(path + ": cannot open for writing");
    out << text;
}

const char* scheme_tag(sgp::SampleScheme s) {
    switch (s) {
        case sgp::SampleScheme::original: return "orig";
        case sgp::SampleScheme::rc: return "rc";
        case sgp::SampleScheme::r: return "r";
        case sgp::SampleScheme::c: return "c";
    }
    return "?";
}

struct DataArgs {
    std::string dir;
    std::string idx_images, idx_labels;

    void attach(CLI::App* cmd) {
        cmd->add_option("--data", dir, "dataset directory (from gen-data)");
        cmd->add_option("--idx-images", idx_images, "IDX image file (alternative to --data)");
        cmd->add_option("--idx-labels", idx_labels, "IDX label file");
    }
    sgp::Dataset load() const {
        if (!dir.empty()) return sgp::load_dataset_dir(dir);
        if (!idx_images.empty() && !idx_labels.empty())
            return sgp::load_idx(idx_images, idx_labels);
        throw std::invalid_argument("need --data or both --idx-images and --idx-labels");
    }
};

struct AttackArgs {
    float eps255 = 16.0f; // L-inf budget on the 0..255 scale
    int steps = 10;
    int depth = 3;
    float mu = 1.0f;
    std::string grad_mode = "chained";
    bool no_clip = false;
    float dim_prob = 0.5f;
    int tim_ksize = 7;
    int sim_copies = 5;
    std::uint64_t seed = 7;

    void attach(CLI::App* cmd) {
        cmd->add_option("--eps", eps255, "L-inf budget on the 0..255 pixel scale")
            ->check(CLI::NonNegativeNumber);
        cmd->add_option("--steps", steps, "iterations T")->check(CLI::PositiveNumber);
        cmd->add_option("--depth", depth, "pyramid layers m")->check(CLI::PositiveNumber);
        cmd->add_option("--mu", mu, "momentum decay");
        cmd->add_option("--grad-mode", grad_mode, "chained|detached")
            ->check(CLI::IsMember({"chained", "detached"}));
        cmd->add_flag("--no-clip", no_clip, "skip clamping adversarial pixels to [0,1]");
        cmd->add_option("--dim-prob", dim_prob, "diversity transform probability");
        cmd->add_option("--tim-ksize", tim_ksize, "gradient smoothing kernel size (odd)");
        cmd->add_option("--sim-copies", sim_copies, "scale copies");
        cmd->add_option("--seed", seed, "seed for the diversity draws");
    }
    sgp::AttackConfig base() const {
        sgp::AttackConfig cfg;
        cfg.epsilon = eps255 / 255.0f;
        cfg.steps = steps;
        cfg.depth = depth;
        cfg.momentum = mu;
        cfg.grad_mode =
            grad_mode == "detached" ? sgp::GradMode::detached : sgp::GradMode::chained;
        cfg.clip_to_valid = !no_clip;
        cfg.dim_prob = dim_prob;
        cfg.tim_ksize = tim_ksize;
        cfg.sim_copies = sim_copies;
        cfg.seed = seed;
        return cfg;
    }
    json to_json(const std::string& attack) const {
        json j;
        j["attack"] = attack;
        j["eps"] = eps255;
        j["steps"] = steps;
        j["depth"] = depth;
        j["mu"] = mu;
        j["grad_mode"] = grad_mode;
        j["clip_to_valid"] = !no_clip;
        j["dim_prob"] = dim_prob;
        j["tim_ksize"] = tim_ksize;
        j["sim_copies"] = sim_copies;
        j["seed"] = seed;
        return j;
    }
};

int run_gen(const std::string& out, int n, std::uint64_t seed, int height, int width) {
    const sgp::Dataset ds = sgp::gen_synthetic(n, seed, height, width);
    sgp::save_dataset_dir(out, ds);

    json manifest;
    manifest["command"] = "gen-data";
    manifest["version"] = sgp::kVersion;
    manifest["n"] = n;
    manifest["seed"] = seed;
    manifest["height"] = height;
    manifest["width"] = width;
    write_text((fs::path(out) / "manifest.json").string(), manifest.dump(2) + "\n");
    std::cout << "wrote " << n << " examples to " << out << "\n";
    return 0;
}

int run_train(const DataArgs& data, const std::string& arch, const std::string& out,
              const sgp::TrainConfig& tcfg, float adv_eps255) {
    const sgp::Dataset ds = data.load();
    if (ds.size() == 0) throw sgp::DataFormatError("training dataset is empty");

    sgp::Classifier model = [&] {
        if (adv_eps255 >= 0.0f)
            return sgp::adversarial_training(arch, ds, tcfg, adv_eps255 / 255.0f);
        sgp::Classifier m(arch, ds.images.front().shape(), ds.num_classes, tcfg.seed);
        sgp::train(m, ds, tcfg);
        return m;
    }();
    sgp::save_model(out, model);
    const float acc = sgp::accuracy(model, ds);

    json manifest;
    manifest["command"] = "train";
    manifest["version"] = sgp::kVersion;
    manifest["architecture"] = arch;
    manifest["epochs"] = tcfg.epochs;
    manifest["batch_size"] = tcfg.batch_size;
    manifest["lr"] = tcfg.lr;
    manifest["momentum"] = tcfg.momentum;
    manifest["seed"] = tcfg.seed;
    manifest["adv_eps"] = adv_eps255;
    manifest["train_accuracy"] = acc;
    write_text(out + ".manifest.json", manifest.dump(2) + "\n");

    std::printf("trained %s: train_accuracy=%.4f -> %s\n", arch.c_str(), acc, out.c_str());
    return 0;
}

int run_attack(const std::vector<std::string>& model_paths, const DataArgs& data,
               const std::string& attack, const AttackArgs& aargs, const std::string& out,
               int threads) {
    const sgp::Dataset ds = data.load();
    std::vector<sgp::Classifier> models;
    models.reserve(model_paths.size());
    for (const auto& p : model_paths) models.push_back(sgp::load_model(p));

    sgp::Ensemble ens;
    const float w = 1.0f / static_cast<float>(models.size());
    for (const auto& m : models) {
        ens.models.push_back(&m);
        ens.weights.push_back(w);
    }

    const sgp::AttackConfig cfg = sgp::attack_preset(attack, aargs.base());
    const auto batch = sgp::craft_adversarial(ens, ds, cfg, threads);

    json meta = aargs.to_json(attack);
    meta["command"] = "attack";
    meta["version"] = sgp::kVersion;
    json names = json::array();
    for (const auto& p : model_paths) names.push_back(stem_of(p));
    meta["surrogates"] = std::move(names);
    sgp::save_adv_archive(out, batch, meta.dump());

    std::cout << "crafted " << batch.size() << " adversarial pairs -> " << out << "\n";
    return 0;
}

int run_eval(const DataArgs& data, const std::vector<std::string>& surrogate_paths,
             const std::vector<std::string>& target_paths,
             const std::vector<std::string>& defenses, const std::string& attacks_csv,
             const AttackArgs& aargs, int threads, const std::string& out_csv,
             const std::string& out_md) {
    const sgp::Dataset ds = data.load();

    std::vector<sgp::Classifier> loaded;
    loaded.reserve(surrogate_paths.size() + target_paths.size());
    std::vector<sgp::NamedModel> surrogates;
    for (const auto& p : surrogate_paths) {
        loaded.push_back(sgp::load_model(p));
        surrogates.push_back({stem_of(p), &loaded.back()});
    }
    std::vector<sgp::DefenseWrapper> targets;
    for (const auto& p : target_paths) {
        loaded.push_back(sgp::load_model(p));
        for (const auto& def : defenses) {
            sgp::DefenseWrapper d = sgp::make_defense(def, loaded.back());
            d.name = def == "none" ? stem_of(p) : stem_of(p) + "+" + def;
            targets.push_back(std::move(d));
        }
    }

    std::vector<std::string> attacks;
    std::stringstream ss(attacks_csv);
    for (std::string tok; std::getline(ss, tok, ',');)
        if (!tok.empty()) attacks.push_back(tok);
    if (attacks.empty()) throw std::invalid_argument("--attacks lists no attack names");

    const auto cells =
        sgp::transfer_matrix(surrogates, attacks, targets, ds, aargs.base(), threads);
    const std::string csv = sgp::emit_csv(cells);

    if (out_csv.empty()) {
        std::cout << csv;
    } else {
        write_text(out_csv, csv);
        json sidecar = aargs.to_json(attacks_csv);
        sidecar["command"] = "eval";
        sidecar["version"] = sgp::kVersion;
        write_text(out_csv + ".json", sidecar.dump(2) + "\n");
        std::cout << "wrote " << cells.size() << " rows -> " << out_csv << "\n";
    }
    if (!out_md.empty()) write_text(out_md, sgp::emit_markdown(cells));
    return 0;
}

int run_ablate(const DataArgs& data, const std::string& surrogate_path,
               const std::string& target_path, const std::string& defense, int max_m,
               const AttackArgs& aargs, int threads, const std::string& out) {
    const sgp::Dataset ds = data.load();
    const sgp::Classifier surrogate = sgp::load_model(surrogate_path);
    const sgp::Classifier target = sgp::load_model(target_path);
    const sgp::DefenseWrapper def = sgp::make_defense(defense, target);

    const auto rows = sgp::ablate_depth(sgp::Ensemble{{&surrogate}, {1.0f}}, def, ds,
                                        aargs.base(), max_m, threads);
    std::string csv = "depth,n,fooled,rate,gradient_calls\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%.4f,%d\n", r.depth, r.sr.n, r.sr.fooled,
                      r.sr.rate, r.gradient_calls);
        csv += buf;
    }
    if (out.empty()) {
        std::cout << csv;
    } else {
        write_text(out, csv);
        json sidecar = aargs.to_json("sgp");
        sidecar["command"] = "ablate";
        sidecar["version"] = sgp::kVersion;
        sidecar["max_m"] = max_m;
        write_text(out + ".json", sidecar.dump(2) + "\n");
        std::cout << "wrote " << rows.size() << " rows -> " << out << "\n";
    }
    return 0;
}

int run_heatmap(const std::string& model_path, const std::string& image_path, int class_idx,
                int scales, const std::string& out, bool dump_scales) {
    const sgp::Classifier model = sgp::load_model(model_path);
    sgp::ImageTensor img = sgp::read_netpbm(image_path);

    if (img.channels() == 1 && model.input_shape().c == 3) {
        sgp::ImageTensor rgb(3, img.height(), img.width());
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < img.height(); ++y)
                for (int x = 0; x < img.width(); ++x) rgb.at(c, y, x) = img.at(0, y, x);
        img = std::move(rgb);
    }
    if (img.height() != model.input_shape().h || img.width() != model.input_shape().w)
        img = sgp::resize_bilinear(img, model.input_shape().h, model.input_shape().w);

    const int cls = class_idx >= 0 ? class_idx : model.predict(img);
    if (scales <= 1) {
        sgp::write_netpbm(out, sgp::gradcam(model, img, cls));
        std::cout << "class " << cls << " heatmap -> " << out << "\n";
        return 0;
    }

    const sgp::SgpPyramid pyr = sgp::build_sgp(img, scales);
    fs::create_directories(out);
    char name[64];
    for (const auto& ex : pyr.examples) {
        sgp::ImageTensor fed = ex.image;
        if (!(fed.shape() == model.input_shape()))
            fed = sgp::resize_bilinear(fed, model.input_shape().h, model.input_shape().w);
        std::snprintf(name, sizeof name, "heat_l%d_%s.pgm", ex.level, scheme_tag(ex.scheme));
        sgp::write_netpbm((fs::path(out) / name).string(), sgp::gradcam(model, fed, cls));
        if (dump_scales) {
            std::snprintf(name, sizeof name, "scale_l%d_%s.ppm", ex.level,
                          scheme_tag(ex.scheme));
            sgp::write_netpbm((fs::path(out) / name).string(), ex.image);
        }
    }
    std::cout << "class " << cls << ": " << pyr.examples.size() << " heatmaps -> " << out
              << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-scale adversarial attack toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", sgp::kVersion);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic shape dataset");
    std::string gen_out;
    int gen_n = 200, gen_h = 32, gen_w = 32;
    std::uint64_t gen_seed = 1;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--n", gen_n, "example count")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--height", gen_h)->check(CLI::PositiveNumber);
    gen->add_option("--width", gen_w)->check(CLI::PositiveNumber);

    // train
    auto* tr = app.add_subcommand("train", "train a classifier");
    DataArgs tr_data;
    tr_data.attach(tr);
    std::string tr_arch, tr_out;
    sgp::TrainConfig tcfg;
    float tr_adv_eps = -1.0f;
    tr->add_option("--arch", tr_arch, "cnn_a|cnn_b|mlp")
        ->required()
        ->check(CLI::IsMember({"cnn_a", "cnn_b", "mlp"}));
    tr->add_option("--out", tr_out, "model file to write")->required();
    tr->add_option("--epochs", tcfg.epochs)->check(CLI::PositiveNumber);
    tr->add_option("--batch", tcfg.batch_size)->check(CLI::PositiveNumber);
    tr->add_option("--lr", tcfg.lr);
    tr->add_option("--momentum", tcfg.momentum);
    tr->add_option("--seed", tcfg.seed);
    tr->add_option("--adv-eps", tr_adv_eps,
                   "harden with single-step adversarial copies at this 0..255 budget");

    // attack
    auto* atk = app.add_subcommand("attack", "craft an adversarial archive");
    DataArgs atk_data;
    atk_data.attach(atk);
    std::vector<std::string> atk_models;
    std::string atk_name, atk_out;
    AttackArgs atk_args;
    int atk_threads = 1;
    atk->add_option("--model", atk_models, "surrogate model file(s)")->required();
    atk->add_option("--attack", atk_name, "attack name")
        ->required()
        ->check(CLI::IsMember(sgp::attack_names()));
    atk->add_option("--out", atk_out, "archive directory")->required();
    atk->add_option("--threads", atk_threads)->check(CLI::PositiveNumber);
    atk_args.attach(atk);

    // eval
    auto* ev = app.add_subcommand("eval", "transfer matrix over surrogates/attacks/targets");
    DataArgs ev_data;
    ev_data.attach(ev);
    std::vector<std::string> ev_surrogates, ev_targets, ev_defense{"none"};
    std::string ev_attacks = "fgsm,mifgsm,sgp", ev_csv, ev_md;
    AttackArgs ev_args;
    int ev_threads = 1;
    ev->add_option("--surrogate", ev_surrogates, "surrogate model file(s)")->required();
    ev->add_option("--target", ev_targets, "target model file(s)")->required();
    ev->add_option("--defense", ev_defense, "defenses applied to every target")
        ->check(CLI::IsMember(sgp::defense_names()));
    ev->add_option("--attacks", ev_attacks, "comma-separated attack names");
    ev->add_option("--out", ev_csv, "CSV output path (stdout when absent)");
    ev->add_option("--markdown", ev_md, "also write a markdown grid here");
    ev->add_option("--threads", ev_threads)->check(CLI::PositiveNumber);
    ev_args.attach(ev);

    // ablate
    auto* ab = app.add_subcommand("ablate", "sweep pyramid depth 1..max-m");
    DataArgs ab_data;
    ab_data.attach(ab);
    std::string ab_surrogate, ab_target, ab_defense = "none", ab_out;
    int ab_max_m = 3, ab_threads = 1;
    AttackArgs ab_args;
    ab->add_option("--surrogate", ab_surrogate)->required();
    ab->add_option("--target", ab_target)->required();
    ab->add_option("--defense", ab_defense)->check(CLI::IsMember(sgp::defense_names()));
    ab->add_option("--max-m", ab_max_m)->check(CLI::PositiveNumber);
    ab->add_option("--out", ab_out, "CSV output path (stdout when absent)");
    ab->add_option("--threads", ab_threads)->check(CLI::PositiveNumber);
    ab_args.attach(ab);

    // heatmap
    auto* hm = app.add_subcommand("heatmap", "class evidence map for one image");
    std::string hm_model, hm_image, hm_out;
    int hm_class = -1, hm_scales = 1;
    bool hm_dump = false;
    hm->add_option("--model", hm_model)->required();
    hm->add_option("--image", hm_image, "netpbm input image")->required();
    hm->add_option("--class", hm_class, "class index (default: predicted)");
    hm->add_option("--scales", hm_scales, "emit one map per pyramid example")
        ->check(CLI::PositiveNumber);
    hm->add_option("--out", hm_out, "output file, or directory when --scales > 1")->required();
    hm->add_flag("--dump-scales", hm_dump, "also write the scale images");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return run_gen(gen_out, gen_n, gen_seed, gen_h, gen_w);
        if (tr->parsed()) return run_train(tr_data, tr_arch, tr_out, tcfg, tr_adv_eps);
        if (atk->parsed())
            return run_attack(atk_models, atk_data, atk_name, atk_args, atk_out, atk_threads);
        if (ev->parsed())
            return run_eval(ev_data, ev_surrogates, ev_targets, ev_defense, ev_attacks, ev_args,
                            ev_threads, ev_csv, ev_md);
        if (ab->parsed())
            return run_ablate(ab_data, ab_surrogate, ab_target, ab_defense, ab_max_m, ab_args,
                              ab_threads, ab_out);
        if (hm->parsed())
            return run_heatmap(hm_model, hm_image, hm_class, hm_scales, hm_out, hm_dump);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const sgp::DepthExceededError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const sgp::DataFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const sgp::ModelIoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
