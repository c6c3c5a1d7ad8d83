#include <stdexcept>
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sgp/data.hpp"
#include "sgp/errors.hpp"
#include "sgp/nn.hpp"
#include "sgp/rng.hpp"
#include "support/oracles.hpp"

using namespace sgp;
namespace fs = std::filesystem;

namespace {

ImageTensor random_image(Shape s, Rng& rng) {
    ImageTensor t(s);
    for (float& v : t.values()) v = rng.uniform();
    return t;
}

const std::vector<std::string> kArchs = {"cnn_a", "cnn_b", "mlp"};

} // namespace

TEST_CASE("constructor validates architecture, shape and class count") {
    CHECK_THROWS_AS(Classifier("vgg", {3, 16, 16}, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(Classifier("cnn_a", {3, 4, 16}, 4, 1), std::invalid_argument);
    CHECK_THROWS_AS(Classifier("cnn_a", {3, 16, 16}, 1, 1), std::invalid_argument);
}

TEST_CASE("initialization is seeded and layer metadata is consistent") {
    const Classifier a("cnn_a", {3, 16, 16}, 4, 9);
    const Classifier b("cnn_a", {3, 16, 16}, 4, 9);
    const Classifier c("cnn_a", {3, 16, 16}, 4, 10);
    REQUIRE(a.params().size() == b.params().size());
    bool equal = true, differs = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        equal = equal && a.params()[i] == b.params()[i];
        differs = differs || a.params()[i] != c.params()[i];
    }
    CHECK(equal);
    CHECK(differs);

    // weight ranges respect the fan-in bound; biases start at zero
    for (const LayerDesc& L : a.layers()) {
        if (L.w_count == 0) continue;
        const std::size_t fan_in = L.kind == LayerKind::conv3x3
                                       ? static_cast<std::size_t>(L.in_shape.c) * 9
                                       : static_cast<std::size_t>(L.in_shape.count());
        const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
        for (std::size_t i = 0; i < L.w_count; ++i)
            CHECK(std::fabs(a.params()[L.w_offset + i]) <= bound);
        for (std::size_t i = 0; i < L.b_count; ++i) CHECK(a.params()[L.b_offset + i] == 0.0f);
    }
}

TEST_CASE("forward logits agree with the double oracle on every architecture") {
    Rng rng(21);
    for (const std::string& arch : kArchs) {
        CAPTURE(arch);
        const Classifier m(arch, {3, 16, 16}, 4, 33);
        const ImageTensor x = random_image({3, 16, 16}, rng);
        const std::vector<float> got = m.forward(x);
        const oracle::ForwardRecord want = oracle::model_forward(m, oracle::widen(x), 0);
        REQUIRE(got.size() == want.logits.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(std::fabs(got[i] - want.logits[i]) < 1e-4);

        const float loss = m.loss(x, 2);
        CHECK(std::fabs(loss - oracle::model_loss(m, oracle::widen(x), 2)) < 1e-4);
    }
}

TEST_CASE("input gradients agree with the double oracle") {
    Rng rng(22);
    for (const std::string& arch : kArchs) {
        CAPTURE(arch);
        const Classifier m(arch, {3, 16, 16}, 4, 44);
        const ImageTensor x = random_image({3, 16, 16}, rng);
        const auto [loss, grad] = m.loss_and_input_grad(x, 1);
        (void)loss;
        const oracle::DTensor want = oracle::model_input_grad(m, oracle::widen(x), 1);
        CHECK(oracle::rel_l2_err(grad, want) < 1e-5);
    }
}

TEST_CASE("finite differences validate analytic gradients for the whole zoo") {
    Rng rng(23);
    for (const std::string& arch : kArchs) {
        CAPTURE(arch);
        const Classifier m(arch, {3, 16, 16}, 4, 55);
        const ImageTensor x = random_image({3, 16, 16}, rng);
        const GradCheckResult r = grad_check(m, x, 3, 40, 30, 99);
        CAPTURE(r.max_rel_err);
        CAPTURE(r.checked);
        CAPTURE(r.excluded);
        CHECK(r.pass);
        CHECK(r.checked > 0);
    }
}

TEST_CASE("softmax and cross entropy match their definitions") {
    const std::vector<float> logits = {1.5f, -0.3f, 0.0f, 2.25f};
    const std::vector<float> p = softmax(logits);
    double sum = 0.0;
    for (float v : p) sum += v;
    CHECK(std::fabs(sum - 1.0) < 1e-6);

    double den = 0.0;
    for (float z : logits) den += std::exp(static_cast<double>(z));
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(std::fabs(p[i] - std::exp(static_cast<double>(logits[i])) / den) < 1e-6);

    std::vector<float> probs;
    const float ce = cross_entropy_from_logits(logits, 3, &probs);
    CHECK(std::fabs(ce + std::log(probs[3])) < 1e-5);
    CHECK(probs == p);

    // invariant to a constant shift
    std::vector<float> shifted = logits;
    for (float& z : shifted) z += 100.0f;
    CHECK(std::fabs(cross_entropy_from_logits(shifted, 3) - ce) < 1e-4);
}

TEST_CASE("max pooling breaks ties toward the first window position") {
    Classifier m("cnn_a", {3, 16, 16}, 4, 1);
    ImageTensor x({3, 16, 16}, 0.5f); // fully tied windows everywhere
    const Tape t = m.forward_tape(x);
    int pool_idx = -1;
    for (std::size_t i = 0; i < m.layers().size(); ++i)
        if (m.layers()[i].kind == LayerKind::maxpool2) {
            pool_idx = static_cast<int>(i);
            break;
        }
    REQUIRE(pool_idx >= 0);
    const LayerDesc& L = m.layers()[pool_idx];
    const auto& am = t.pool_argmax[pool_idx];
    REQUIRE(!am.empty());
    const int iw = L.in_shape.w;
    // Only interior windows are fully tied: the zero padding makes the conv
    // border rows differ from the constant interior.
    for (int c = 0; c < L.out_shape.c; ++c)
        for (int y = 1; y < L.out_shape.h - 1; ++y)
            for (int xx = 1; xx < L.out_shape.w - 1; ++xx) {
                const int got = am[(static_cast<std::size_t>(c) * L.out_shape.h + y) *
                                       L.out_shape.w + xx];
                const int want = (c * L.in_shape.h + 2 * y) * iw + 2 * xx; // top-left
                CHECK(got == want);
            }
}

TEST_CASE("training is bit-deterministic and reports sensible metrics") {
    const Dataset ds = gen_synthetic(48, 4, 16, 16);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.lr = 0.02f;
    cfg.seed = 5;

    Classifier a("mlp", {3, 16, 16}, 4, 7);
    Classifier b("mlp", {3, 16, 16}, 4, 7);
    const TrainMetrics ma = train(a, ds, cfg);
    const TrainMetrics mb = train(b, ds, cfg);

    REQUIRE(ma.epoch_loss.size() == 2);
    CHECK(ma.epoch_loss == mb.epoch_loss);
    CHECK(ma.train_accuracy == mb.train_accuracy);
    bool same = true;
    for (std::size_t i = 0; i < a.params().size(); ++i)
        same = same && a.params()[i] == b.params()[i];
    CHECK(same);

    CHECK(accuracy(a, ds) == ma.train_accuracy);
}

TEST_CASE("the example transform hook swaps training inputs") {
    const Dataset ds = gen_synthetic(32, 4, 16, 16);
    TrainConfig plain;
    plain.epochs = 1;
    plain.seed = 3;

    TrainConfig hooked = plain;
    int calls = 0;
    hooked.example_transform = [&calls](const Classifier&, const ImageTensor& x, int,
                                        int batch_pos) {
        ++calls;
        if (batch_pos % 2 == 0) return x;
        return ImageTensor(x.shape(), 0.0f);
    };

    Classifier a("mlp", {3, 16, 16}, 4, 7);
    Classifier b("mlp", {3, 16, 16}, 4, 7);
    train(a, ds, plain);
    train(b, ds, hooked);
    CHECK(calls == 32);
    bool differs = false;
    for (std::size_t i = 0; i < a.params().size(); ++i)
        differs = differs || a.params()[i] != b.params()[i];
    CHECK(differs);
}

TEST_CASE("training rejects invalid configurations") {
    const Dataset ds = gen_synthetic(8, 4, 16, 16);
    Classifier m("mlp", {3, 16, 16}, 4, 7);
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(m, ds, cfg), std::invalid_argument);
    cfg.epochs = 1;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(m, ds, cfg), std::invalid_argument);

    const Dataset empty;
    cfg.batch_size = 16;
    CHECK_THROWS_AS(train(m, empty, cfg), std::invalid_argument);

    const Dataset wrong = gen_synthetic(8, 4, 32, 32);
    CHECK_THROWS_AS(train(m, wrong, cfg), std::invalid_argument);
}

TEST_CASE("model container round-trips bit-exactly") {
    const fs::path dir = fs::temp_directory_path() / "sgp_test_model";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string path = (dir / "m.sgpm").string();

    const Classifier m("cnn_b", {3, 16, 16}, 4, 123);
    save_model(path, m);
    const Classifier back = load_model(path);

    CHECK(back.architecture_id() == m.architecture_id());
    CHECK(back.input_shape() == m.input_shape());
    CHECK(back.num_classes() == m.num_classes());
    REQUIRE(back.params().size() == m.params().size());
    bool same = true;
    for (std::size_t i = 0; i < m.params().size(); ++i)
        same = same && back.params()[i] == m.params()[i];
    CHECK(same);
}

TEST_CASE("model loader distinguishes every failure mode") {
    const fs::path dir = fs::temp_directory_path() / "sgp_test_model_bad";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string good = (dir / "good.sgpm").string();
    save_model(good, Classifier("mlp", {3, 16, 16}, 4, 1));

    std::ifstream in(good, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() > 64);

    auto write_variant = [&](const char* name, const std::vector<char>& b) {
        std::ofstream out(dir / name, std::ios::binary);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
        return (dir / name).string();
    };
    auto code_of = [](const std::string& path) {
        try {
            load_model(path);
        } catch (const ModelIoError& e) {
            return e.code();
        }
        throw std::logic_error("expected ModelIoError");
    };

    {
        std::vector<char> b = bytes;
        b[0] = 'X';
        CHECK(code_of(write_variant("magic", b)) == ModelIoCode::bad_magic);
    }
    {
        std::vector<char> b(bytes.begin(), bytes.begin() + 10); // header cut off
        CHECK(code_of(write_variant("trunc_hdr", b)) == ModelIoCode::truncated);
    }
    {
        std::vector<char> b = bytes;
        b[12] = '{'; // corrupt the JSON header text
        b[13] = '!';
        const ModelIoCode c = code_of(write_variant("bad_json", b));
        CHECK((c == ModelIoCode::bad_header || c == ModelIoCode::bad_crc));
    }
    {
        std::vector<char> b = bytes;
        b.resize(b.size() - 8); // payload/crc cut off
        CHECK(code_of(write_variant("trunc_payload", b)) == ModelIoCode::truncated);
    }
    {
        std::vector<char> b = bytes;
        b.back() ^= 0x5A; // flip a crc byte
        CHECK(code_of(write_variant("crc", b)) == ModelIoCode::bad_crc);
    }
    {
        std::vector<char> b = bytes;
        b.push_back(0); // trailing garbage
        CHECK(code_of(write_variant("trailing", b)) == ModelIoCode::bad_header);
    }
    {
        // unsupported architecture: rewrite the JSON header, keeping lengths
        // consistent by renaming "mlp" to "mlq"
        std::vector<char> b = bytes;
        bool renamed = false;
        for (std::size_t i = 12; i + 3 < b.size() && !renamed; ++i)
            if (b[i] == 'm' && b[i + 1] == 'l' && b[i + 2] == 'p') {
                b[i + 2] = 'q';
                renamed = true;
            }
        REQUIRE(renamed);
        const ModelIoCode c = code_of(write_variant("arch", b));
        CHECK((c == ModelIoCode::unsupported_architecture || c == ModelIoCode::bad_crc));
    }

    CHECK_THROWS_AS(load_model((dir / "missing.sgpm").string()), ModelIoError);
}

TEST_CASE("conv layer lookup and logit gradients behave per architecture") {
    const Classifier a("cnn_a", {3, 16, 16}, 4, 1);
    const Classifier m("mlp", {3, 16, 16}, 4, 1);
    CHECK(a.last_conv_layer() >= 0);
    CHECK(a.layers()[a.last_conv_layer()].kind == LayerKind::conv3x3);
    CHECK(m.last_conv_layer() == -1);

    Rng rng(3);
    const ImageTensor x = random_image({3, 16, 16}, rng);
    const Tape t = a.forward_tape(x);
    const std::vector<float> g = a.logit_grad_at_layer(t, 0, a.last_conv_layer());
    CHECK(g.size() ==
          static_cast<std::size_t>(a.layers()[a.last_conv_layer()].out_shape.count()));
    bool nonzero = false;
    for (float v : g) nonzero = nonzero || v != 0.0f;
    CHECK(nonzero);
}
