#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sgp/version.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

// Runs the installed binary through the shell, merging stderr into stdout.
RunResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    const std::string cmd = env_prefix + std::string(SGP_CLI_PATH) + " " + args + " 2>&1";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::size_t got = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, got);
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// One shared workspace: a small dataset plus two trained models, built once.
struct CliFixture {
    fs::path root;
    fs::path data, sur, tgt;

    CliFixture() {
        root = fs::temp_directory_path() / "sgp_cli_fixture";
        fs::remove_all(root);
        fs::create_directories(root);
        data = root / "data";
        sur = root / "sur.sgpm";
        tgt = root / "tgt.sgpm";

        RunResult r = run_cli("gen-data --out " + data.string() +
                              " --n 32 --seed 5 --height 16 --width 16");
        REQUIRE(r.exit_code == 0);
        r = run_cli("train --data " + data.string() + " --arch cnn_a --out " + sur.string() +
                    " --epochs 2 --lr 0.02 --seed 11");
        REQUIRE(r.exit_code == 0);
        r = run_cli("train --data " + data.string() + " --arch mlp --out " + tgt.string() +
                    " --epochs 2 --lr 0.01 --seed 12");
        REQUIRE(r.exit_code == 0);
    }
};

const CliFixture& fixture() {
    static const CliFixture f;
    return f;
}

} // namespace

TEST_CASE("version flag prints the library version") {
    const RunResult r = run_cli("--version");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find(sgp::kVersion) != std::string::npos);
}

TEST_CASE("running without a verb is a usage error") {
    const RunResult r = run_cli("");
    CHECK(r.exit_code == 1);
    const RunResult bad = run_cli("--definitely-not-a-flag");
    CHECK(bad.exit_code == 1);
}

TEST_CASE("gen-data writes a loadable, reproducible dataset") {
    const CliFixture& f = fixture();
    CHECK(fs::exists(f.data / "dataset.json"));
    CHECK(fs::exists(f.data / "labels.csv"));
    CHECK(fs::exists(f.data / "manifest.json"));

    // regenerating with the same seed produces identical bytes
    const fs::path again = f.root / "data_again";
    const RunResult r = run_cli("gen-data --out " + again.string() +
                                " --n 32 --seed 5 --height 16 --width 16");
    REQUIRE(r.exit_code == 0);
    CHECK(slurp(f.data / "labels.csv") == slurp(again / "labels.csv"));
    CHECK(slurp(f.data / "img_00000.ppm") == slurp(again / "img_00000.ppm"));
    CHECK(slurp(f.data / "manifest.json") == slurp(again / "manifest.json"));
}

TEST_CASE("train reports accuracy and writes a manifest next to the model") {
    const CliFixture& f = fixture();
    CHECK(fs::exists(f.sur));
    CHECK(fs::exists(fs::path(f.sur.string() + ".manifest.json")));

    // retraining with identical settings gives identical bytes
    const fs::path again = f.root / "sur_again.sgpm";
    const RunResult r = run_cli("train --data " + f.data.string() + " --arch cnn_a --out " +
                                again.string() + " --epochs 2 --lr 0.02 --seed 11");
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("train_accuracy") != std::string::npos);
    CHECK(slurp(f.sur) == slurp(again));
}

TEST_CASE("attack builds an archive of image pairs") {
    const CliFixture& f = fixture();
    const fs::path out = f.root / "archive";
    const RunResult r = run_cli("attack --data " + f.data.string() + " --model " +
                                f.sur.string() +
                                " --attack sgp --depth 2 --steps 3 --eps 16 --out " +
                                out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(out / "archive.json"));
    CHECK(fs::exists(out / "pair_00000_clean.ppm"));
    CHECK(fs::exists(out / "pair_00000_adv.ppm"));
}

TEST_CASE("eval emits a byte-stable transfer matrix") {
    const CliFixture& f = fixture();
    const std::string base = "eval --data " + f.data.string() + " --surrogate " +
                             f.sur.string() + " --target " + f.tgt.string() +
                             " --attacks fgsm,mifgsm --steps 2 --eps 16";

    const RunResult one = run_cli(base + " --threads 1");
    REQUIRE(one.exit_code == 0);
    CHECK(one.output.rfind("surrogate,attack,target,n,fooled,rate\n", 0) == 0);

    // reruns and different thread counts give identical bytes
    CHECK(run_cli(base + " --threads 1").output == one.output);
    CHECK(run_cli(base + " --threads 3").output == one.output);

    // forcing the scalar backend must not change a single byte
    const RunResult scalar = run_cli(base + " --threads 1", "SGP_KERNELS=scalar ");
    CHECK(scalar.exit_code == 0);
    CHECK(scalar.output == one.output);

    // file output with a sidecar description
    const fs::path csv = f.root / "matrix.csv";
    const RunResult filed = run_cli(base + " --threads 1 --out " + csv.string());
    REQUIRE(filed.exit_code == 0);
    CHECK(slurp(csv) == one.output);
    CHECK(fs::exists(f.root / "matrix.csv.json"));
}

TEST_CASE("eval applies defenses to every target") {
    const CliFixture& f = fixture();
    const RunResult r = run_cli("eval --data " + f.data.string() + " --surrogate " +
                                f.sur.string() + " --target " + f.tgt.string() +
                                " --defense none --defense bitdepth --attacks fgsm" +
                                " --steps 1 --threads 1");
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find(",tgt,") != std::string::npos);
    CHECK(r.output.find(",tgt+bitdepth,") != std::string::npos);
}

TEST_CASE("ablate sweeps depth with the cost column") {
    const CliFixture& f = fixture();
    const RunResult r = run_cli("ablate --data " + f.data.string() + " --surrogate " +
                                f.sur.string() + " --target " + f.tgt.string() +
                                " --max-m 2 --steps 2 --eps 16");
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.rfind("depth,n,fooled,rate,gradient_calls\n", 0) == 0);
    CHECK(r.output.find("\n1,") != std::string::npos);
    CHECK(r.output.find("\n2,") != std::string::npos);
}

TEST_CASE("heatmap writes evidence maps at one or many scales") {
    const CliFixture& f = fixture();
    const fs::path heat = f.root / "heat.pgm";
    RunResult r = run_cli("heatmap --model " + f.sur.string() + " --image " +
                          (f.data / "img_00000.ppm").string() + " --out " + heat.string());
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(heat));
    CHECK(slurp(heat).rfind("P5", 0) == 0);

    const fs::path multi = f.root / "heatmaps";
    r = run_cli("heatmap --model " + f.sur.string() + " --image " +
                (f.data / "img_00000.ppm").string() + " --scales 2 --dump-scales --out " +
                multi.string());
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(multi));
    int pgm = 0, ppm = 0;
    for (const auto& e : fs::directory_iterator(multi)) {
        pgm += e.path().extension() == ".pgm";
        ppm += e.path().extension() == ".ppm";
    }
    CHECK(pgm == 4); // 3*2-2 examples
    CHECK(ppm == 4);
}

TEST_CASE("failure classes map to distinct exit codes") {
    const CliFixture& f = fixture();

    // 1: bad usage
    CHECK(run_cli("train --data " + f.data.string()).exit_code == 1); // missing required

    // 2: malformed data / model
    CHECK(run_cli("train --data /nonexistent_dir --arch mlp --out /tmp/x.sgpm").exit_code == 2);
    std::ofstream(f.root / "junk.sgpm") << "not a model";
    CHECK(run_cli("attack --data " + f.data.string() + " --model " +
                  (f.root / "junk.sgpm").string() + " --attack fgsm --out " +
                  (f.root / "junk_out").string())
              .exit_code == 2);

    // 3: infeasible pyramid depth for the data size
    CHECK(run_cli("attack --data " + f.data.string() + " --model " + f.sur.string() +
                  " --attack sgp --depth 5 --out " + (f.root / "deep").string())
              .exit_code == 3);
}
