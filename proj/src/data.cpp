#include "sgp/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sgp/errors.hpp"
#include "sgp/image_io.hpp"
#include "sgp/rng.hpp"

namespace fs = std::filesystem;

namespace sgp {
namespace {

// Dark random background color, bright random shape color. The fixed
// polarity keeps the gap >= 0.2 in every channel so the tiny zoo can learn
// the classes from shape alone at desk scale.
float bg_band(Rng& rng) { return 0.15f + 0.25f * rng.uniform(); }
float fg_band(Rng& rng) { return 0.60f + 0.30f * rng.uniform(); }

bool inside_shape(int label, float dx, float dy, float r) {
    const float t = std::max(1.0f, r / 3.0f);
    switch (label) {
        case 0: // filled circle
            return dx * dx + dy * dy <= r * r;
        case 1: { // square outline
            const float m = std::max(std::fabs(dx), std::fabs(dy));
            return m <= r && m >= r - t;
        }
        case 2: { // filled triangle, apex up
            if (dy < -r || dy > r) return false;
            const float half_width = (dy + r) * 0.5f;
            return std::fabs(dx) <= half_width;
        }
        default: // cross
            return (std::fabs(dx) <= t && std::fabs(dy) <= r) ||
                   (std::fabs(dy) <= t && std::fabs(dx) <= r);
    }
}

ImageTensor draw_example(int label, std::uint64_t example_seed, int h, int w) {
    Rng rng(example_seed);

    float bg[3], fg[3];
    for (float& c : bg) c = bg_band(rng);
    for (float& c : fg) c = fg_band(rng);

    const float r = h / 6.0f + rng.uniform() * (h / 3.0f - h / 6.0f);
    const float lo_x = r + 1.0f, hi_x = std::max(lo_x, w - 2.0f - r);
    const float lo_y = r + 1.0f, hi_y = std::max(lo_y, h - 2.0f - r);
    const float cx = lo_x + rng.uniform() * (hi_x - lo_x);
    const float cy = lo_y + rng.uniform() * (hi_y - lo_y);

    ImageTensor img(3, h, w);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(c, y, x) = bg[c] + (rng.uniform() - 0.5f) * 0.08f;

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (inside_shape(label, x - cx, y - cy, r))
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = fg[c];
    return img;
}

std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw DataFormatError(path + ": truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

} // namespace

Dataset gen_synthetic(int n, std::uint64_t seed, int h, int w) {
    if (n < 0 || h < 8 || w < 8)
        throw std::invalid_argument("gen_synthetic: need n >= 0 and dims >= 8");

    Dataset ds;
    ds.images.reserve(n);
    ds.labels.reserve(n);
    for (int i = 0; i < n; ++i) {
        const int label = i % 4;
        ds.images.push_back(draw_example(label, derive_seed(seed, i), h, w));
        ds.labels.push_back(label);
    }
    return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw DataFormatError(images_path + ": cannot open");
    if (read_be_u32(imgs, images_path) != 0x803u)
        throw DataFormatError(images_path + ": not an IDX image file (magic != 0x803)");
    const std::uint32_t n = read_be_u32(imgs, images_path);
    const std::uint32_t h = read_be_u32(imgs, images_path);
    const std::uint32_t w = read_be_u32(imgs, images_path);
    if (h == 0 || w == 0 || h > 4096 || w > 4096)
        throw DataFormatError(images_path + ": implausible dimensions");

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw DataFormatError(labels_path + ": cannot open");
    if (read_be_u32(labs, labels_path) != 0x801u)
        throw DataFormatError(labels_path + ": not an IDX label file (magic != 0x801)");
    if (read_be_u32(labs, labels_path) != n)
        throw DataFormatError(labels_path + ": label count differs from image count");

    Dataset ds;
    ds.images.reserve(n);
    ds.labels.reserve(n);
    std::vector<unsigned char> pix(static_cast<std::size_t>(h) * w);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        imgs.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
        if (imgs.gcount() != static_cast<std::streamsize>(pix.size()))
            throw DataFormatError(images_path + ": truncated at image " + std::to_string(i));
        ImageTensor img(3, static_cast<int>(h), static_cast<int>(w));
        for (std::uint32_t y = 0; y < h; ++y)
            for (std::uint32_t x = 0; x < w; ++x) {
                const float v = static_cast<float>(pix[y * w + x]) / 255.0f;
                for (int c = 0; c < 3; ++c)
                    img.at(c, static_cast<int>(y), static_cast<int>(x)) = v;
            }
        const int lab = labs.get();
        if (lab == EOF)
            throw DataFormatError(labels_path + ": truncated at label " + std::to_string(i));
        max_label = std::max(max_label, lab);
        ds.images.push_back(std::move(img));
        ds.labels.push_back(lab);
    }
    ds.num_classes = std::max(max_label + 1, 2);
    return ds;
}

void save_dataset_dir(const std::string& dir, const Dataset& ds) {
    fs::create_directories(dir);

    std::ofstream csv(fs::path(dir) / "labels.csv");
    if (!csv) throw DataFormatError(dir + "/labels.csv: cannot open for writing");
    csv << "filename,label\n";
    char name[32];
    for (int i = 0; i < ds.size(); ++i) {
        std::snprintf(name, sizeof name, "img_%05d.%s", i,
                      ds.images[i].channels() == 3 ? "ppm" : "pgm");
        write_netpbm((fs::path(dir) / name).string(), ds.images[i]);
        csv << name << "," << ds.labels[i] << "\n";
    }

    nlohmann::json meta;
    meta["n"] = ds.size();
    meta["num_classes"] = ds.num_classes;
    if (ds.size() > 0) {
        meta["channels"] = ds.images[0].channels();
        meta["height"] = ds.images[0].height();
        meta["width"] = ds.images[0].width();
    }
    std::ofstream js(fs::path(dir) / "dataset.json");
    js << meta.dump(2) << "\n";
}

Dataset load_dataset_dir(const std::string& dir) {
    std::ifstream js(fs::path(dir) / "dataset.json");
    if (!js) throw DataFormatError(dir + "/dataset.json: cannot open");
    nlohmann::json meta;
    try {
        js >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw DataFormatError(dir + "/dataset.json: " + e.what());
    }

    std::ifstream csv(fs::path(dir) / "labels.csv");
    if (!csv) throw DataFormatError(dir + "/labels.csv: cannot open");
    std::string line;
    if (!std::getline(csv, line) || line != "filename,label")
        throw DataFormatError(dir + "/labels.csv: missing 'filename,label' header");

    Dataset ds;
    ds.num_classes = meta.value("num_classes", 4);
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw DataFormatError(dir + "/labels.csv: malformed row '" + line + "'");
        const std::string name = line.substr(0, comma);
        int label;
        try {
            label = std::stoi(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw DataFormatError(dir + "/labels.csv: bad label in '" + line + "'");
        }
        ds.images.push_back(read_netpbm((fs::path(dir) / name).string()));
        ds.labels.push_back(label);
        if (ds.images.back().shape() != ds.images.front().shape())
            throw DataFormatError(dir + ": mixed image shapes (" + name + ")");
    }
    const int expected = meta.value("n", ds.size());
    if (expected != ds.size())
        throw DataFormatError(dir + ": dataset.json says n=" + std::to_string(expected) +
                              " but labels.csv lists " + std::to_string(ds.size()));
    return ds;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, float test_fraction) {
    if (!(test_fraction >= 0.0f && test_fraction <= 1.0f))
        throw std::invalid_argument("split_train_test: fraction must be in [0, 1]");
    const int n_test = static_cast<int>(std::lround(test_fraction * ds.size()));
    const int n_train = ds.size() - n_test;

    Dataset train, test;
    train.num_classes = test.num_classes = ds.num_classes;
    for (int i = 0; i < ds.size(); ++i) {
        auto& part = i < n_train ? train : test;
        part.images.push_back(ds.images[i]);
        part.labels.push_back(ds.labels[i]);
    }
    return {std::move(train), std::move(test)};
}

} // namespace sgp
