#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgp/tensor.hpp"

namespace sgp {

struct Dataset {
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    int num_classes = 4;

    int size() const { return static_cast<int>(images.size()); }
};

// Four shape classes on low-amplitude noise backgrounds: 0 filled circle,
// 1 square outline, 2 filled triangle, 3 cross. Labels cycle i mod 4 so any
// prefix is balanced. Example i draws only from its own seed stream, so the
// first k examples are identical no matter how many are generated in total.
Dataset gen_synthetic(int n, std::uint64_t seed, int h = 32, int w = 32);

// IDX-format pair (big-endian magics 0x803 / 0x801, u8 payloads). Grayscale
// pixels are replicated to three channels and scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Directory layout: one netpbm file per example, labels.csv mapping filename
// to label, dataset.json with the shared dimensions.
void save_dataset_dir(const std::string& dir, const Dataset& ds);
Dataset load_dataset_dir(const std::string& dir);

// Leading (1 - test_fraction) of the examples train, the rest test. The
// cyclic labels keep both halves balanced.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, float test_fraction);

} // namespace sgp
