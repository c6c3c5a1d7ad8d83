#pragma once

#include <stdexcept>
#include <string>

namespace sgp {

// Requested pyramid depth cannot be built for the given image size.
class DepthExceededError : public std::runtime_error {
public:
    DepthExceededError(int requested, int feasible, const std::string& limiting_dim)
        : std::runtime_error("pyramid depth " + std::to_string(requested) +
                             " exceeds feasible depth " + std::to_string(feasible) +
                             " (limited by " + limiting_dim + ")"),
          requested_(requested), feasible_(feasible) {}

    int requested() const { return requested_; }
    int feasible() const { return feasible_; }

private:
    int requested_;
    int feasible_;
};

// Malformed external data (IDX, PPM/PGM, CSV, archives).
class DataFormatError : public std::runtime_error {
public:
    explicit DataFormatError(const std::string& what) : std::runtime_error(what) {}
};

enum class ModelIoCode {
    bad_magic,
    bad_header,
    unsupported_architecture,
    truncated,
    bad_crc,
};

// Weight-container load/store failure; `code` tells the categories apart.
class ModelIoError : public std::runtime_error {
public:
    ModelIoError(ModelIoCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ModelIoCode code() const { return code_; }

private:
    ModelIoCode code_;
};

} // namespace sgp
