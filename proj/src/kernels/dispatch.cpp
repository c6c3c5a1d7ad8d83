#include "sgp/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace sgp::kernels {

#ifdef SGP_HAVE_AVX2_BUILD
namespace detail {
const Ops& avx2_table();
}

const Ops* avx2() {
    static const Ops* table = __builtin_cpu_supports("avx2") ? &detail::avx2_table() : nullptr;
    return table;
}
#else
const Ops* avx2() { return nullptr; }
#endif

const Ops& active() {
    static const Ops& chosen = []() -> const Ops& {
        if (const char* forced = std::getenv("SGP_KERNELS")) {
            const std::string name(forced);
            if (name == "scalar") return scalar();
            if (name == "avx2") {
                if (const Ops* ops = avx2()) return *ops;
                throw std::runtime_error("SGP_KERNELS=avx2 requested but AVX2 is unavailable");
            }
            throw std::runtime_error("unknown SGP_KERNELS backend: " + name);
        }
        if (const Ops* ops = avx2()) return *ops;
        return scalar();
    }();
    return chosen;
}

} // namespace sgp::kernels
