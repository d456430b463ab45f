#include "herdpipe/common.hpp"

#include <cmath>
#include <limits>

namespace herdpipe {

std::int64_t round_half_down(double x) {
    return static_cast<std::int64_t>(std::ceil(x - 0.5));
}

std::uint64_t DeterministicRng::uniform_u64(std::uint64_t n) {
    // Rejection sampling keeps the distribution exact and the sequence
    // identical on every platform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                (std::numeric_limits<std::uint64_t>::max() % n);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double DeterministicRng::uniform_real() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double DeterministicRng::uniform_real(double lo, double hi) {
    return lo + (hi - lo) * uniform_real();
}

double DeterministicRng::normal() {
    double u1 = uniform_real();
    double u2 = uniform_real();
    while (u1 <= 0.0) {
        u1 = uniform_real();
    }
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace herdpipe
