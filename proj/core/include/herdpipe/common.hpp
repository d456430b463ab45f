#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace herdpipe {

using FrameIndex = std::int64_t;

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data violates a documented contract (bad grammar, broken invariant,
/// referential integrity). CLI exit code 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Filesystem / OS level failure. CLI exit code 2.
class IoError : public Error {
public:
    using Error::Error;
};

/// An external extractor or scorer process failed. CLI exit code 2.
class ExternalCommandError : public Error {
public:
    using Error::Error;
};

/// Round to the nearest integer with ties toward the smaller value.
/// Used wherever the toolkit maps a continuous time onto a frame grid, so
/// that half-frame ties resolve to the earlier frame deterministically.
std::int64_t round_half_down(double x);

/// Deterministic PRNG wrapper. mt19937_64 is fully pinned by the standard;
/// the *distributions* are not, so bounded draws are implemented here and
/// seeded outputs (splits, scene fixtures) are reproducible across standard
/// libraries. Fixture headers record the algorithm name.
class DeterministicRng {
public:
    static constexpr const char* kAlgorithm = "mt19937_64";

    explicit DeterministicRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, n) by rejection sampling. n must be > 0.
    std::uint64_t uniform_u64(std::uint64_t n);

    /// Uniform double in [0, 1) with 53 bits of precision.
    double uniform_real();

    /// Uniform double in [lo, hi).
    double uniform_real(double lo, double hi);

    /// Standard normal via Box-Muller (one value per call, no cached spare,
    /// so the draw count stays predictable).
    double normal();

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_u64(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace herdpipe
