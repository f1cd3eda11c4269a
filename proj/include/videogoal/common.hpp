#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace videogoal {

// Raised for bad configuration, bad CLI input, malformed predicates. Maps to exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised for shape mismatches between tensors; message names both shapes.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised for file-format problems (bad magic, version, truncation). Maps to exit code 2.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when an evaluation produces non-finite values.
struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic, platform-independent RNG. std::mt19937 sequences are pinned by
// the standard but the distributions are not, so all draws go through explicit
// algorithms here. splitmix64 core.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform integer in [0, n). Fixed-point multiply keeps the mapping portable.
    uint64_t uniform_int(uint64_t n) {
        return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Uniform real in [0, 1) with 53 bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform real in [-a, a).
    double uniform_sym(double a) { return (2.0 * uniform() - 1.0) * a; }

    // Standard normal via Box-Muller (deterministic, no cached second value).
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

  private:
    uint64_t state_;
};

// Stable seed derivation so parallel work items get independent streams that do
// not depend on scheduling order.
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    Rng r(base ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL) ^
          (c * 0x165667B19E3779F9ULL));
    return r.next_u64();
}

}  // namespace videogoal
