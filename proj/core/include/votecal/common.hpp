#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace votecal {

/// Errors are split into two kinds so callers (and the CLI exit codes) can
/// distinguish bad input from failures at run time.
class Error : public std::runtime_error {
public:
    enum class Kind { input, runtime };

    Error(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    Kind kind() const { return kind_; }

    static Error input(const std::string& message) { return Error(Kind::input, message); }
    static Error runtime(const std::string& message) { return Error(Kind::runtime, message); }

private:
    Kind kind_;
};

namespace rng {

/// Counter-based generator, "splitmix64-counter-v1".
///
/// Every draw is a pure function of (seed, key, counter), so data generation
/// and training can be parallelized or replayed without carrying mutable
/// generator state around. Uniform and normal variates are derived with fixed
/// algorithms (53-bit mantissa scaling, Box-Muller) rather than the standard
/// library distributions, which are not pinned across implementations.
inline constexpr const char* kGeneratorName = "splitmix64-counter-v1";

std::uint64_t mix(std::uint64_t x);
std::uint64_t draw(std::uint64_t seed, std::uint64_t key, std::uint64_t counter);

/// Uniform in [0, 1).
double uniform(std::uint64_t seed, std::uint64_t key, std::uint64_t counter);

/// Standard normal. Consumes counters 2c and 2c+1 of the keyed stream.
double normal(std::uint64_t seed, std::uint64_t key, std::uint64_t counter);

/// Index into the cumulative distribution of `probs` at quantile u in [0,1).
std::size_t categorical(const std::vector<double>& probs, double u);

/// Sequential draws from one keyed stream.
class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t key) : seed_(seed), key_(key) {}

    std::uint64_t next_u64() { return draw(seed_, key_, counter_++); }
    double next_uniform();
    double next_normal();

private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Seeded in-place Fisher-Yates permutation.
template <typename T>
void shuffle(std::vector<T>& values, Stream& stream) {
    for (std::size_t i = values.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(stream.next_uniform() * static_cast<double>(i));
        if (j >= i) j = i - 1;
        std::swap(values[i - 1], values[j]);
    }
}

} // namespace rng

/// FNV-1a over arbitrary bytes; used for stable string keys and data digests.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string& text, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);

/// Lower-case hex rendering of a 64-bit digest.
std::string hex64(std::uint64_t value);

/// True when all entries are in [0,1] and sum to 1 within `tol`.
bool on_simplex(const std::vector<double>& probs, double tol = 1e-9);

} // namespace votecal
