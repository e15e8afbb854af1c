#include "votecal/common.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <numbers>

namespace votecal {

namespace rng {

std::uint64_t mix(std::uint64_t x) {
    std::uint64_t z = x + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t draw(std::uint64_t seed, std::uint64_t key, std::uint64_t counter) {
    return mix(mix(mix(seed) ^ key) ^ counter);
}

double uniform(std::uint64_t seed, std::uint64_t key, std::uint64_t counter) {
    return static_cast<double>(draw(seed, key, counter) >> 11) * 0x1.0p-53;
}

double normal(std::uint64_t seed, std::uint64_t key, std::uint64_t counter) {
    // u1 shifted into (0,1] so the log is finite.
    double u1 = static_cast<double>((draw(seed, key, 2 * counter) >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform(seed, key, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t categorical(const std::vector<double>& probs, double u) {
    double cumulative = 0.0;
    for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
        cumulative += probs[k];
        if (u < cumulative) return k;
    }
    return probs.empty() ? 0 : probs.size() - 1;
}

double Stream::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Stream::next_normal() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace rng

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t basis) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t hash = basis;
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= bytes[i];
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::uint64_t fnv1a(const std::string& text, std::uint64_t basis) {
    return fnv1a(text.data(), text.size(), basis);
}

std::string format_double(double value) {
    char buffer[64];
    auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, result.ptr);
}

std::string hex64(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

bool on_simplex(const std::vector<double>& probs, double tol) {
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) return false;
        sum += p;
    }
    return std::fabs(sum - 1.0) <= tol;
}

} // namespace votecal
