#pragma once

// Seed derivation and portable random draws.
//
// std::uniform_*_distribution and std::shuffle are implementation-defined,
// so every draw that ends up in a result file goes through the helpers
// below. Only the engine (std::mt19937_64) comes from the standard library.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace cogeval {

using Seed = std::uint64_t;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a, 64 bit.
inline constexpr std::uint64_t fnv1a(std::string_view s,
                                     std::uint64_t h = 0xcbf29ce484222325ULL) noexcept
{
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {
inline constexpr std::uint64_t mix_one(std::uint64_t h, std::uint64_t v) noexcept
{
    return splitmix64(h ^ splitmix64(v));
}
inline constexpr std::uint64_t mix_one(std::uint64_t h, std::string_view s) noexcept
{
    // length prefix keeps ("ab","c") and ("a","bc") apart
    return mix_one(mix_one(h, static_cast<std::uint64_t>(s.size())), fnv1a(s));
}
inline constexpr std::uint64_t mix_one(std::uint64_t h, const char* s) noexcept
{
    return mix_one(h, std::string_view{s});
}
template <typename T>
    requires std::is_integral_v<T>
inline constexpr std::uint64_t mix_one(std::uint64_t h, T v) noexcept
{
    return mix_one(h, static_cast<std::uint64_t>(v));
}
}  // namespace detail

/// Order-sensitive hash of a seed and any mix of integers and strings.
template <typename... Parts>
constexpr Seed derive_seed(Seed base, const Parts&... parts) noexcept
{
    std::uint64_t h = splitmix64(base);
    ((h = detail::mix_one(h, parts)), ...);
    return h;
}

class Rng {
public:
    explicit Rng(Seed seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer on [0, bound) without modulo bias.
    std::uint64_t below(std::uint64_t bound)
    {
        const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

    /// Standard normal via Box-Muller; the spare value is cached.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Fisher-Yates.
    template <typename T>
    void shuffle(std::span<T> items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace cogeval
