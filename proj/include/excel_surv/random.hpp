#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace excel_surv {

// SplitMix64 finalizer, used to fan a single command seed out into
// independent per-split / per-grid-point streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept
{
    return splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

// Thin wrapper over mt19937_64. The <random> distributions are
// implementation-defined, so the transforms are done here to keep generated
// data identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed)
        : engine_(seed)
    {
    }

    // [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // (0, 1)
    double uniform_open() { return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal()
    {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n)
    {
        // Lemire's multiply-shift, rejection-free variant; bias is < n / 2^64.
        const auto hi = static_cast<unsigned __int128>(engine_()) * n;
        return static_cast<std::size_t>(hi >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& values)
    {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace excel_surv
