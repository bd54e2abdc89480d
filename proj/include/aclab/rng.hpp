#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>

namespace aclab {

namespace detail {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace detail

/**
 * Counter-based generator: the i-th output is a fixed function of (key, i).
 *
 * The state is two integers, so a run can be reproduced or resumed from any
 * point. Streams for different (seed, stream id) pairs are independent keys.
 * Satisfies UniformRandomBitGenerator, but the helpers below are used instead
 * of <random> distributions so that draws are identical across standard
 * libraries.
 */
class CounterRng {
  public:
    using result_type = std::uint64_t;

    CounterRng() = default;
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(detail::mix64(detail::mix64(seed) ^ (stream * 0xD1B54A32D192ED03ULL + 1))) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return detail::mix64(key_ + (counter_++) * 0x9E3779B97F4A7C15ULL); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Index drawn from a discrete distribution by inverse CDF.
    std::size_t categorical(std::span<const double> probs) {
        if (probs.empty())
            throw std::invalid_argument("categorical: empty distribution");
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc)
                return i;
        }
        // u landed in the rounding gap above the cumulative sum
        for (std::size_t i = probs.size(); i-- > 0;)
            if (probs[i] > 0.0)
                return i;
        return probs.size() - 1;
    }

    /// Standard exponential draw.
    double exponential() { return -std::log1p(-uniform()); }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

    friend bool operator==(const CounterRng&, const CounterRng&) = default;

  private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace aclab
