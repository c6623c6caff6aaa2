// SPDX-License-Identifier: Apache-2.0
//
// ciforge - constructive interference precoding for the MU-MIMO downlink

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <utility>

namespace ciforge {

// Counter-style 64-bit generator (splitmix64 output function over an
// incrementing state). Streams are cheap to derive from (seed, trial,
// purpose) keys, so every trial owns independent substreams and results do
// not depend on how trials are distributed over workers.
class Prng {
  public:
    explicit Prng(std::uint64_t key) : state_(mix(key ^ 0x6a09e667f3bcc909ULL)) {}

    static std::uint64_t mix(std::uint64_t z) noexcept {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in (0, 1]; never returns 0 so log() is safe.
    double next_unit() noexcept {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1p-53;
    }

    // Uniform integer in [0, n), n > 0.
    std::uint64_t next_below(std::uint64_t n) noexcept {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // One Box-Muller pair of independent standard normals.
    std::pair<double, double> next_normal_pair() noexcept {
        const double u1 = next_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(t), r * std::sin(t)};
    }

    // Circularly symmetric complex Gaussian CN(0, variance).
    std::complex<double> next_cnormal(double variance) noexcept {
        const auto [a, b] = next_normal_pair();
        const double s = std::sqrt(variance * 0.5);
        return {a * s, b * s};
    }

  private:
    std::uint64_t state_;
};

// Substream purposes; part of the stream key so that e.g. the noise draw
// order can never disturb the channel draw order.
enum class StreamPurpose : std::uint64_t {
    Channel = 1,
    Messages = 2,
    Noise = 3,
    CsiError = 4,
    Partition = 5,
};

inline std::uint64_t stream_key(std::uint64_t seed, std::uint64_t trial,
                                StreamPurpose purpose) {
    std::uint64_t k = Prng::mix(seed);
    k = Prng::mix(k ^ trial);
    k = Prng::mix(k ^ static_cast<std::uint64_t>(purpose));
    return k;
}

inline Prng make_stream(std::uint64_t seed, std::uint64_t trial, StreamPurpose purpose) {
    return Prng(stream_key(seed, trial, purpose));
}

} // namespace ciforge
