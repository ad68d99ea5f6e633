#ifndef PERFSIM_RNG_HPP
#define PERFSIM_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>

namespace perfsim {

/**
 * Philox4x32-10 block function (Salmon et al., "Parallel random numbers:
 * as easy as 1, 2, 3").
 *
 * A pure function of (counter, key): no state to advance, so streams can be
 * placed anywhere in the counter space and drawn in any order with identical
 * results. Verified against the reference known-answer vectors in the tests.
 */
struct Philox4x32 {
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t kMult0 = 0xD2511F53u;
    static constexpr std::uint32_t kMult1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static Block generate(Block ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMult0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMult1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }
};

/**
 * One independent random stream out of a 2^64-sized family per master seed.
 *
 * Layout: the Philox key carries the master seed, counter words [3],[2] carry
 * the stream id, and words [1],[0] count blocks within the stream. Identical
 * (seed, stream id) always reproduces the same draw sequence, regardless of
 * what any other stream did and regardless of thread interleaving.
 */
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
        : key_{static_cast<std::uint32_t>(seed),
               static_cast<std::uint32_t>(seed >> 32)},
          stream_id_(stream_id) {}

    std::uint64_t seed() const {
        return key_[0] | (static_cast<std::uint64_t>(key_[1]) << 32);
    }
    std::uint64_t stream_id() const { return stream_id_; }

    std::uint32_t next_u32() {
        if (buf_pos_ >= 4) {
            refill();
        }
        return buf_[buf_pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return lo | (hi << 32);
    }

    /// Uniform double in [0, 1), 53-bit resolution.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; generates pairs, caches the second.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // 1 - U keeps the argument of log in (0, 1].
        const double u1 = 1.0 - next_uniform();
        const double u2 = next_uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * kPi * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Rademacher draw: +1 or -1 with equal probability.
    double next_sign() {
        return (next_u32() & 0x80000000u) ? 1.0 : -1.0;
    }

private:
    static constexpr double kPi = 3.141592653589793238462643383279502884;

    void refill() {
        const Philox4x32::Block ctr = {
            static_cast<std::uint32_t>(block_),
            static_cast<std::uint32_t>(block_ >> 32),
            static_cast<std::uint32_t>(stream_id_),
            static_cast<std::uint32_t>(stream_id_ >> 32)};
        buf_ = Philox4x32::generate(ctr, key_);
        ++block_;
        buf_pos_ = 0;
    }

    Philox4x32::Key key_;
    std::uint64_t stream_id_;
    std::uint64_t block_ = 0;
    Philox4x32::Block buf_{};
    int buf_pos_ = 4;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/**
 * Stream derivation used throughout the library: one stream per
 * (master seed, replication index, step index) triple. Replication and step
 * each get 32 bits of the stream id.
 */
inline RngStream stream_for(std::uint64_t seed, std::uint64_t replication,
                            std::uint64_t step) {
    return RngStream(seed, (replication << 32) | (step & 0xFFFFFFFFu));
}

}  // namespace perfsim

#endif  // PERFSIM_RNG_HPP
