#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace fuselvm {

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
///
/// The 64-bit seed is the key; the 128-bit counter is (block index, stream id).
/// Every derived variate uses only the algorithms in this file so that streams
/// can be reproduced bit-for-bit by other implementations:
///   uniform      (u64 >> 11) * 2^-53, u64 = (first u32 << 32) | second u32
///   normal       Box-Muller on (uniform_open, uniform), both outputs used
///   poisson      Knuth multiplication for rate < 10, PTRS (Hoermann 1993) otherwise
///   multinomial  n independent categorical draws by inverse CDF
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox4x32(std::uint64_t seed, std::uint64_t stream = 0);

    /// One application of the 10-round bijection.
    static Block generate(Block counter, std::array<std::uint32_t, 2> key);

    std::uint32_t next_u32();
    std::uint64_t next_u64();
    double uniform();       // [0, 1)
    double uniform_open();  // (0, 1)
    double normal();
    std::int64_t poisson(double rate);
    void multinomial(std::int64_t trials, std::span<const double> probs, std::span<std::int64_t> out);

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::uint64_t block_ = 0;
    std::uint64_t stream_;
    Block buffer_{};
    int used_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Stream identifiers so independent simulation components never share draws.
std::uint64_t derive_stream(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace fuselvm
