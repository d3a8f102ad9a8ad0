#pragma once

#include <array>
#include <cstdint>

namespace qrs {

/// Counter-based random stream built on the Philox4x32-10 block function.
///
/// A stream is addressed by (seed, stream_id). The seed forms the Philox key
/// and the stream id occupies the high 64 bits of the 128-bit block counter,
/// so streams with the same seed and distinct ids draw from disjoint counter
/// ranges and are statistically independent. Identical (seed, stream_id)
/// always reproduces the identical sequence, on every platform; all golden
/// outputs in this project assume this generator family.
///
/// A stream is owned by exactly one logical task at a time.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream_id) {}

  std::uint64_t seed() const {
    return static_cast<std::uint64_t>(key_[0]) |
           (static_cast<std::uint64_t>(key_[1]) << 32);
  }
  std::uint64_t stream_id() const { return stream_; }

  std::uint64_t next_u64() {
    if (pos_ >= 2) refill();
    const unsigned i = 2 * pos_++;
    return static_cast<std::uint64_t>(out_[i]) |
           (static_cast<std::uint64_t>(out_[i + 1]) << 32);
  }

  /// Uniform on the half-open interval (0, 1], with 53-bit resolution.
  /// Never returns 0, so log(u) is finite and acceptance tests with a zero
  /// threshold can never fire.
  double uniform_open01() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Unbiased integer in [0, n), n >= 1, by rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t bound = n * ((~std::uint64_t{0} / n));
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= bound);
    return x % n;
  }

 private:
  static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                      std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
  }

  void refill() {
    std::array<std::uint32_t, 4> c{
        static_cast<std::uint32_t>(block_),
        static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_),
        static_cast<std::uint32_t>(stream_ >> 32)};
    std::array<std::uint32_t, 2> k = key_;
    for (int round = 0; round < 10; ++round) {
      if (round != 0) {
        k[0] += 0x9E3779B9u;  // golden-ratio key schedule
        k[1] += 0xBB67AE85u;
      }
      std::uint32_t hi0, lo0, hi1, lo1;
      mulhilo(0xD2511F53u, c[0], hi0, lo0);
      mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
      c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
    out_ = c;
    ++block_;
    pos_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t block_ = 0;
  std::uint64_t stream_;
  std::array<std::uint32_t, 4> out_{};
  unsigned pos_ = 2;
};

}  // namespace qrs
