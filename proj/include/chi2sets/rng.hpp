#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace chi2sets {

/// Philox4x32-10 counter-based generator (Salmon, Moraes, Dror, Shaw 2011).
/// Multipliers 0xD2511F53/0xCD9E8D57, Weyl increments 0x9E3779B9/0xBB67AE85.
/// Output is a pure function of (counter, key), so any stream can be
/// reproduced in another language from the constants above.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key);

/// SplitMix64 finalizer; used to derive stream keys.
std::uint64_t splitmix64(std::uint64_t x);

/// 64-bit FNV-1a of a short purpose tag ("noise", "design", ...).
std::uint64_t tag_hash(std::string_view tag);

/// Key = splitmix64(splitmix64(seed ^ tag_hash(tag)) + index).
std::uint64_t stream_key(std::uint64_t seed, std::uint64_t index, std::string_view tag);

inline constexpr std::string_view kRngAlgorithmId = "philox4x32-10/splitmix64-key/box-muller";

/// A stream of draws under one Philox key. The 128-bit counter starts at zero
/// and is incremented once per block of four 32-bit words.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key);
  RandomStream(std::uint64_t seed, std::uint64_t index, std::string_view tag)
      : RandomStream(stream_key(seed, index, tag)) {}

  std::uint32_t next_u32();
  /// Two consecutive words, high word first.
  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box–Muller; each call consumes one pair of uniforms
  /// and caches the sine branch for the next call.
  double normal();
  /// Uniform integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound);

 private:
  void refill();

  PhiloxKey key_;
  PhiloxCounter counter_{0, 0, 0, 0};
  PhiloxCounter block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace chi2sets
