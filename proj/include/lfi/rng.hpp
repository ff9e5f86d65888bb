#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace lfi {

/// Mixes a seed with a tag into a new 64-bit seed (splitmix64 finalizer).
/// Used to derive hierarchical seeds: repetition -> dataset role -> entry.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept;

namespace detail {
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) noexcept;
}

/// Counter-based random stream (Philox 4x32-10). The key is the master seed and
/// the upper half of the counter is the stream id, so any (seed, stream) pair can
/// be materialized independently and in any order.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t master_seed, std::uint64_t stream_id) noexcept;

  std::uint64_t master_seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  std::uint64_t next_u64() noexcept;
  result_type operator()() noexcept { return next_u64(); }
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform on (0, 1).
  double uniform_open() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Standard normal (Box-Muller, second variate cached).
  double normal() noexcept;
  /// Exponential with unit rate.
  double exponential() noexcept;
  /// Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Fisher-Yates shuffle driven by an RngStream (portable across standard libraries).
template <typename It>
void shuffle(It first, It last, RngStream& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.below(i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace lfi
