#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hostguard/util.hpp"

namespace hostguard {

/// Bloom filter over opaque byte strings.
///
/// Bit positions use double hashing, position_i = (h1 + i*h2) mod m for
/// i in [0, k), where h1 and h2 are FNV-1a 64 of the item started from
/// `seed1` and `seed2` respectively. The same item maps to the same bits
/// on every platform.
///
/// insert() sets bits with atomic OR, so concurrent inserts and lookups
/// never lose a completed insert.
class bloom_set {
 public:
  static constexpr std::uint64_t default_seed1 = fnv1a_offset_basis;
  static constexpr std::uint64_t default_seed2 = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t max_bits = std::uint64_t{1} << 36;

  /// m = ceil(n ln(1/p) / ln(2)^2), k = max(1, round(m/n ln 2)).
  static bloom_set create(std::uint64_t n_expected, double p_target);
  /// An explicit geometry; k must be in [1, 32].
  static bloom_set with_geometry(std::uint64_t m, unsigned k, std::uint64_t seed1 = default_seed1,
                                 std::uint64_t seed2 = default_seed2);

  bloom_set(const bloom_set& other);
  bloom_set& operator=(const bloom_set& other);
  bloom_set(bloom_set&&) noexcept = default;
  bloom_set& operator=(bloom_set&&) noexcept = default;

  void insert(bytes_view item);
  void insert(std::string_view item) { insert(as_bytes(item)); }
  bool contains(bytes_view item) const;
  bool contains(std::string_view item) const { return contains(as_bytes(item)); }

  std::vector<std::uint64_t> positions(bytes_view item) const;
  std::vector<std::uint64_t> positions(std::string_view item) const { return positions(as_bytes(item)); }

  std::uint64_t m() const noexcept { return m_; }
  unsigned k() const noexcept { return k_; }
  std::uint64_t n_inserted() const noexcept { return n_->load(std::memory_order_relaxed); }
  /// Design parameters; absent on filters read back from bytes.
  std::optional<double> p_target() const noexcept { return p_target_; }
  std::optional<std::uint64_t> n_expected() const noexcept { return n_expected_; }
  std::uint64_t seed1() const noexcept { return seed1_; }
  std::uint64_t seed2() const noexcept { return seed2_; }

  std::uint64_t bits_set() const;
  double fill_ratio() const { return static_cast<double>(bits_set()) / static_cast<double>(m_); }
  /// fill_ratio ^ k.
  double fp_rate_estimate() const;
  bool test_bit(std::uint64_t i) const;

  /// `BLOOM v1 <m> <k> <n_inserted> <seed1> <seed2>\n` followed by the bit
  /// array, bit i in byte i/8 at position i%8.
  std::string serialize() const;
  /// Throws errc::malformed_bloom.
  static bloom_set deserialize(std::string_view bytes);

 private:
  bloom_set() = default;

  std::uint64_t m_ = 0;
  unsigned k_ = 0;
  std::uint64_t seed1_ = default_seed1;
  std::uint64_t seed2_ = default_seed2;
  std::optional<double> p_target_;
  std::optional<std::uint64_t> n_expected_;
  std::vector<std::uint64_t> words_;
  std::unique_ptr<std::atomic<std::uint64_t>> n_ = std::make_unique<std::atomic<std::uint64_t>>(0);
};

}  // namespace hostguard
