#include "hostguard/bloomset.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>

#include "hostguard/error.hpp"

namespace hostguard {

bloom_set bloom_set::create(std::uint64_t n_expected, double p_target) {
  if (n_expected < 1 || !(p_target > 0.0) || !(p_target < 1.0)) {
    throw error(errc::invalid_parameters, "need n_expected >= 1 and 0 < p_target < 1");
  }
  const double ln2 = std::log(2.0);
  double m = std::ceil(static_cast<double>(n_expected) * std::log(1.0 / p_target) / (ln2 * ln2));
  if (!(m >= 1.0) || m > static_cast<double>(max_bits)) {
    throw error(errc::invalid_parameters, "filter would need " + std::to_string(m) + " bits");
  }
  auto mm = static_cast<std::uint64_t>(m);
  double k = std::round(static_cast<double>(mm) / static_cast<double>(n_expected) * ln2);
  auto kk = static_cast<unsigned>(std::clamp(k, 1.0, 32.0));
  auto b = with_geometry(mm, kk);
  b.p_target_ = p_target;
  b.n_expected_ = n_expected;
  return b;
}

bloom_set bloom_set::with_geometry(std::uint64_t m, unsigned k, std::uint64_t seed1, std::uint64_t seed2) {
  if (m < 1 || m > max_bits || k < 1 || k > 32) throw error(errc::invalid_parameters, "bad filter geometry");
  bloom_set b;
  b.m_ = m;
  b.k_ = k;
  b.seed1_ = seed1;
  b.seed2_ = seed2;
  b.words_.assign((m + 63) / 64, 0);
  return b;
}

bloom_set::bloom_set(const bloom_set& o)
    : m_(o.m_),
      k_(o.k_),
      seed1_(o.seed1_),
      seed2_(o.seed2_),
      p_target_(o.p_target_),
      n_expected_(o.n_expected_),
      words_(o.words_),
      n_(std::make_unique<std::atomic<std::uint64_t>>(o.n_inserted())) {}

bloom_set& bloom_set::operator=(const bloom_set& o) {
  if (this != &o) *this = bloom_set(o);
  return *this;
}

std::vector<std::uint64_t> bloom_set::positions(bytes_view item) const {
  std::uint64_t a = fnv1a64(item, seed1_) % m_;
  std::uint64_t step = fnv1a64(item, seed2_) % m_;
  std::vector<std::uint64_t> out(k_);
  for (unsigned i = 0; i < k_; ++i) {
    out[i] = a;
    a = static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) + step) % m_);
  }
  return out;
}

void bloom_set::insert(bytes_view item) {
  for (auto p : positions(item)) {
    std::atomic_ref<std::uint64_t> w(words_[p / 64]);
    w.fetch_or(std::uint64_t{1} << (p % 64), std::memory_order_release);
  }
  n_->fetch_add(1, std::memory_order_relaxed);
}

bool bloom_set::test_bit(std::uint64_t i) const {
  std::atomic_ref<const std::uint64_t> w(words_[i / 64]);
  return (w.load(std::memory_order_acquire) >> (i % 64)) & 1u;
}

bool bloom_set::contains(bytes_view item) const {
  for (auto p : positions(item)) {
    if (!test_bit(p)) return false;
  }
  return true;
}

std::uint64_t bloom_set::bits_set() const {
  std::uint64_t n = 0;
  for (auto w : words_) n += static_cast<std::uint64_t>(std::popcount(w));
  return n;
}

double bloom_set::fp_rate_estimate() const { return std::pow(fill_ratio(), static_cast<double>(k_)); }

std::string bloom_set::serialize() const {
  std::string out = "BLOOM v1 " + std::to_string(m_) + " " + std::to_string(k_) + " " +
                    std::to_string(n_inserted()) + " " + std::to_string(seed1_) + " " + std::to_string(seed2_) +
                    "\n";
  std::size_t nbytes = (m_ + 7) / 8;
  out.reserve(out.size() + nbytes);
  for (std::size_t i = 0; i < nbytes; ++i) {
    out.push_back(static_cast<char>((words_[i / 8] >> (8 * (i % 8))) & 0xff));
  }
  return out;
}

bloom_set bloom_set::deserialize(std::string_view bytes) {
  auto bad = [](const std::string& why) { return error(errc::malformed_bloom, why); };
  auto nl = bytes.find('\n');
  if (nl == std::string_view::npos || nl > 200) throw bad("missing header");
  auto head = split(bytes.substr(0, nl), ' ');
  if (head.size() != 7 || head[0] != "BLOOM" || head[1] != "v1") throw bad("bad header");
  std::uint64_t v[5];
  for (int i = 0; i < 5; ++i) {
    const auto& f = head[static_cast<std::size_t>(i) + 2];
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v[i]);
    if (ec != std::errc{} || p != f.data() + f.size() || f.empty()) throw bad("bad header field " + f);
  }
  if (v[0] < 1 || v[0] > max_bits || v[1] < 1 || v[1] > 32) throw bad("bad geometry");
  bloom_set b = with_geometry(v[0], static_cast<unsigned>(v[1]), v[3], v[4]);
  auto body = bytes.substr(nl + 1);
  if (body.size() != (b.m_ + 7) / 8) throw bad("bit array length mismatch");
  for (std::size_t i = 0; i < body.size(); ++i) {
    b.words_[i / 8] |= std::uint64_t{static_cast<unsigned char>(body[i])} << (8 * (i % 8));
  }
  if (b.m_ % 64 != 0 && (b.words_.back() >> (b.m_ % 64)) != 0) throw bad("bits set beyond m");
  b.n_->store(v[2]);
  return b;
}

}  // namespace hostguard
