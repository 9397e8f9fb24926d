#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>

namespace gfmm {

// Deterministic xoshiro256++ generator with hand-rolled uniform and normal
// transforms, so a seed pins the exact draw stream independent of the
// standard library's distribution implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

  // Index in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Independent child stream; identical (parent seed, stream) pairs give
  // identical children regardless of the parent's current position.
  SeededRng child(std::uint64_t stream) const { return SeededRng(derive_seed(seed_, stream)); }

  static std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64(x);
  }

  // Full state round-trip for checkpointing.
  std::string save_state() const {
    std::string s;
    for (auto w : state_) s += hex64(w);
    s += hex64(seed_);
    s += have_cached_ ? '1' : '0';
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(cached_));
    std::memcpy(&bits, &cached_, sizeof(bits));
    s += hex64(bits);
    return s;
  }

  static SeededRng restore_state(const std::string& s) {
    SeededRng r;
    if (s.size() != 4 * 16 + 16 + 1 + 16) return r;
    for (int i = 0; i < 4; ++i) r.state_[i] = parse64(s.substr(i * 16, 16));
    r.seed_ = parse64(s.substr(64, 16));
    r.have_cached_ = s[80] == '1';
    const std::uint64_t bits = parse64(s.substr(81, 16));
    std::memcpy(&r.cached_, &bits, sizeof(bits));
    return r;
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
      s[static_cast<size_t>(i)] = digits[v & 0xf];
      v >>= 4;
    }
    return s;
  }

  static std::uint64_t parse64(const std::string& s) {
    std::uint64_t v = 0;
    for (char c : s) {
      v <<= 4;
      if (c >= '0' && c <= '9')
        v |= static_cast<std::uint64_t>(c - '0');
      else if (c >= 'a' && c <= 'f')
        v |= static_cast<std::uint64_t>(c - 'a' + 10);
    }
    return v;
  }

  std::array<std::uint64_t, 4> state_{};
  std::uint64_t seed_ = 0;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace gfmm
