#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

#include "caseforge/core/error.hpp"

namespace caseforge {

// xoshiro256** with splitmix64 seeding. Self-implemented so that streams are
// bit-portable across platforms and the full state serializes to four words
// (std:: distributions are not reproducible across standard libraries).
class Rng {
 public:
  Rng() : Rng(0x9e3779b97f4a7c15ull) {}

  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& s : state_) {
      // splitmix64
      x += 0x9e3779b97f4a7c15ull;
      uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
      s = z ^ (z >> 31);
    }
  }

  // Derive an independent stream, e.g. one per image or per network.
  Rng fork(uint64_t salt) const {
    return Rng(state_[0] ^ (salt * 0xd1342543de82ef95ull + 0x632be59bd9b4e019ull));
  }

  uint64_t next_u64() {
    auto rotl = [](uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    require(n > 0, Errc::invalid_argument, "uniform_int: n must be positive");
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Box-Muller, no cached spare so the state stays four words.
  double normal() {
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      uint64_t j = uniform_int(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << std::hex;
    for (size_t i = 0; i < state_.size(); ++i) {
      if (i) os << ':';
      os << state_[i];
    }
    return os.str();
  }

  static Rng deserialize(const std::string& text) {
    Rng r;
    std::istringstream is(text);
    std::string tok;
    for (auto& s : r.state_) {
      require(static_cast<bool>(std::getline(is, tok, ':')), Errc::bad_checkpoint,
              "rng state: expected four hex words, got '" + text + "'");
      s = std::stoull(tok, nullptr, 16);
    }
    return r;
  }

  bool operator==(const Rng& o) const { return state_ == o.state_; }

 private:
  std::array<uint64_t, 4> state_{};
};

}  // namespace caseforge
