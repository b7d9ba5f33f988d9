#pragma once
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace dsfpo {

// xoshiro256++ with splitmix64 seeding. Hand-rolled so that sampled streams
// are bit-stable across platforms and trivially serializable (std::mt19937
// plus std::normal_distribution are implementation-defined).
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; two fresh draws per sample, no cached
  // spare, so the generator state is the full sampling state.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  std::array<uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

  // Derives an independent stream from a root seed and a stream name, so the
  // set of streams can grow without perturbing existing ones.
  static Rng stream(uint64_t root_seed, std::string_view name) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    for (char c : name) {
      h ^= uint64_t(uint8_t(c));
      h *= 1099511628211ull;
    }
    uint64_t x = root_seed;
    const uint64_t a = splitmix64(x);
    return Rng(a ^ h);
  }

  static Rng stream(uint64_t root_seed, std::string_view prefix, int index) {
    return stream(root_seed, std::string(prefix) + "/" + std::to_string(index));
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::array<uint64_t, 4> state_{};
};

}  // namespace dsfpo
