#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <utility>

namespace acnet {

// pcg32 (O'Neill, pcg-random.org). Two words of explicit state so
// checkpoints can carry the generator across save/resume.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0x853c49e6748fea9bULL, std::uint64_t stream = 1);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  double uniform();                     // [0, 1), 53-bit resolution
  double uniform(double lo, double hi);
  double normal();                      // standard normal via Box-Muller
  int uniform_int(int n);               // [0, n)

  template <typename Vec>
  void shuffle(Vec& v) {
    // Fisher-Yates, back to front
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::array<std::uint64_t, 2> state() const { return {state_, inc_}; }
  void set_state(const std::array<std::uint64_t, 2>& s) {
    state_ = s[0];
    inc_ = s[1];
  }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
};

// splitmix64 finalizer; basis for deriving independent per-(epoch, sample)
// seeds so that parallel or resumed runs draw identical streams.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);

}  // namespace acnet
