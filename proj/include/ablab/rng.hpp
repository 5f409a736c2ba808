#pragma once

#include <cstdint>
#include <cstddef>
#include <random>
#include <vector>

namespace ablab {

// Deterministic random stream. mt19937_64 gives bit-identical sequences on
// every platform; the uniform/normal transforms are spelled out here because
// the standard library's distributions are implementation-defined and would
// break reproducibility of seeds across toolchains.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double next_uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // standard normal via Box-Muller, pairs cached
    double next_normal();

    // uniform integer in [0, bound), unbiased
    std::uint64_t next_below(std::uint64_t bound);

    void fill_normal(double *dst, std::size_t n);

    // Fisher-Yates permutation of [0, n)
    std::vector<std::size_t> permutation(std::size_t n);

  private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Mixes a base seed with a stream tag so that independent streams (teacher
// weights, sample draws, per-epoch shuffles, ...) never collide.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace ablab
