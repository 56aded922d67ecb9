#ifndef MESHFL_RNG_HPP
#define MESHFL_RNG_HPP

#include <cstdint>
#include <string>
#include <string_view>

namespace meshfl {

// All randomness in a run flows from one master seed through named
// sub-streams ("link_shadow/r1.wlan0--r2.wlan0", "worker_noise/w3", ...).
// Streams are mutually independent, so the draw order in one subsystem never
// perturbs another — the property the determinism suite leans on.
//
// The generator is xoshiro256++ seeded via splitmix64. We keep our own
// engine (and Box-Muller for Gaussians) instead of <random> distributions so
// that identical seeds give identical sequences on every platform.
class RngStream {
 public:
  RngStream() : RngStream(0, "") {}
  RngStream(std::uint64_t master_seed, std::string_view label);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();

  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double gaussian();
  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

// Derives the sub-stream seed for a label. Exposed so alternate
// implementations can reproduce the stream layout structurally.
std::uint64_t stream_seed(std::uint64_t master_seed, std::string_view label);

}  // namespace meshfl

#endif
