#pragma once

#include <array>
#include <cstdint>

#include "gradflow/potentials.hpp"

namespace gradflow {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11): a keyed
/// bijection of a 128-bit counter. No internal state.
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) noexcept;
};

/// What a substream's draws are used for. Distinct purposes never share
/// counters.
enum class DrawPurpose : std::uint32_t {
  noise = 0,        // Gaussian increments
  accept = 1,       // Metropolis uniforms
  birth_death = 2,  // jump decisions and partners
  init = 3,         // initial ensembles
};

/// Sequential draws from the block sequence keyed by (seed, particle, step,
/// purpose). Particle indices use 32 bits and steps 56 bits of the counter.
/// Two substreams with the same key produce identical sequences
/// regardless of when or on which thread they are created.
class Substream {
 public:
  Substream(std::uint64_t seed, std::uint64_t particle, std::uint64_t step, DrawPurpose purpose) noexcept;

  /// Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Standard normal via Box-Muller.
  double normal() noexcept;
  void fill_normal(VecRef out) noexcept;
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

 private:
  std::uint64_t next_u64() noexcept;

  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  Philox4x32::Counter block_{};
  int used_ = 4;  // 32-bit words consumed from block_
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Root of all randomness in a run: a seed from which substreams are derived.
struct RngStream {
  std::uint64_t seed = 0;

  Substream substream(std::uint64_t particle, std::uint64_t step, DrawPurpose purpose = DrawPurpose::noise) const noexcept {
    return Substream(seed, particle, step, purpose);
  }
};

}  // namespace gradflow
