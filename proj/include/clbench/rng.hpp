#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace clbench {

// Deterministic counter-based stream (splitmix64 over an incrementing
// counter). Streams for distinct (seed, label) pairs are independent, so a
// consumer of one stream never perturbs another; labels in use: "init",
// "head", "shuffle", "fisher", "synth", "classorder".
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view label);

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double next_unit();
  // Uniform integer in [0, n), n >= 1.
  std::uint64_t next_below(std::uint64_t n);
  // Standard normal via Box-Muller; second value of each pair is cached.
  double next_gaussian();

  // Fisher-Yates over [0, n), written into `out`.
  void permutation(std::size_t n, std::vector<std::size_t>& out);

  // Advances the counter without drawing; used to reposition a stream when
  // restoring state from a checkpoint.
  void skip(std::uint64_t n) { counter_ += n; }

 private:
  std::uint64_t counter_ = 0;
  std::uint64_t key_ = 0;
  double cached_gaussian_ = 0.0;
  bool has_cached_gaussian_ = false;
};

// Stream factory matching the runner's (master seed, stream label) contract.
RngStream seed_rng(std::uint64_t master_seed, std::string_view label);

}  // namespace clbench
