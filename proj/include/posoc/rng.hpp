#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include "posoc/core.hpp"

namespace posoc {

/// Counter-based random stream keyed by (seed, stream_id, lane).
///
/// The generator is a SplitMix64 counter: output k is a bijective mix of
/// key + k * golden. Streams with different keys are independent for Monte
/// Carlo purposes, and identical keys always replay the same sequence, so a
/// trajectory's noise does not depend on which worker simulates it.
/// Lanes split one trajectory's randomness (state noise vs observation noise).
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream() : RngStream(0, 0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t lane = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  /// Uniform on [0, 1).
  double uniform();
  double normal();
  /// Fills `out` with independent standard normals.
  void normals(Vector& out);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t lane() const { return lane_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t lane_;
  std::uint64_t state_;
  std::normal_distribution<double> gauss_;
};

/// Stateless 64-bit mixer used to derive stream identifiers.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_stream(std::uint64_t parent, std::uint64_t a, std::uint64_t b = 0);

}  // namespace posoc
