// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

namespace rblock {

/// Counter-based random stream (Philox4x32-10).
///
/// The i-th 64-bit draw of a stream is a pure function of (seed, stream_id, i),
/// so the sequence is identical on every platform and substreams obtained with
/// split() can be consumed independently, in any order or on any thread.
/// Instances are single-owner; copy one to fork an identical sequence.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0) noexcept
      : seed_(seed), stream_id_(stream_id) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Standard normal via Box-Muller (one draw per call, no cached spare).
  double normal() noexcept;
  // Unbiased integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  bool bernoulli(double prob_one) noexcept { return uniform() < prob_one; }

  // Child stream with the same seed and a derived stream id; does not advance this stream.
  RngStream split(std::uint64_t child) const noexcept;

  // Raw Philox block for (key, counter words); exposed for known-answer tests.
  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 2> key,
                                             std::array<std::uint32_t, 4> ctr) noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
  // Second half of the Philox block for an odd counter, valid when cached_block_ == counter_ / 2.
  std::uint64_t cached_block_ = ~std::uint64_t{0};
  std::uint64_t cached_word_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace rblock
