/*
 * Copyright 2026 The dpfl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef DPFL_RANDOM_HPP_
#define DPFL_RANDOM_HPP_

// Counter-based random streams.
//
// A NoiseStream is an immutable descriptor: a 64-bit key obtained by hashing
// a master seed together with a path of counters (round, client, iteration,
// example, layer, ...). Deriving a child never mutates the parent, so any
// number of threads can derive and draw from disjoint paths and obtain the
// same numbers regardless of scheduling. Draws come from Philox4x32-10 keyed
// by the stream key, consumed through a short-lived Generator cursor.

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>

namespace dpfl {

// Philox4x32 with 10 rounds (Salmon et al., Random123).
std::array<std::uint32_t, 4> Philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

class Generator;

class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t master_seed);

  // Child stream for the given counter path; pure.
  NoiseStream derive(std::initializer_list<std::uint64_t> path) const;
  NoiseStream derive(std::uint64_t component) const { return derive({component}); }

  Generator generator() const;

  std::uint64_t key() const noexcept { return key_; }

  friend bool operator==(const NoiseStream&, const NoiseStream&) = default;

 private:
  struct FromKey {};
  NoiseStream(FromKey, std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
};

// Sequential cursor over one stream. Cheap to create; not shared across threads.
class Generator {
 public:
  explicit Generator(std::uint64_t key);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform integer in [0, n); n > 0. Unbiased (Lemire's method).
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal via Box-Muller; pairs are cached.
  double normal();

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int cursor_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t SplitMix64(std::uint64_t x);

}  // namespace dpfl

#endif  // DPFL_RANDOM_HPP_
