// Copyright 2026 The fgsty Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FGSTY_RNG_HPP_
#define FGSTY_RNG_HPP_

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace fgsty {

/// Counter-based 64-bit generator. Draw i of a stream is a pure function of
/// (key, i), which makes streams identical across compilers and platforms.
/// The standard <random> distributions are implementation-defined, so all
/// real-valued draws are derived here from raw 64-bit words.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();

  /// Uniform in [0,1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t index(std::uint64_t n);

  /// Standard normal draw (Box-Muller; both values of a pair are used).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Independent stream derived from this one's key; does not advance it.
  Rng substream(std::uint64_t id) const;
  Rng substream(std::string_view name) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, bool);

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// seeded_rng(seed): the deterministic stream used throughout experiments.
inline Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

/// 64-bit finalizer from SplitMix64.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a hash of a string, used to name substreams.
std::uint64_t hash_name(std::string_view s);

}  // namespace fgsty

#endif  // FGSTY_RNG_HPP_
