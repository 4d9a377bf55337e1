// Copyright 2026 The Stackprop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef STACKPROP_RNG_HPP_
#define STACKPROP_RNG_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace stackprop {

// Seeded generator whose output sequence is identical on every platform.
// Only the raw mt19937_64 stream is used; all derived draws are computed
// here rather than through <random> distributions, whose algorithms are
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double Uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform01(); }

  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t UniformIndex(std::uint64_t bound);

  // Standard normal via the Marsaglia polar method.
  double Normal();

  template <typename T>
  void Shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(UniformIndex(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t MixSeed(std::uint64_t value);
std::uint64_t CombineSeed(std::uint64_t seed, std::uint64_t value);
std::uint64_t HashString(std::string_view text);

}  // namespace stackprop

#endif  // STACKPROP_RNG_HPP_
