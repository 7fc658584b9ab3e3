// Copyright 2026 The ser-forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SERFORGE_RNG_H_
#define SERFORGE_RNG_H_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace serforge {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent per-sample streams.
constexpr std::uint64_t MixSeed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t DeriveSeed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) h = MixSeed(h ^ MixSeed(p));
  return h;
}

// Stream tags keep augmentation, patchout, dropout and shuffling independent.
enum class Stream : std::uint64_t {
  kAugment = 1,
  kPatchout = 2,
  kDropout = 3,
  kShuffle = 4,
  kInit = 5,
  kSplit = 6,
  kToy = 7,
};

inline Rng MakeRng(std::uint64_t seed, Stream stream, std::uint64_t a = 0,
                   std::uint64_t b = 0) {
  return Rng(DeriveSeed({seed, static_cast<std::uint64_t>(stream), a, b}));
}

// Uniform double in [0, 1) from the raw 64-bit stream; std::uniform_real_distribution
// is implementation-defined, this is not.
inline double UniformUnit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double UniformRange(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * UniformUnit(rng);
}

// Integer in [lo, hi] inclusive.
inline std::int64_t UniformInt(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(rng() % span);
}

// Standard normal via Box-Muller, for the same portability reason as UniformUnit.
double StandardNormal(Rng& rng);

template <typename It>
void Shuffle(It first, It last, Rng& rng) {
  const auto n = last - first;
  for (auto i = n - 1; i > 0; --i) {
    const auto j = static_cast<decltype(i)>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(first[i], first[j]);
  }
}

}  // namespace serforge

#endif  // SERFORGE_RNG_H_
