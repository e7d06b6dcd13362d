// Copyright 2026 The spdq Authors
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

#pragma once

#include "spdq/types.hpp"

#include <cstdint>
#include <random>

namespace spdq {

/// SplitMix64 finalizer, used to decorrelate seeds of derived streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seeded pseudo-random stream with explicit, platform-stable draw rules.
///
/// Every run derives independent substreams with `Rng::stream(seed, index)`:
/// the (seed, index) pair is mixed through two rounds of SplitMix64 before
/// seeding the engine, so distinct indices and distinct root seeds give
/// uncorrelated streams. All sampling helpers are written out here instead
/// of using <random> distributions so traces are reproducible bit-for-bit.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    /// Documented splitting rule: stream `index` of root `seed`.
    static Rng stream(std::uint64_t seed, std::uint64_t index) {
        return Rng(splitmix64(seed) + splitmix64(index));
    }

    std::uint64_t raw() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in {0, ..., n-1}, unbiased via rejection.
    int uniform_index(int n) {
        detail::require(n > 0, "uniform_index: n must be positive");
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return static_cast<int>(x % un);
    }

    /// Draw from a finite distribution by inverse CDF; the final index
    /// absorbs any floating-point slack in the partial sums.
    int categorical(const Eigen::Ref<const Vector>& probs) {
        const double u = uniform();
        double cum = 0.0;
        for (Index i = 0; i + 1 < probs.size(); ++i) {
            cum += probs(i);
            if (u < cum) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size() - 1);
    }

  private:
    std::mt19937_64 engine_;
};

} // namespace spdq
