#pragma once

// Counter-based randomness: every value is a pure function of
// (seed, stream, index). Consumers key substreams by what they are doing
// (stage, timestep, position), so results never depend on evaluation
// order and identical keys reproduce identical draws on every run.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace dik {

inline constexpr double kGumbelEpsilon = 1e-20;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  // Derives an independent stream; chaining keys is order-sensitive.
  Rng substream(std::uint64_t key) const {
    return Rng(seed_, detail::splitmix64(stream_ ^ detail::splitmix64(key)));
  }

  std::uint64_t word_at(std::uint64_t index) const {
    std::uint64_t h = detail::splitmix64(seed_);
    h = detail::splitmix64(h ^ stream_);
    h = detail::splitmix64(h ^ index);
    return h;
  }

  // Strictly inside (0,1): the 53-bit integer grid is offset by half a step,
  // so neither endpoint is reachable.
  double uniform_at(std::uint64_t index) const {
    return (static_cast<double>(word_at(index) >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

// Stream tags for the pipeline stages. Substreams derived from distinct tags
// never collide, which is what makes inversion, editing and refinement
// independently reproducible.
namespace stream {
inline constexpr std::uint64_t mask_build = 0x6d61736b;   // schedule mask construction
inline constexpr std::uint64_t rectify = 0x72656374;      // logit rectification draws
inline constexpr std::uint64_t edit_noise = 0x65646974;   // stage-2 sampling noise
inline constexpr std::uint64_t refine = 0x7265666e;       // intrinsic refinement
inline constexpr std::uint64_t recover = 0x7265636f;      // residual-region recovery
inline constexpr std::uint64_t case_gen = 0x63617365;     // benchmark case synthesis
inline constexpr std::uint64_t bench = 0x626e6368;        // per-case pipeline runs
}  // namespace stream

// The first `count` values of the stream; same (seed, stream) -> same array.
inline std::vector<double> uniform(const Rng& rng, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = rng.uniform_at(i);
  return out;
}

// G = -log(-log(U + eps) + eps); the guard keeps both logs finite.
inline double gumbel_from_uniform(double u, double epsilon = kGumbelEpsilon) {
  return -std::log(-std::log(u + epsilon) + epsilon);
}

inline std::vector<double> gumbel_noise(const Rng& rng, std::size_t count,
                                        double epsilon = kGumbelEpsilon) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = gumbel_from_uniform(rng.uniform_at(i), epsilon);
  return out;
}

// argmax_j(logits[j] / temperature + noise[j]); ties go to the lowest index.
inline int gumbel_max_sample(std::span<const double> logits, double temperature,
                             std::span<const double> noise) {
  if (temperature <= 0.0)
    throw std::invalid_argument("gumbel_max_sample: temperature must be positive, got " +
                                std::to_string(temperature));
  if (logits.empty())
    throw std::invalid_argument("gumbel_max_sample: empty logit vector");
  if (logits.size() != noise.size())
    throw std::invalid_argument("gumbel_max_sample: logits and noise lengths differ (" +
                                std::to_string(logits.size()) + " vs " +
                                std::to_string(noise.size()) + ")");
  int best = 0;
  double best_value = logits[0] / temperature + noise[0];
  for (std::size_t j = 1; j < logits.size(); ++j) {
    const double value = logits[j] / temperature + noise[j];
    if (value > best_value) {
      best_value = value;
      best = static_cast<int>(j);
    }
  }
  return best;
}

// Sample from Gumbel(location) conditioned on the result lying strictly
// below `trunc`: location - log(exp(location - trunc) - log u).
inline double gumbel_trunc_sample(double location, double trunc, double u) {
  if (!(u > 0.0 && u < 1.0))
    throw std::invalid_argument("gumbel_trunc_sample: u must lie in (0,1), got " +
                                std::to_string(u));
  return location - std::log(std::exp(location - trunc) - std::log(u));
}

}  // namespace dik
