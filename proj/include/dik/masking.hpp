#pragma once

// Progressive mask scheduling. The masked fraction of the work region
// follows floor(N * sin(pi*t / 2T)), and per-step masks are chosen by
// (optionally Gumbel-perturbed) confidence so the most predictable tokens
// are masked first. Constraining scores to +inf at previously masked
// positions and -inf outside the region makes the schedule nested:
// m_{t-1} is a subset of m_t is a subset of the region.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include "dik/rng.hpp"
#include "dik/types.hpp"

namespace dik {

struct ScheduleParams {
  int timesteps = 64;
  double mask_temperature = 0.0;

  void validate() const {
    detail::require(timesteps >= 1, "ScheduleParams: timesteps must be at least 1, got " +
                                        std::to_string(timesteps));
    detail::require(mask_temperature >= 0.0,
                    "ScheduleParams: mask_temperature must be non-negative, got " +
                        std::to_string(mask_temperature));
  }
};

// Number of positions masked at step t out of a region of region_size.
inline int schedule_size(int t, int total_steps, int region_size) {
  detail::require(total_steps >= 1, "schedule_size: total_steps must be at least 1, got " +
                                        std::to_string(total_steps));
  detail::require(t >= 1 && t <= total_steps,
                  "schedule_size: t = " + std::to_string(t) + " outside [1," +
                      std::to_string(total_steps) + "]");
  detail::require(region_size >= 0, "schedule_size: region_size must be non-negative");
  const double phase = std::numbers::pi * t / (2.0 * total_steps);
  return static_cast<int>(std::floor(region_size * std::sin(phase)));
}

// log(P) + mask_temperature * Gumbel; probabilities are floored at 1e-30
// before the log. Noise is indexed by position, so the field never depends
// on evaluation order; mask_temperature 0 returns the exact log
// probabilities.
inline ScoreField stochastic_confidence(const ConfidenceMap& probabilities,
                                        double mask_temperature, const Rng& rng) {
  detail::require(mask_temperature >= 0.0,
                  "stochastic_confidence: mask_temperature must be non-negative, got " +
                      std::to_string(mask_temperature));
  std::vector<double> scores(probabilities.size());
  for (int p = 0; p < probabilities.size(); ++p) {
    const double prob = std::max(probabilities.at(p), 1e-30);
    scores[p] = std::log(prob);
    if (mask_temperature > 0.0)
      scores[p] += mask_temperature * gumbel_from_uniform(rng.uniform_at(p));
  }
  return ScoreField(probabilities.height(), probabilities.width(), std::move(scores));
}

// Forces previously masked positions to +inf (always reselected) and
// positions outside the region to -inf (never selected).
inline ScoreField constrain_scores(const ScoreField& scores, const GroundingMask& prev_mask,
                                   const GroundingMask& region) {
  detail::require(scores.height() == region.height() && scores.width() == region.width(),
                  "constrain_scores: score and region shapes differ");
  detail::check_same_shape(prev_mask, region, "constrain_scores");
  detail::require(mask_subset(prev_mask, region),
                  "constrain_scores: prev_mask is not contained in the region");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> out(scores.size());
  for (int p = 0; p < scores.size(); ++p) {
    if (prev_mask.test(p))
      out[p] = inf;
    else if (!region.test(p))
      out[p] = -inf;
    else
      out[p] = scores.at(p);
  }
  return ScoreField(scores.height(), scores.width(), std::move(out));
}

// Top-count positions by score; ties resolve in row-major order.
inline GroundingMask generate_mask(const ScoreField& scores, int count) {
  detail::require(count >= 0, "generate_mask: count must be non-negative, got " +
                                  std::to_string(count));
  constexpr double inf = std::numeric_limits<double>::infinity();
  int eligible = 0;
  for (int p = 0; p < scores.size(); ++p)
    if (scores.at(p) > -inf) ++eligible;
  detail::require(eligible >= count,
                  "generate_mask: requested " + std::to_string(count) +
                      " positions but only " + std::to_string(eligible) + " are eligible");

  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&scores](int a, int b) {
    if (scores.at(a) != scores.at(b)) return scores.at(a) > scores.at(b);
    return a < b;
  });

  std::vector<std::uint8_t> bits(scores.size(), 0);
  for (int i = 0; i < count; ++i) bits[order[i]] = 1;
  return GroundingMask(scores.height(), scores.width(), std::move(bits));
}

// Writes the mask token at every masked position.
inline TokenGrid apply_mask(const TokenGrid& grid, const GroundingMask& mask) {
  detail::require(grid.height() == mask.height() && grid.width() == mask.width(),
                  "apply_mask: grid and mask shapes differ");
  std::vector<Token> tokens(grid.tokens().begin(), grid.tokens().end());
  for (int p = 0; p < grid.size(); ++p)
    if (mask.test(p)) tokens[p] = grid.mask_token();
  return grid.with_tokens(std::move(tokens));
}

}  // namespace dik
