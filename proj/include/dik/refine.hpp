#pragma once

// Post-edit repair. Two localized passes reuse the stage-2 machinery with
// no residuals (pure re-sampling): intrinsic refinement re-generates
// low-confidence positions inside the target-subject mask, and residual
// recovery in-paints the leftover source region under a background
// conditioning. Both touch nothing outside their region.

#include <string>
#include <vector>

#include "dik/inversion.hpp"
#include "dik/types.hpp"

namespace dik {

enum class RelaxMode { tight, bounding_box };

struct RefinementParams {
  double conf_threshold = 0.5;
  int refine_steps = 8;
  RelaxMode relax_mode = RelaxMode::tight;

  void validate() const {
    detail::require(conf_threshold > 0.0 && conf_threshold < 1.0,
                    "RefinementParams: conf_threshold must lie in (0,1), got " +
                        std::to_string(conf_threshold));
    detail::require(refine_steps >= 1,
                    "RefinementParams: refine_steps must be at least 1, got " +
                        std::to_string(refine_steps));
  }
};

// Positions whose confidence falls below the threshold.
inline GroundingMask threshold_mask(const ConfidenceMap& confidence, double threshold) {
  std::vector<std::uint8_t> bits(confidence.size());
  for (int p = 0; p < confidence.size(); ++p) bits[p] = confidence.at(p) < threshold;
  return GroundingMask(confidence.height(), confidence.width(), std::move(bits));
}

// M_src AND NOT M_tgt: the leftover source area an edit no longer covers.
inline GroundingMask residual_mask(const GroundingMask& source_mask,
                                   const GroundingMask& target_mask) {
  return mask_diff(source_mask, target_mask);
}

// Masked re-generation confined to `region`: builds a fresh nested mask
// schedule over the region, then replays it in reverse sampling
// argmax(predicted / temperature + Gumbel) at each masked position.
// This is the stage-2 loop with an empty residual stack (lambda = 0).
inline TokenGrid regenerate_region(const TokenGrid& grid, const GroundingMask& region,
                                   int steps, const Conditioning& cond, double temperature,
                                   const Denoiser& model, const Rng& rng) {
  detail::require(grid.height() == region.height() && grid.width() == region.width(),
                  "regenerate_region: grid and region shapes differ");
  detail::require(steps >= 1, "regenerate_region: steps must be at least 1, got " +
                                  std::to_string(steps));
  detail::require(temperature > 0.0, "regenerate_region: temperature must be positive");
  if (region.popcount() == 0) return grid;

  const ScheduleParams schedule{steps, 0.0};
  const auto masks = detail::build_schedule_masks(grid, region, schedule, cond, model,
                                                  rng.substream(stream::mask_build));
  const int vocab = grid.vocab_size();
  std::vector<Token> state(grid.tokens().begin(), grid.tokens().end());
  std::vector<double> sampled(vocab);
  for (int t = steps; t >= 1; --t) {
    const GroundingMask& m = masks[t - 1];
    if (m.popcount() == 0) continue;
    const TokenGrid masked = apply_mask(grid.with_tokens(state), m);
    const LogitField predicted = model.predict_logits(masked, cond, t, steps);
    const Rng step_rng =
        rng.substream(stream::edit_noise).substream(static_cast<std::uint64_t>(t));
    for (int p = 0; p < grid.size(); ++p) {
      if (!m.test(p)) continue;
      const Rng pos_rng = step_rng.substream(static_cast<std::uint64_t>(p));
      const auto row = predicted.row(p);
      for (int v = 0; v < vocab; ++v)
        sampled[v] = row[v] / temperature +
                     gumbel_from_uniform(pos_rng.uniform_at(static_cast<std::uint64_t>(v)));
      state[p] = static_cast<Token>(argmax_lowest(sampled));
    }
  }
  return grid.with_tokens(std::move(state));
}

// Re-generates the low-confidence part of the target-subject mask. Returns
// the input unchanged when every target position is confident.
inline TokenGrid intrinsic_refine(const TokenGrid& edited, const ConfidenceMap& confidence,
                                  const GroundingMask& target_mask,
                                  const RefinementParams& params, const Conditioning& cond_tgt,
                                  const Denoiser& model, const Rng& rng) {
  params.validate();
  detail::require(edited.height() == confidence.height() &&
                      edited.width() == confidence.width(),
                  "intrinsic_refine: grid and confidence shapes differ");
  detail::require(edited.height() == target_mask.height() &&
                      edited.width() == target_mask.width(),
                  "intrinsic_refine: grid and target mask shapes differ");
  const GroundingMask unstable =
      mask_and(threshold_mask(confidence, params.conf_threshold), target_mask);
  if (unstable.popcount() == 0) return edited;
  return regenerate_region(edited, unstable, params.refine_steps, cond_tgt, 1.0, model,
                           rng.substream(stream::refine));
}

// In-paints the leftover source region under a background conditioning.
// An empty region is the identity.
inline TokenGrid recover_residual(const TokenGrid& edited, const GroundingMask& residual_region,
                                  const Conditioning& cond_bg, int refine_steps,
                                  const Denoiser& model, const Rng& rng) {
  detail::require(edited.height() == residual_region.height() &&
                      edited.width() == residual_region.width(),
                  "recover_residual: grid and region shapes differ");
  detail::require(refine_steps >= 1,
                  "recover_residual: refine_steps must be at least 1, got " +
                      std::to_string(refine_steps));
  if (residual_region.popcount() == 0) return edited;
  return regenerate_region(edited, residual_region, refine_steps, cond_bg, 1.0, model,
                           rng.substream(stream::recover));
}

}  // namespace dik
