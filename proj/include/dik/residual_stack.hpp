#pragma once

// The inversion artifact: per-step masks plus sparse logit residuals, tied
// to the source grid by checksum. Masks must be nested and sized exactly by
// the schedule; residual vectors exist exactly at the masked positions.
// Everything is validated by a linear scan, both after construction and at
// deserialization.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dik/masking.hpp"
#include "dik/types.hpp"

namespace dik {

struct ResidualStep {
  GroundingMask mask;
  // (position index, vocab-length residual), sorted by position.
  std::vector<std::pair<int, std::vector<double>>> residuals;
};

class ResidualStack {
 public:
  ResidualStack(int timesteps, GroundingMask region, std::uint64_t source_checksum,
                std::vector<ResidualStep> steps, int vocab_size)
      : timesteps_(timesteps), region_(std::move(region)),
        source_checksum_(source_checksum), steps_(std::move(steps)), vocab_(vocab_size) {
    validate();
  }

  int timesteps() const { return timesteps_; }
  int vocab_size() const { return vocab_; }
  const GroundingMask& region() const { return region_; }
  std::uint64_t source_checksum() const { return source_checksum_; }
  const ResidualStep& step(int t) const { return steps_[t - 1]; }
  const std::vector<ResidualStep>& steps() const { return steps_; }

  const std::vector<double>* residual_at(int t, int position) const {
    const auto& entries = steps_[t - 1].residuals;
    auto it = std::lower_bound(entries.begin(), entries.end(), position,
                               [](const auto& e, int pos) { return e.first < pos; });
    if (it == entries.end() || it->first != position) return nullptr;
    return &it->second;
  }

  void validate() const {
    detail::require(timesteps_ >= 1, "ResidualStack: timesteps must be at least 1, got " +
                                         std::to_string(timesteps_));
    detail::require(vocab_ > 0, "ResidualStack: vocab_size must be positive");
    detail::require(static_cast<int>(steps_.size()) == timesteps_,
                    "ResidualStack: " + std::to_string(steps_.size()) +
                        " steps stored, expected one per timestep (" +
                        std::to_string(timesteps_) + ")");
    const int region_size = region_.popcount();
    for (int t = 1; t <= timesteps_; ++t) {
      const ResidualStep& step = steps_[t - 1];
      detail::check_same_shape(step.mask, region_, "ResidualStack");
      detail::require(mask_subset(step.mask, region_),
                      "ResidualStack: step " + std::to_string(t) +
                          " mask leaves the work region");
      if (t > 1)
        detail::require(mask_subset(steps_[t - 2].mask, step.mask),
                        "ResidualStack: step " + std::to_string(t - 1) +
                            " mask is not contained in step " + std::to_string(t));
      const int expected = schedule_size(t, timesteps_, region_size);
      detail::require(step.mask.popcount() == expected,
                      "ResidualStack: step " + std::to_string(t) + " masks " +
                          std::to_string(step.mask.popcount()) + " positions, schedule says " +
                          std::to_string(expected));
      detail::require(static_cast<int>(step.residuals.size()) == step.mask.popcount(),
                      "ResidualStack: step " + std::to_string(t) + " stores " +
                          std::to_string(step.residuals.size()) + " residuals for " +
                          std::to_string(step.mask.popcount()) + " masked positions");
      int prev_pos = -1;
      for (const auto& [pos, values] : step.residuals) {
        detail::require(pos > prev_pos,
                        "ResidualStack: step " + std::to_string(t) +
                            " residual positions are not strictly increasing");
        prev_pos = pos;
        detail::require(pos >= 0 && pos < region_.size() && step.mask.test(pos),
                        "ResidualStack: step " + std::to_string(t) + " residual at position " +
                            std::to_string(pos) + " is outside its mask");
        detail::require(static_cast<int>(values.size()) == vocab_,
                        "ResidualStack: step " + std::to_string(t) + " residual at position " +
                            std::to_string(pos) + " has length " +
                            std::to_string(values.size()) + ", expected " +
                            std::to_string(vocab_));
        for (double v : values)
          detail::require(std::isfinite(v),
                          "ResidualStack: step " + std::to_string(t) +
                              " residual at position " + std::to_string(pos) +
                              " contains a non-finite value");
      }
    }
  }

 private:
  int timesteps_;
  GroundingMask region_;
  std::uint64_t source_checksum_;
  std::vector<ResidualStep> steps_;
  int vocab_;
};

}  // namespace dik
