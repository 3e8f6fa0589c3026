#pragma once

// Compositional edit cases and the end-to-end harness. A case is a small
// synthetic grid with two disjoint object blobs and one sub-instruction per
// blob; running a case grounds each sub-instruction on the source grid,
// then walks ground -> invert -> edit -> refine -> recover per
// sub-instruction and scores the output against the source over the
// non-edited complement.

#include <array>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dik/grounding.hpp"
#include "dik/inversion.hpp"
#include "dik/metrics.hpp"
#include "dik/refine.hpp"
#include "dik/types.hpp"

namespace dik {

struct SubInstruction {
  EditOp op = EditOp::replace;
  SpatialPrompt prompt;
  Token source_concept = 0;
  Token target_concept = 0;
};

struct EditCase {
  std::string id;
  PromptKind modality = PromptKind::point;
  TokenGrid source;
  std::vector<SubInstruction> subs;

  // Grounds every sub-instruction on the source grid and checks the case
  // contract: exactly two sub-instructions with pairwise-disjoint,
  // non-empty regions.
  std::vector<GroundingMask> grounded_regions() const {
    detail::require(subs.size() == 2, "EditCase " + id + ": expected exactly 2 sub-instructions, got " +
                                          std::to_string(subs.size()));
    std::vector<GroundingMask> regions;
    regions.reserve(subs.size());
    for (std::size_t i = 0; i < subs.size(); ++i) {
      regions.push_back(ground(source, subs[i].prompt));
      detail::require(regions.back().popcount() > 0,
                      "EditCase " + id + ": sub-instruction " + std::to_string(i) +
                          " grounds an empty region");
    }
    for (std::size_t i = 0; i < regions.size(); ++i)
      for (std::size_t j = i + 1; j < regions.size(); ++j)
        detail::require(mask_and(regions[i], regions[j]).popcount() == 0,
                        "EditCase " + id + ": grounding regions of sub-instructions " +
                            std::to_string(i) + " and " + std::to_string(j) + " overlap");
    return regions;
  }
};

struct CaseGenOptions {
  int height = 24;
  int width = 24;
  int vocab_size = 32;
  int max_attempts = 64;
};

namespace detail {

inline int chebyshev_gap(const Box& a, const Box& b) {
  const int dy = std::max({a.y0 - b.y1, b.y0 - a.y1, 0});
  const int dx = std::max({a.x0 - b.x1, b.x0 - a.x1, 0});
  return std::max(dy, dx);
}

inline std::string case_name(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case%04llu", static_cast<unsigned long long>(seed));
  return buf;
}

}  // namespace detail

// Deterministically synthesizes a two-instruction case: a background grid
// with two rectangular object blobs (Chebyshev gap >= 3), one operation per
// blob, prompts in the case's modality (round-robin over the seed), and
// fresh target concepts. Retries placement a bounded number of times, so
// undersized grids fail loudly.
inline EditCase generate_case(std::uint64_t seed, const CaseGenOptions& opt = {}) {
  detail::require(opt.vocab_size >= 5,
                  "generate_case: vocab_size must be at least 5 to hold distinct concepts");
  detail::require(opt.height >= 5 && opt.width >= 5,
                  "generate_case: grid must be at least 5x5, got " +
                      std::to_string(opt.height) + "x" + std::to_string(opt.width));
  const Rng rng = Rng(seed).substream(stream::case_gen);
  std::uint64_t draw_index = 0;
  auto draw_below = [&](int n) {
    return static_cast<int>(rng.word_at(draw_index++) % static_cast<std::uint64_t>(n));
  };

  // Five distinct token roles: background, two sources, two targets.
  std::array<Token, 5> roles{};
  std::vector<char> used(opt.vocab_size, 0);
  for (auto& r : roles) {
    do {
      r = static_cast<Token>(draw_below(opt.vocab_size));
    } while (used[r]);
    used[r] = 1;
  }
  const Token background = roles[0];

  // Place the two blobs with a Chebyshev gap of at least 3.
  std::array<Box, 2> boxes{};
  bool placed = false;
  for (int attempt = 0; attempt < opt.max_attempts && !placed; ++attempt) {
    for (int i = 0; i < 2; ++i) {
      const int max_h = std::min(8, opt.height);
      const int max_w = std::min(8, opt.width);
      const int h = 5 + (max_h > 5 ? draw_below(max_h - 4) : 0);
      const int w = 5 + (max_w > 5 ? draw_below(max_w - 4) : 0);
      const int y = draw_below(opt.height - h + 1);
      const int x = draw_below(opt.width - w + 1);
      boxes[i] = Box{y, x, y + h - 1, x + w - 1};
    }
    placed = detail::chebyshev_gap(boxes[0], boxes[1]) >= 3;
  }
  detail::require(placed, "generate_case: could not place two disjoint regions with gap >= 3 on a " +
                              std::to_string(opt.height) + "x" + std::to_string(opt.width) +
                              " grid after " + std::to_string(opt.max_attempts) + " attempts");

  std::vector<Token> tokens(static_cast<std::size_t>(opt.height) * opt.width, background);
  for (int i = 0; i < 2; ++i)
    for (int y = boxes[i].y0; y <= boxes[i].y1; ++y)
      for (int x = boxes[i].x0; x <= boxes[i].x1; ++x)
        tokens[static_cast<std::size_t>(y) * opt.width + x] = roles[1 + i];

  EditCase out{detail::case_name(seed),
               static_cast<PromptKind>(seed % 3),
               TokenGrid(opt.height, opt.width, opt.vocab_size, opt.vocab_size,
                         std::move(tokens)),
               {}};

  static constexpr EditOp kOps[] = {EditOp::add, EditOp::remove, EditOp::replace};
  for (int i = 0; i < 2; ++i) {
    SubInstruction sub;
    sub.op = kOps[draw_below(3)];
    sub.source_concept = roles[1 + i];
    sub.target_concept = roles[3 + i];
    std::vector<std::uint8_t> bits(out.source.size(), 0);
    for (int y = boxes[i].y0; y <= boxes[i].y1; ++y)
      for (int x = boxes[i].x0; x <= boxes[i].x1; ++x)
        bits[out.source.index(y, x)] = 1;
    const GroundingMask blob(opt.height, opt.width, std::move(bits));
    switch (out.modality) {
      case PromptKind::point:
        sub.prompt = SpatialPrompt::at_point(sample_diverse_points(blob, 4).front());
        break;
      case PromptKind::box:
        sub.prompt = SpatialPrompt::in_box(bounding_box(blob));
        break;
      case PromptKind::text:
        sub.prompt = SpatialPrompt::of_concepts({sub.source_concept});
        break;
    }
    out.subs.push_back(std::move(sub));
  }
  out.grounded_regions();  // construction sanity
  return out;
}

struct PipelineConfig {
  std::shared_ptr<const Denoiser> denoiser;
  ScheduleParams schedule;
  FusionParams fusion;
  RefinementParams refinement;
  bool order_check = false;
  std::uint64_t seed = 0;
};

struct SubOutcome {
  EditOp op = EditOp::replace;
  GroundingMask work;    // effective source region (relaxed when configured)
  GroundingMask target;  // grounded new subject, confined to the work region
  GroundingMask edited;  // per-operation edited region
};

struct CaseOutcome {
  TokenGrid final_grid;
  std::vector<SubOutcome> subs;  // in declared order
};

// Executes the case's sub-instructions sequentially (optionally in swapped
// order). Regions are grounded on the source grid; randomness is keyed by
// (config seed, case id, declared sub index), so the execution order leaves
// every pipeline input unchanged.
inline CaseOutcome execute_case(const EditCase& edit_case, const PipelineConfig& config,
                                bool swapped = false) {
  detail::require(config.denoiser != nullptr, "execute_case: no denoiser configured");
  const auto regions = edit_case.grounded_regions();
  const Denoiser& model = *config.denoiser;

  TokenGrid grid = edit_case.source;
  std::vector<std::optional<SubOutcome>> outcomes(edit_case.subs.size());
  std::vector<std::size_t> order(edit_case.subs.size());
  std::iota(order.begin(), order.end(), 0);
  if (swapped) std::reverse(order.begin(), order.end());

  for (std::size_t idx : order) {
    const SubInstruction& sub = edit_case.subs[idx];
    const Rng sub_rng = Rng(config.seed)
                            .substream(stream::bench)
                            .substream(string_digest(edit_case.id))
                            .substream(idx);
    const GroundingMask work = config.refinement.relax_mode == RelaxMode::bounding_box
                                   ? relax_mask(regions[idx])
                                   : regions[idx];
    const Conditioning cond_src{{sub.source_concept}, Role::source};
    const Conditioning cond_tgt = sub.op == EditOp::remove
                                      ? Conditioning::neutral(Role::target)
                                      : Conditioning{{sub.target_concept}, Role::target};

    const ResidualStack stack = invert(grid, work, config.schedule, cond_src, model,
                                       config.fusion, sub_rng.substream(1));
    TokenGrid edited =
        edit(grid, stack, cond_tgt, config.fusion, model, sub_rng.substream(2));

    // The new subject can only exist where generation happened, so target
    // grounding is confined to the work region.
    const GroundingMask target =
        sub.op == EditOp::remove
            ? GroundingMask::zeros(grid.height(), grid.width())
            : mask_and(ground(edited, SpatialPrompt::of_concepts({sub.target_concept})),
                       work);

    const ConfidenceMap confidence = confidence_map(
        model.predict_logits(edited, cond_tgt, 1, config.schedule.timesteps), edited);
    edited = intrinsic_refine(edited, confidence, target, config.refinement, cond_tgt,
                              model, sub_rng.substream(3));

    const GroundingMask leftover = residual_mask(work, target);
    if (sub.op == EditOp::add) {
      // Adding blends the uncovered work region back into the original.
      std::vector<Token> tokens(edited.tokens().begin(), edited.tokens().end());
      for (int p = 0; p < grid.size(); ++p)
        if (leftover.test(p)) tokens[p] = grid.at(p);
      edited = edited.with_tokens(std::move(tokens));
    } else {
      edited = recover_residual(edited, leftover, Conditioning::neutral(),
                                config.refinement.refine_steps, model,
                                sub_rng.substream(4));
    }

    outcomes[idx] = SubOutcome{sub.op, work, target, edited_region(sub.op, work, target)};
    grid = std::move(edited);
  }

  CaseOutcome out{std::move(grid), {}};
  for (auto& o : outcomes) out.subs.push_back(std::move(*o));
  return out;
}

struct CaseResult {
  std::string case_id;
  PromptKind modality = PromptKind::point;
  RegionMetrics non_edit;
  int edited_popcount = 0;
  std::vector<SubOutcome> subs;
  std::optional<bool> order_invariant;
  TokenGrid final_grid;
};

// Runs a case and scores the non-edited complement of the output against
// the source. With order_check enabled the case is re-executed with the
// sub-instructions swapped and the outputs compared bit-for-bit (recorded,
// not enforced).
inline CaseResult run_case(const EditCase& edit_case, const PipelineConfig& config) {
  CaseOutcome outcome = execute_case(edit_case, config, false);

  GroundingMask edited_union =
      GroundingMask::zeros(edit_case.source.height(), edit_case.source.width());
  for (const SubOutcome& sub : outcome.subs)
    edited_union = mask_or(edited_union, sub.edited);
  const GroundingMask non_edit = mask_complement(edited_union);
  detail::require(non_edit.popcount() > 0,
                  "run_case " + edit_case.id + ": the edits cover the whole grid");

  CaseResult result{edit_case.id,
                    edit_case.modality,
                    region_metrics(to_intensity(edit_case.source),
                                   to_intensity(outcome.final_grid), non_edit),
                    edited_union.popcount(),
                    std::move(outcome.subs),
                    std::nullopt,
                    std::move(outcome.final_grid)};

  if (config.order_check) {
    const CaseOutcome swapped = execute_case(edit_case, config, true);
    result.order_invariant = swapped.final_grid == result.final_grid;
  }

  // Report-level sanity: these hold by construction for every pipeline run.
  detail::require(result.non_edit.mse >= 0.0, "run_case: negative MSE");
  detail::require(result.non_edit.psnr > 0.0 && result.non_edit.psnr <= kPsnrCap,
                  "run_case: PSNR outside (0," + std::to_string(kPsnrCap) + "]");
  detail::require(result.non_edit.ssim >= 0.0 && result.non_edit.ssim <= 1.0,
                  "run_case: SSIM outside [0,1]");
  return result;
}

struct BenchAggregate {
  int cases = 0;
  double mean_mse = 0.0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::optional<double> order_invariant_fraction;
};

struct BenchReport {
  std::vector<CaseResult> results;  // sorted by case id
  BenchAggregate aggregate;
};

inline BenchReport run_bench(const std::vector<EditCase>& cases, const PipelineConfig& config,
                             std::FILE* progress = nullptr) {
  BenchReport report;
  report.results.reserve(cases.size());
  for (const EditCase& edit_case : cases) {
    report.results.push_back(run_case(edit_case, config));
    if (progress) {
      const CaseResult& r = report.results.back();
      std::fprintf(progress, "%s: mse=%.6g psnr=%.6g ssim=%.6g%s\n", r.case_id.c_str(),
                   r.non_edit.mse, r.non_edit.psnr, r.non_edit.ssim,
                   r.order_invariant ? (*r.order_invariant ? " order-invariant"
                                                           : " ORDER-SENSITIVE")
                                     : "");
      std::fflush(progress);
    }
  }
  std::sort(report.results.begin(), report.results.end(),
            [](const CaseResult& a, const CaseResult& b) { return a.case_id < b.case_id; });

  BenchAggregate& agg = report.aggregate;
  agg.cases = static_cast<int>(report.results.size());
  if (agg.cases > 0) {
    int invariant = 0, checked = 0;
    for (const CaseResult& r : report.results) {
      agg.mean_mse += r.non_edit.mse;
      agg.mean_psnr += r.non_edit.psnr;
      agg.mean_ssim += r.non_edit.ssim;
      if (r.order_invariant) {
        ++checked;
        invariant += *r.order_invariant;
      }
    }
    agg.mean_mse /= agg.cases;
    agg.mean_psnr /= agg.cases;
    agg.mean_ssim /= agg.cases;
    if (checked > 0)
      agg.order_invariant_fraction = static_cast<double>(invariant) / checked;
  }
  return report;
}

}  // namespace dik
