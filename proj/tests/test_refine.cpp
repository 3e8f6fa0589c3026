#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "dik/denoiser.hpp"
#include "dik/refine.hpp"

using namespace dik;

namespace {

TokenGrid random_grid(int h, int w, int vocab, const Rng& rng) {
  std::vector<Token> tokens(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < tokens.size(); ++i)
    tokens[i] = static_cast<Token>(rng.uniform_at(i) * vocab);
  return TokenGrid(h, w, vocab, vocab, std::move(tokens));
}

GroundingMask random_mask(int h, int w, const Rng& rng, double density = 0.5) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = rng.uniform_at(i) < density;
  return GroundingMask(h, w, std::move(bits));
}

}  // namespace

TEST_CASE("thresholding marks exactly the low-confidence positions") {
  const ConfidenceMap conf(2, 2, {0.1, 0.5, 0.49, 0.9});
  const GroundingMask m = threshold_mask(conf, 0.5);
  REQUIRE(m == GroundingMask(2, 2, {1, 0, 1, 0}));  // strict less-than
  REQUIRE(threshold_mask(ConfidenceMap(1, 2, {0.8, 0.9}), 0.5).popcount() == 0);
}

TEST_CASE("residual masks expose the uncovered source area") {
  const GroundingMask src(2, 3, {1, 1, 1, 0, 0, 1});
  REQUIRE(residual_mask(src, src).popcount() == 0);
  REQUIRE(residual_mask(src, GroundingMask::zeros(2, 3)) == src);
  const GroundingMask tgt(2, 3, {0, 1, 0, 1, 0, 1});
  const GroundingMask res = residual_mask(src, tgt);
  for (int p = 0; p < 6; ++p) REQUIRE(res.test(p) == (src.test(p) && !tgt.test(p)));
}

TEST_CASE("refinement params validate") {
  RefinementParams p;
  REQUIRE_NOTHROW(p.validate());
  p.conf_threshold = 0.0;
  REQUIRE_THROWS_AS(p.validate(), std::invalid_argument);
  p.conf_threshold = 1.0;
  REQUIRE_THROWS_AS(p.validate(), std::invalid_argument);
  p.conf_threshold = 0.5;
  p.refine_steps = 0;
  REQUIRE_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("region regeneration is confined and deterministic") {
  const TokenGrid grid = random_grid(8, 8, 16, Rng(70));
  const GroundingMask region = random_mask(8, 8, Rng(71), 0.3);
  const LocalHashDenoiser model(16);
  const Conditioning cond{{2}, Role::target};

  REQUIRE(regenerate_region(grid, GroundingMask::zeros(8, 8), 4, cond, 1.0, model,
                            Rng(5)) == grid);

  const TokenGrid out = regenerate_region(grid, region, 4, cond, 1.0, model, Rng(5));
  for (int p = 0; p < 64; ++p)
    if (!region.test(p)) REQUIRE(out.at(p) == grid.at(p));
  REQUIRE(regenerate_region(grid, region, 4, cond, 1.0, model, Rng(5)) == out);

  REQUIRE_THROWS_AS(regenerate_region(grid, region, 0, cond, 1.0, model, Rng(5)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(regenerate_region(grid, region, 4, cond, 0.0, model, Rng(5)),
                    std::invalid_argument);
}

TEST_CASE("confident grids pass through refinement untouched") {
  const TokenGrid grid = random_grid(6, 6, 8, Rng(80));
  const ConfidenceMap conf(6, 6, std::vector<double>(36, 0.95));
  const LocalHashDenoiser model(8);
  const TokenGrid out =
      intrinsic_refine(grid, conf, GroundingMask::ones(6, 6), RefinementParams{},
                       Conditioning{{1}, Role::target}, model, Rng(3));
  REQUIRE(out == grid);
}

TEST_CASE("refinement never crosses the target boundary") {
  const TokenGrid grid = random_grid(8, 8, 16, Rng(90));
  // everything is low-confidence, but only the target region may change
  const ConfidenceMap conf(8, 8, std::vector<double>(64, 0.01));
  const GroundingMask target = random_mask(8, 8, Rng(91), 0.4);
  const LocalHashDenoiser model(16);
  const TokenGrid out = intrinsic_refine(grid, conf, target, RefinementParams{},
                                         Conditioning{{3}, Role::target}, model, Rng(4));
  for (int p = 0; p < 64; ++p)
    if (!target.test(p)) REQUIRE(out.at(p) == grid.at(p));
}

TEST_CASE("mixed confidence refines only the unstable intersection") {
  const TokenGrid grid = random_grid(8, 8, 16, Rng(100));
  std::vector<double> conf_values(64);
  for (int p = 0; p < 64; ++p) conf_values[p] = (p % 3 == 0) ? 0.1 : 0.9;
  const ConfidenceMap conf(8, 8, conf_values);
  const GroundingMask target = random_mask(8, 8, Rng(101), 0.5);
  const GroundingMask unstable = mask_and(threshold_mask(conf, 0.5), target);
  const LocalHashDenoiser model(16);
  const TokenGrid out = intrinsic_refine(grid, conf, target, RefinementParams{},
                                         Conditioning{{5}, Role::target}, model, Rng(6));
  for (int p = 0; p < 64; ++p)
    if (!unstable.test(p)) REQUIRE(out.at(p) == grid.at(p));
}

TEST_CASE("residual recovery regenerates only the leftover region") {
  const TokenGrid grid = random_grid(8, 8, 16, Rng(110));
  const LocalHashDenoiser model(16);

  REQUIRE(recover_residual(grid, GroundingMask::zeros(8, 8), Conditioning::neutral(), 4,
                           model, Rng(7)) == grid);

  const GroundingMask src = random_mask(8, 8, Rng(111), 0.5);
  const GroundingMask leftover = residual_mask(src, GroundingMask::zeros(8, 8));
  REQUIRE(leftover == src);  // a removal with an empty target exposes all of it
  const TokenGrid out =
      recover_residual(grid, leftover, Conditioning::neutral(), 4, model, Rng(7));
  for (int p = 0; p < 64; ++p)
    if (!leftover.test(p)) REQUIRE(out.at(p) == grid.at(p));
  REQUIRE(recover_residual(grid, leftover, Conditioning::neutral(), 4, model, Rng(7)) ==
          out);
}
