#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dik/denoiser.hpp"

using namespace dik;
using Catch::Approx;

namespace {

TokenGrid random_grid(int h, int w, int vocab, const Rng& rng) {
  std::vector<Token> tokens(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < tokens.size(); ++i)
    tokens[i] = static_cast<Token>(rng.uniform_at(i) * vocab);
  return TokenGrid(h, w, vocab, vocab, std::move(tokens));
}

}  // namespace

TEST_CASE("denoisers are deterministic functions of their inputs") {
  const TokenGrid grid = random_grid(8, 8, 16, Rng(4));
  const Conditioning cond{{2, 5}, Role::source};

  const LocalHashDenoiser local(16);
  REQUIRE(local.predict_logits(grid, cond, 3, 8) == local.predict_logits(grid, cond, 3, 8));

  const EmpiricalDenoiser emp =
      EmpiricalDenoiser::fit({random_grid(8, 8, 16, Rng(5))});
  REQUIRE(emp.predict_logits(grid, cond, 3, 8) == emp.predict_logits(grid, cond, 3, 8));
  // the empirical model conditions only on local context
  REQUIRE(emp.predict_logits(grid, cond, 3, 8) ==
          emp.predict_logits(grid, Conditioning::neutral(), 3, 8));
}

TEST_CASE("local-hash predictions depend only on the neighborhood") {
  const TokenGrid grid = random_grid(8, 8, 16, Rng(6));
  const Conditioning cond{{1}, Role::source};
  const LocalHashDenoiser model(16, 1);

  std::vector<Token> tokens(grid.tokens().begin(), grid.tokens().end());
  tokens[0] = (tokens[0] + 1) % 16;
  const TokenGrid perturbed = grid.with_tokens(std::move(tokens));

  const LogitField before = model.predict_logits(grid, cond, 2, 4);
  const LogitField after = model.predict_logits(perturbed, cond, 2, 4);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const bool near = std::max(y, x) <= 1;  // Chebyshev distance from (0,0)
      const auto a = before.row(y * 8 + x);
      const auto b = after.row(y * 8 + x);
      const bool equal = std::equal(a.begin(), a.end(), b.begin());
      if (!near) REQUIRE(equal);
    }
}

TEST_CASE("local-hash logits stay within their designed range") {
  const TokenGrid grid = random_grid(6, 6, 8, Rng(8));
  const LocalHashDenoiser model(8);
  const LogitField field = model.predict_logits(grid, Conditioning::neutral(), 1, 4);
  for (int p = 0; p < 36; ++p)
    for (double v : field.row(p)) {
      REQUIRE(v >= -4.0);
      REQUIRE(v <= 10.0);  // base range plus the concept bonus
    }
}

TEST_CASE("local-hash boosts the first concept token near concept cells") {
  // token-0 field with a single token-5 column at x = 2; only cells within
  // Chebyshev distance 1 of that column have a neighborhood touching {5}
  std::vector<Token> tokens(8 * 8, 0);
  for (int y = 0; y < 8; ++y) tokens[y * 8 + 2] = 5;
  const TokenGrid grid(8, 8, 8, 8, tokens);
  const LocalHashDenoiser model(8);
  const Conditioning cond{{5}, Role::source};
  const LogitField field = model.predict_logits(grid, cond, 1, 2);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const double five = field.at(y, x, 5);
      if (std::abs(x - 2) <= 1) {
        // base range [-4,4) plus the +6 concept bonus
        REQUIRE(five >= 2.0);
        REQUIRE(five < 10.0);
      } else {
        REQUIRE(five < 4.0);  // no bonus: plain base range
      }
      // the bonus never touches other vocabulary entries
      for (int v = 0; v < 8; ++v)
        if (v != 5) REQUIRE(field.at(y, x, v) < 4.0);
    }
}

TEST_CASE("empirical denoiser learns a forced context rule") {
  // corpus: 3x3 grids whose border is token 1 and center is token 3, so the
  // all-ones context class always precedes token 3
  std::vector<TokenGrid> corpus;
  for (int i = 0; i < 100; ++i)
    corpus.push_back(TokenGrid(3, 3, 4, 4, {1, 1, 1, 1, 3, 1, 1, 1, 1}));
  const EmpiricalDenoiser model = EmpiricalDenoiser::fit(corpus);

  const TokenGrid probe(3, 3, 4, 4, {1, 1, 1, 1, 0, 1, 1, 1, 1});
  const LogitField field = model.predict_logits(probe, Conditioning::neutral(), 1, 2);
  REQUIRE(argmax_lowest(field.row(4)) == 3);  // center context is all ones
}

TEST_CASE("empirical denoiser falls back to uniform on unseen contexts") {
  const EmpiricalDenoiser model =
      EmpiricalDenoiser::fit({TokenGrid::filled(3, 3, 4, 0)});
  const TokenGrid probe = TokenGrid::filled(3, 3, 4, 2);  // context never seen
  const LogitField field = model.predict_logits(probe, Conditioning::neutral(), 1, 2);
  const auto row = field.row(4);
  for (double v : row) REQUIRE(v == Approx(row[0]).margin(1e-15));
}

TEST_CASE("empirical fit validates its corpus") {
  REQUIRE_THROWS_AS(EmpiricalDenoiser::fit(std::vector<TokenGrid>{}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(
      EmpiricalDenoiser::fit({TokenGrid::filled(2, 2, 4, 0), TokenGrid::filled(2, 2, 8, 0)}),
      std::invalid_argument);
  REQUIRE_THROWS_AS(EmpiricalDenoiser::fit({TokenGrid::filled(2, 2, 4, 4)}),
                    std::invalid_argument);  // mask tokens are not observations
}

TEST_CASE("denoisers reject mismatched vocab and out-of-range steps") {
  const LocalHashDenoiser model(8);
  const TokenGrid grid = random_grid(4, 4, 16, Rng(9));
  REQUIRE_THROWS_AS(model.predict_logits(grid, Conditioning::neutral(), 1, 4),
                    std::invalid_argument);
  const TokenGrid ok = random_grid(4, 4, 8, Rng(9));
  REQUIRE_THROWS_AS(model.predict_logits(ok, Conditioning::neutral(), 0, 4),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(model.predict_logits(ok, Conditioning::neutral(), 5, 4),
                    std::invalid_argument);
}

TEST_CASE("attention maps are zero without concepts and peak on concept cells") {
  const LocalHashDenoiser model(8);
  TokenGrid grid = TokenGrid::filled(4, 4, 8, 2);
  {
    const AttentionStack maps =
        model.predict_attention(grid, Conditioning::neutral(), 1, 2);
    REQUIRE(maps.map_count() == model.attention_layers() * model.attention_heads());
    for (int l = 0; l < maps.layers(); ++l)
      for (int k = 0; k < maps.heads(); ++k)
        for (int y = 0; y < 4; ++y)
          for (int x = 0; x < 4; ++x) REQUIRE(maps.at(l, k, y, x) == 0.0);
  }

  std::vector<Token> tokens(16, 2);
  tokens[5] = 6;  // single concept cell
  grid = grid.with_tokens(std::move(tokens));
  const Conditioning cond{{6}, Role::source};
  const AttentionStack maps = model.predict_attention(grid, cond, 1, 2);
  // per-map affinity weight is 1 + l/2 + k/4 on concept cells, 0 elsewhere
  REQUIRE(maps.at(1, 1, 1, 1) == Approx(1.75));
  REQUIRE(maps.at(0, 0, 1, 1) == Approx(1.0));
  REQUIRE(maps.at(1, 1, 0, 0) == 0.0);
  const AttentionStack again = model.predict_attention(grid, cond, 1, 2);
  for (int l = 0; l < 2; ++l)
    for (int k = 0; k < 2; ++k)
      for (int p = 0; p < 16; ++p)
        REQUIRE(maps.at(l, k, p / 4, p % 4) == again.at(l, k, p / 4, p % 4));
}

TEST_CASE("softmax rows are normalized") {
  const std::vector<double> logits{1.5, -2.0, 0.25, 3.0};
  const auto probs = softmax_row(logits);
  double sum = 0.0;
  for (double p : probs) sum += p;
  REQUIRE(sum == Approx(1.0).margin(1e-12));
  REQUIRE(probs[3] > probs[0]);
}

TEST_CASE("confidence map evaluates held tokens and mask maxima") {
  SECTION("uniform two-way logits at a held token give one half") {
    const TokenGrid grid(1, 1, 2, 2, {0});
    const LogitField field(1, 1, 2, {0.0, 0.0});
    REQUIRE(confidence_map(field, grid).at(0) == Approx(0.5).margin(1e-12));
  }
  SECTION("dominant held token saturates") {
    const TokenGrid grid(1, 1, 2, 2, {0});
    const LogitField field(1, 1, 2, {10.0, -10.0});
    REQUIRE(confidence_map(field, grid).at(0) ==
            Approx(1.0 / (1.0 + std::exp(-20.0))).margin(1e-6));
  }
  SECTION("masked positions take the max probability") {
    const TokenGrid grid(1, 1, 3, 3, {3});  // mask token
    const LogitField field(1, 1, 3, {1.0, 1.0, 4.0});
    const double e = std::exp(1.0), e4 = std::exp(4.0);
    REQUIRE(confidence_map(field, grid).at(0) ==
            Approx(e4 / (e + e + e4)).margin(1e-12));
    REQUIRE(confidence_map(field, grid).at(0) == Approx(0.9093).margin(2e-4));
  }
}
