#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "dik/rng.hpp"

using namespace dik;
using Catch::Approx;

TEST_CASE("uniform draws are deterministic per (seed, stream)") {
  const Rng rng(42, 7);
  const auto a = uniform(rng, 100);
  const auto b = uniform(rng, 100);
  REQUIRE(a == b);  // bit-identical on re-invocation

  const auto other_stream = uniform(Rng(42, 8), 100);
  REQUIRE(a != other_stream);
  const auto other_seed = uniform(Rng(43, 7), 100);
  REQUIRE(a != other_seed);
}

TEST_CASE("uniform with count zero yields an empty array") {
  REQUIRE(uniform(Rng(0), 0).empty());
}

TEST_CASE("uniform draws lie strictly inside (0,1)") {
  const Rng rng(123, 5);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform_at(i);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("uniform sample mean matches 1/2 at seed 42") {
  const auto draws = uniform(Rng(42), 100000);
  double sum = 0.0;
  for (double u : draws) sum += u;
  REQUIRE(sum / draws.size() == Approx(0.5).margin(0.01));
}

TEST_CASE("substream derivation is deterministic and key-sensitive") {
  const Rng rng(9, 3);
  REQUIRE(rng.substream(5).uniform_at(0) == rng.substream(5).uniform_at(0));
  REQUIRE(rng.substream(5).uniform_at(0) != rng.substream(6).uniform_at(0));
  // nested keys reach distinct streams
  REQUIRE(rng.substream(1).substream(2).uniform_at(0) !=
          rng.substream(2).substream(1).uniform_at(0));
}

TEST_CASE("gumbel transform hits closed-form points") {
  // -log(-log(e^-1)) = -log(1) = 0
  REQUIRE(gumbel_from_uniform(std::exp(-1.0), 0.0) == Approx(0.0).margin(1e-12));
  // -log(-log(e^-e)) = -log(e) = -1
  REQUIRE(gumbel_from_uniform(std::exp(-std::exp(1.0)), 0.0) ==
          Approx(-1.0).margin(1e-12));
}

TEST_CASE("gumbel sample mean approaches the Euler-Mascheroni constant") {
  const Rng rng(2024, 1);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += gumbel_from_uniform(rng.uniform_at(i));
  REQUIRE(sum / n == Approx(0.5772).margin(0.01));
}

TEST_CASE("gumbel_max_sample validates its inputs") {
  const std::vector<double> logits{0.0, 1.0};
  const std::vector<double> noise{0.0, 0.0};
  REQUIRE_THROWS_AS(gumbel_max_sample(logits, 0.0, noise), std::invalid_argument);
  REQUIRE_THROWS_AS(gumbel_max_sample(logits, -1.0, noise), std::invalid_argument);
  REQUIRE_THROWS_AS(gumbel_max_sample(std::vector<double>{}, 1.0, std::vector<double>{}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(gumbel_max_sample(logits, 1.0, std::vector<double>{0.0}),
                    std::invalid_argument);
}

TEST_CASE("gumbel_max_sample picks the dominant logit at near-zero temperature") {
  const std::vector<double> logits{10.0, 0.0, 0.0};
  const Rng rng(7, 2);
  for (int i = 0; i < 100; ++i) {
    const auto noise = gumbel_noise(rng.substream(i), 3);
    REQUIRE(gumbel_max_sample(logits, 0.01, noise) == 0);
  }
}

TEST_CASE("gumbel_max_sample breaks exact ties toward the lowest index") {
  // equal fused scores: zero logits with identical noise entries
  const std::vector<double> logits{0.0, 0.0, 0.0};
  const std::vector<double> noise{0.5, 0.5, 0.5};
  REQUIRE(gumbel_max_sample(logits, 1.0, noise) == 0);
}

TEST_CASE("gumbel_max_sample frequencies follow the softmax") {
  const Rng rng(99, 4);
  const int n = 100000;

  SECTION("uniform logits give uniform thirds") {
    const std::vector<double> logits{0.0, 0.0, 0.0};
    std::array<int, 3> hits{0, 0, 0};
    for (int i = 0; i < n; ++i)
      ++hits[gumbel_max_sample(logits, 1.0, gumbel_noise(rng.substream(i), 3))];
    for (int c : hits)
      REQUIRE(static_cast<double>(c) / n == Approx(1.0 / 3.0).margin(0.01));
  }

  SECTION("logits [log 2, 0] give 2/3 vs 1/3") {
    const std::vector<double> logits{std::log(2.0), 0.0};
    int zero_hits = 0;
    for (int i = 0; i < n; ++i)
      if (gumbel_max_sample(logits, 1.0, gumbel_noise(rng.substream(i), 2)) == 0)
        ++zero_hits;
    REQUIRE(static_cast<double>(zero_hits) / n == Approx(2.0 / 3.0).margin(0.01));
  }
}

TEST_CASE("gumbel_max_sample is invariant to a constant logit shift") {
  const std::vector<double> logits{0.3, -1.2, 2.0, 0.9};
  std::vector<double> shifted(logits);
  for (double& v : shifted) v += 17.5;
  const Rng rng(11, 6);
  for (int i = 0; i < 200; ++i) {
    const auto noise = gumbel_noise(rng.substream(i), 4);
    REQUIRE(gumbel_max_sample(logits, 1.0, noise) ==
            gumbel_max_sample(shifted, 1.0, noise));
  }
}

TEST_CASE("truncated gumbel matches the closed form") {
  // location 0, bound 0, u = e^-1: -log(exp(0) - log(e^-1)) = -log 2
  REQUIRE(gumbel_trunc_sample(0.0, 0.0, std::exp(-1.0)) ==
          Approx(-std::log(2.0)).margin(1e-12));
  REQUIRE(gumbel_trunc_sample(0.0, 0.0, std::exp(-1.0)) ==
          Approx(-0.693147).margin(1e-5));
  // location 2, bound 5, u = 1/2: 2 - log(e^-3 - log(1/2))
  const double expected = 2.0 - std::log(std::exp(-3.0) - std::log(0.5));
  REQUIRE(gumbel_trunc_sample(2.0, 5.0, 0.5) == Approx(expected).margin(1e-12));
  REQUIRE(gumbel_trunc_sample(2.0, 5.0, 0.5) == Approx(2.29714).margin(1e-4));
  REQUIRE(gumbel_trunc_sample(2.0, 5.0, 0.5) <= 5.0);
}

TEST_CASE("truncated gumbel always lands strictly below the bound") {
  const Rng rng(31, 9);
  int idx = 0;
  for (int i = 0; i < 10000; ++i) {
    const double location = -5.0 + 10.0 * rng.uniform_at(idx++);
    const double bound = location - 3.0 + 6.0 * rng.uniform_at(idx++);
    const double u = rng.uniform_at(idx++);
    REQUIRE(gumbel_trunc_sample(location, bound, u) < bound);
  }
}

TEST_CASE("truncated gumbel rejects u outside (0,1)") {
  REQUIRE_THROWS_AS(gumbel_trunc_sample(0.0, 1.0, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(gumbel_trunc_sample(0.0, 1.0, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(gumbel_trunc_sample(0.0, 1.0, -0.5), std::invalid_argument);
}
