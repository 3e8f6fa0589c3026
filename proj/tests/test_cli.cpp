#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "dik/io.hpp"

using namespace dik;

namespace {

// one shared scratch directory per test run
const std::string& work_dir() {
  static const std::string dir = [] {
    char tmpl[] = "/tmp/dik_cli_XXXXXX";
    const char* made = mkdtemp(tmpl);
    REQUIRE(made != nullptr);
    return std::string(made);
  }();
  return dir;
}

std::string path_of(const std::string& name) { return work_dir() + "/" + name; }

int run_cli(const std::string& args, const std::string& dik_seed = "") {
  std::string cmd = std::string(DIK_CLI_PATH) + " " + args;
  if (!dik_seed.empty()) cmd = "DIK_SEED=" + dik_seed + " " + cmd;
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

TokenGrid fixture_grid() {
  std::vector<Token> tokens(100, 1);
  for (int y = 3; y < 7; ++y)
    for (int x = 2; x < 6; ++x) tokens[y * 10 + x] = 5;
  return TokenGrid(10, 10, 8, 8, std::move(tokens));
}

}  // namespace

TEST_CASE("cli grounds prompts and honors exit-code contracts") {
  write_json_file(path_of("grid.json"), to_json(fixture_grid()));

  SECTION("text prompt grounds the known blob") {
    write_json_file(path_of("text.json"), to_json(SpatialPrompt::of_concepts({5})));
    REQUIRE(run_cli("ground " + path_of("grid.json") + " " + path_of("text.json") +
                    " -o " + path_of("blob.json") + " 2>/dev/null") == 0);
    const GroundingMask mask = mask_from_json(read_json_file(path_of("blob.json")));
    REQUIRE(mask.popcount() == 16);
    const TokenGrid grid = fixture_grid();
    for (int p = 0; p < 100; ++p) REQUIRE(mask.test(p) == (grid.at(p) == 5));
  }

  SECTION("point prompt with relaxation emits the bounding box") {
    write_json_file(path_of("pt.json"), to_json(SpatialPrompt::at_point(Point{4, 3})));
    REQUIRE(run_cli("ground --relax " + path_of("grid.json") + " " + path_of("pt.json") +
                    " -o " + path_of("ptmask.json") + " 2>/dev/null") == 0);
    const GroundingMask mask = mask_from_json(read_json_file(path_of("ptmask.json")));
    REQUIRE(mask.popcount() == 16);  // blob is already a box
  }

  SECTION("out-of-bounds point exits 2 and names the coordinate") {
    write_json_file(path_of("oob.json"), to_json(SpatialPrompt::at_point(Point{90, 0})));
    REQUIRE(run_cli("ground " + path_of("grid.json") + " " + path_of("oob.json") +
                    " 2> " + path_of("err.txt")) == 2);
    REQUIRE(slurp(path_of("err.txt")).find("(90,0)") != std::string::npos);
  }

  SECTION("missing input file exits 2") {
    REQUIRE(run_cli("ground " + path_of("nope.json") + " " + path_of("nope.json") +
                    " 2>/dev/null") == 2);
  }

  SECTION("unknown subcommand exits 2") {
    REQUIRE(run_cli("frobnicate 2>/dev/null") == 2);
  }
}

TEST_CASE("cli inversion round-trips and rejects foreign stacks") {
  write_json_file(path_of("src.json"), to_json(fixture_grid()));
  write_json_file(path_of("work.json"),
                  to_json(ground(fixture_grid(), SpatialPrompt::of_concepts({5}))));

  REQUIRE(run_cli("invert " + path_of("src.json") + " " + path_of("work.json") +
                  " --timesteps 8 --prompt 5 --seed 4 -o " + path_of("stack.json") +
                  " 2>/dev/null") == 0);

  SECTION("replay at full residual weight restores the source bytes") {
    REQUIRE(run_cli("edit " + path_of("src.json") + " " + path_of("stack.json") +
                    " --lambda 1 --prompt 5 --seed 4 -o " + path_of("recon.json") +
                    " 2>/dev/null") == 0);
    REQUIRE(token_grid_from_json(read_json_file(path_of("recon.json"))) ==
            fixture_grid());
  }

  SECTION("an edited grid keeps the complement of the work region") {
    REQUIRE(run_cli("edit " + path_of("src.json") + " " + path_of("stack.json") +
                    " --lambda 0.2 --prompt 6 --seed 4 -o " + path_of("edited.json") +
                    " 2>/dev/null") == 0);
    const TokenGrid edited = token_grid_from_json(read_json_file(path_of("edited.json")));
    const TokenGrid src = fixture_grid();
    const GroundingMask work = ground(src, SpatialPrompt::of_concepts({5}));
    for (int p = 0; p < 100; ++p)
      if (!work.test(p)) REQUIRE(edited.at(p) == src.at(p));

    // refine the result back toward the target concept inside the region
    write_json_file(path_of("tgt.json"), to_json(work));
    REQUIRE(run_cli("refine " + path_of("edited.json") + " " + path_of("tgt.json") +
                    " --prompt 6 --work " + path_of("work.json") + " --seed 4 -o " +
                    path_of("refined.json") + " 2>/dev/null") == 0);
    const TokenGrid refined =
        token_grid_from_json(read_json_file(path_of("refined.json")));
    for (int p = 0; p < 100; ++p)
      if (!work.test(p)) REQUIRE(refined.at(p) == src.at(p));
  }

  SECTION("a stack recorded for one grid is rejected for another") {
    TokenGrid other = fixture_grid();
    std::vector<Token> tokens(other.tokens().begin(), other.tokens().end());
    tokens[0] = 2;
    write_json_file(path_of("other.json"), to_json(other.with_tokens(std::move(tokens))));
    REQUIRE(run_cli("edit " + path_of("other.json") + " " + path_of("stack.json") +
                    " --lambda 1 --prompt 5 2> " + path_of("err2.txt")) == 2);
    REQUIRE(slurp(path_of("err2.txt")).find("stack does not belong") !=
            std::string::npos);
  }

  SECTION("the DIK_SEED environment variable substitutes for --seed") {
    REQUIRE(run_cli("invert " + path_of("src.json") + " " + path_of("work.json") +
                    " --timesteps 8 --prompt 5 --seed 9 -o " + path_of("a.json") +
                    " 2>/dev/null") == 0);
    REQUIRE(run_cli("invert " + path_of("src.json") + " " + path_of("work.json") +
                    " --timesteps 8 --prompt 5 -o " + path_of("b.json") +
                    " 2>/dev/null", "9") == 0);
    REQUIRE(slurp(path_of("a.json")) == slurp(path_of("b.json")));
    // an explicit flag takes precedence over the environment
    REQUIRE(run_cli("invert " + path_of("src.json") + " " + path_of("work.json") +
                    " --timesteps 8 --prompt 5 --seed 4 -o " + path_of("c.json") +
                    " 2>/dev/null", "9") == 0);
    REQUIRE(slurp(path_of("c.json")) == slurp(path_of("stack.json")));
  }
}

TEST_CASE("cli metrics and bench behave deterministically") {
  write_json_file(path_of("m_ref.json"), to_json(fixture_grid()));
  write_json_file(path_of("m_region.json"), to_json(GroundingMask::ones(10, 10)));

  SECTION("identical grids yield the perfect triple") {
    REQUIRE(run_cli("metrics " + path_of("m_ref.json") + " " + path_of("m_ref.json") +
                    " " + path_of("m_region.json") + " -o " + path_of("m.json") +
                    " 2>/dev/null") == 0);
    const json m = read_json_file(path_of("m.json"));
    REQUIRE(m.at("mse") == 0.0);
    REQUIRE(m.at("psnr") == 100.0);
    REQUIRE(m.at("ssim") == 1.0);
  }

  SECTION("bench runs twice to the same bytes") {
    const json config{{"cases", {{"generate", {{"count", 2}, {"seed", 1}}}}},
                      {"schedule", {{"timesteps", 4}}},
                      {"order_check", true}};
    write_json_file(path_of("bench.json"), config);
    REQUIRE(run_cli("bench " + path_of("bench.json") + " -o " + path_of("r1.json") +
                    " 2>/dev/null") == 0);
    REQUIRE(run_cli("bench " + path_of("bench.json") + " -o " + path_of("r2.json") +
                    " 2>/dev/null") == 0);
    REQUIRE(slurp(path_of("r1.json")) == slurp(path_of("r2.json")));
    const json report = read_json_file(path_of("r1.json"));
    REQUIRE(report.at("aggregate").at("mean_mse") == 0.0);
    REQUIRE(report.at("aggregate").at("order_invariant_fraction") == 1.0);
    REQUIRE(report.at("cases").size() == 2);
  }
}
