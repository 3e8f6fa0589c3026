// dik — token-grid inversion and editing pipeline.
//
// Subcommands: ground, invert, edit, refine, bench, metrics.
// All inputs and outputs are JSON; results go to stdout unless -o is given,
// diagnostics always go to stderr. Every command is deterministic given its
// inputs and --seed (env DIK_SEED applies when the flag is absent).
// Exit codes: 0 success, 2 input/validation error, 1 internal error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dik/dik.hpp"

namespace {

dik::Conditioning make_conditioning(const std::vector<dik::Token>& prompt, dik::Role role) {
  return prompt.empty() ? dik::Conditioning::neutral(role)
                        : dik::Conditioning{prompt, role};
}

std::shared_ptr<const dik::Denoiser> make_denoiser(const std::string& spec_path,
                                                   int grid_vocab) {
  if (spec_path.empty()) return dik::DenoiserSpec::local_hash(grid_vocab).build();
  return dik::denoiser_spec_from_json(dik::read_json_file(spec_path)).build();
}

void emit(const dik::json& j, const std::string& out_path) {
  if (out_path.empty())
    std::cout << j.dump(2) << "\n";
  else
    dik::write_json_file(out_path, j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"token-grid inversion and editing pipeline"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "random seed (env DIK_SEED when flag absent)")
      ->envname("DIK_SEED");

  std::string out_path;
  app.add_option("-o,--output", out_path, "output file (stdout when absent)");

  std::string denoiser_spec;
  app.add_option("--denoiser", denoiser_spec,
                 "denoiser spec JSON file (default: local-hash, radius 1, grid vocab)");

  std::vector<dik::Token> prompt;
  app.add_option("--prompt", prompt, "conditioning tokens, comma-separated")
      ->delimiter(',');

  dik::ScheduleParams schedule;
  dik::FusionParams fusion;
  dik::RefinementParams refinement;

  // Shared flags (--seed, -o, --denoiser, --prompt, …) live on the parent app;
  // subcommands pass unknown flags up to it.
  auto add_subcommand = [&app](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    return sub;
  };

  // ---- ground --------------------------------------------------------------
  auto* cmd_ground = add_subcommand("ground", "resolve a spatial prompt to a mask");
  std::string ground_grid, ground_prompt;
  bool ground_relax = false;
  cmd_ground->add_option("grid", ground_grid, "token grid JSON")->required();
  cmd_ground->add_option("prompt", ground_prompt, "spatial prompt JSON")->required();
  cmd_ground->add_flag("--relax", ground_relax, "expand the mask to its bounding box");

  // ---- invert ----------------------------------------------------------------
  auto* cmd_invert = add_subcommand("invert", "record residuals over a work region");
  std::string invert_grid, invert_mask;
  cmd_invert->add_option("grid", invert_grid, "source token grid JSON")->required();
  cmd_invert->add_option("mask", invert_mask, "work-region mask JSON")->required();
  cmd_invert->add_option("--timesteps", schedule.timesteps, "schedule length T");
  cmd_invert->add_option("--tau-mask", schedule.mask_temperature,
                         "mask-selection temperature");
  cmd_invert->add_option("--lai-margin", fusion.lai_margin,
                         "rectification argmax margin");

  // ---- edit ------------------------------------------------------------------
  auto* cmd_edit = add_subcommand("edit", "replay a residual stack under new conditioning");
  std::string edit_grid, edit_stack;
  cmd_edit->add_option("grid", edit_grid, "source token grid JSON")->required();
  cmd_edit->add_option("stack", edit_stack, "residual stack JSON")->required();
  cmd_edit->add_option("--lambda", fusion.lambda, "residual fusion weight");
  cmd_edit->add_option("--temperature", fusion.temperature, "logit temperature");

  // ---- refine ----------------------------------------------------------------
  auto* cmd_refine = add_subcommand("refine", "re-generate low-confidence target cells");
  std::string refine_grid, refine_target, refine_work;
  bool refine_relax = false;
  cmd_refine->add_option("grid", refine_grid, "edited token grid JSON")->required();
  cmd_refine->add_option("target", refine_target, "target-region mask JSON")->required();
  cmd_refine->add_option("--work", refine_work,
                         "work-region mask JSON; its leftover area is re-inpainted");
  cmd_refine->add_flag("--relax", refine_relax, "expand the work region to its bounding box");
  cmd_refine->add_option("--conf-threshold", refinement.conf_threshold,
                         "re-generate cells below this confidence");
  cmd_refine->add_option("--refine-steps", refinement.refine_steps,
                         "schedule length for re-generation");

  // ---- bench -----------------------------------------------------------------
  auto* cmd_bench = add_subcommand("bench", "run the edit benchmark");
  std::string bench_config;
  cmd_bench->add_option("config", bench_config, "bench config JSON")->required();

  // ---- metrics ---------------------------------------------------------------
  auto* cmd_metrics = add_subcommand("metrics", "pixel metrics over a region");
  std::string metrics_ref, metrics_cand, metrics_region;
  cmd_metrics->add_option("reference", metrics_ref, "reference token grid JSON")->required();
  cmd_metrics->add_option("candidate", metrics_cand, "candidate token grid JSON")->required();
  cmd_metrics->add_option("region", metrics_region, "region mask JSON")->required();

  try {
    app.parse(argc, argv);

    if (*cmd_ground) {
      const dik::TokenGrid grid = dik::token_grid_from_json(dik::read_json_file(ground_grid));
      const dik::SpatialPrompt prompt_spec =
          dik::prompt_from_json(dik::read_json_file(ground_prompt));
      dik::GroundingMask mask = dik::ground(grid, prompt_spec);
      if (ground_relax) mask = dik::relax_mask(mask);
      emit(dik::to_json(mask), out_path);
    } else if (*cmd_invert) {
      const dik::TokenGrid grid = dik::token_grid_from_json(dik::read_json_file(invert_grid));
      const dik::GroundingMask mask = dik::mask_from_json(dik::read_json_file(invert_mask));
      schedule.validate();
      fusion.validate();
      const auto model = make_denoiser(denoiser_spec, grid.vocab_size());
      const dik::ResidualStack stack =
          dik::invert(grid, mask, schedule, make_conditioning(prompt, dik::Role::source),
                      *model, fusion, dik::Rng(seed));
      emit(dik::to_json(stack), out_path);
    } else if (*cmd_edit) {
      const dik::TokenGrid grid = dik::token_grid_from_json(dik::read_json_file(edit_grid));
      const dik::ResidualStack stack = dik::stack_from_json(dik::read_json_file(edit_stack));
      const dik::TokenGrid edited =
          dik::edit(grid, stack, make_conditioning(prompt, dik::Role::target), fusion,
                    *make_denoiser(denoiser_spec, grid.vocab_size()), dik::Rng(seed));
      emit(dik::to_json(edited), out_path);
    } else if (*cmd_refine) {
      const dik::TokenGrid grid = dik::token_grid_from_json(dik::read_json_file(refine_grid));
      const dik::GroundingMask target =
          dik::mask_from_json(dik::read_json_file(refine_target));
      refinement.relax_mode =
          refine_relax ? dik::RelaxMode::bounding_box : dik::RelaxMode::tight;
      refinement.validate();
      const auto model = make_denoiser(denoiser_spec, grid.vocab_size());
      const dik::Conditioning cond = make_conditioning(prompt, dik::Role::target);
      const dik::Rng rng(seed);
      const dik::ConfidenceMap confidence = dik::confidence_map(
          model->predict_logits(grid, cond, 1, refinement.refine_steps), grid);
      dik::TokenGrid refined =
          dik::intrinsic_refine(grid, confidence, target, refinement, cond, *model,
                                rng.substream(dik::stream::refine));
      if (!refine_work.empty()) {
        dik::GroundingMask work = dik::mask_from_json(dik::read_json_file(refine_work));
        if (refine_relax && work.popcount() > 0) work = dik::relax_mask(work);
        refined = dik::recover_residual(refined, dik::residual_mask(work, target),
                                        dik::Conditioning::neutral(),
                                        refinement.refine_steps, *model,
                                        rng.substream(dik::stream::recover));
      }
      emit(dik::to_json(refined), out_path);
    } else if (*cmd_bench) {
      dik::BenchConfig config =
          dik::bench_config_from_json(dik::read_json_file(bench_config));
      if (app.count("--seed") > 0 || std::getenv("DIK_SEED") != nullptr)
        config.seed = seed;
      const dik::BenchReport report =
          dik::run_bench(config.cases, config.pipeline(), stderr);
      emit(dik::to_json(report, config.refinement), out_path);
    } else if (*cmd_metrics) {
      const dik::TokenGrid ref = dik::token_grid_from_json(dik::read_json_file(metrics_ref));
      const dik::TokenGrid cand =
          dik::token_grid_from_json(dik::read_json_file(metrics_cand));
      const dik::GroundingMask region =
          dik::mask_from_json(dik::read_json_file(metrics_region));
      const dik::RegionMetrics m =
          dik::region_metrics(dik::to_intensity(ref), dik::to_intensity(cand), region);
      emit(dik::json{{"mse", m.mse}, {"psnr", m.psnr}, {"ssim", m.ssim}}, out_path);
    }
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dik::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
