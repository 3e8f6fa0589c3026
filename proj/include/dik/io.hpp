#pragma once

// JSON serialization for every externally visible type, plus bench config
// parsing and report rendering. Schemas are stable; doubles round-trip
// bit-exactly through the serializer.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dik/bench.hpp"
#include "dik/denoiser.hpp"
#include "dik/grounding.hpp"
#include "dik/inversion.hpp"
#include "dik/refine.hpp"
#include "dik/residual_stack.hpp"
#include "dik/types.hpp"

namespace dik {

using json = nlohmann::json;

// ---- enum <-> string -------------------------------------------------------

inline std::string to_string(EditOp op) {
  switch (op) {
    case EditOp::add: return "add";
    case EditOp::remove: return "remove";
    case EditOp::replace: return "replace";
  }
  throw std::invalid_argument("to_string: unknown edit operation");
}

inline EditOp edit_op_from_string(const std::string& s) {
  if (s == "add") return EditOp::add;
  if (s == "remove") return EditOp::remove;
  if (s == "replace") return EditOp::replace;
  throw std::invalid_argument("unknown edit operation \"" + s + "\"");
}

inline std::string to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::point: return "point";
    case PromptKind::box: return "box";
    case PromptKind::text: return "text";
  }
  throw std::invalid_argument("to_string: unknown prompt kind");
}

inline PromptKind prompt_kind_from_string(const std::string& s) {
  if (s == "point") return PromptKind::point;
  if (s == "box") return PromptKind::box;
  if (s == "text") return PromptKind::text;
  throw std::invalid_argument("unknown prompt kind \"" + s + "\"");
}

inline std::string to_string(RelaxMode mode) {
  return mode == RelaxMode::tight ? "tight" : "bounding-box";
}

inline RelaxMode relax_mode_from_string(const std::string& s) {
  if (s == "tight") return RelaxMode::tight;
  if (s == "bounding-box") return RelaxMode::bounding_box;
  throw std::invalid_argument("unknown relax_mode \"" + s + "\"");
}

// ---- core types ------------------------------------------------------------

inline json to_json(const TokenGrid& grid) {
  return json{{"height", grid.height()},
              {"width", grid.width()},
              {"vocab_size", grid.vocab_size()},
              {"mask_token", grid.mask_token()},
              {"tokens", std::vector<Token>(grid.tokens().begin(), grid.tokens().end())}};
}

inline TokenGrid token_grid_from_json(const json& j) {
  return TokenGrid(j.at("height").get<int>(), j.at("width").get<int>(),
                   j.at("vocab_size").get<int>(), j.at("mask_token").get<Token>(),
                   j.at("tokens").get<std::vector<Token>>());
}

inline json to_json(const GroundingMask& mask) {
  return json{{"height", mask.height()},
              {"width", mask.width()},
              {"bits", std::vector<int>(mask.bits().begin(), mask.bits().end())}};
}

inline GroundingMask mask_from_json(const json& j) {
  const auto raw = j.at("bits").get<std::vector<int>>();
  std::vector<std::uint8_t> bits(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    detail::require(raw[i] == 0 || raw[i] == 1,
                    "GroundingMask: bits[" + std::to_string(i) + "] = " +
                        std::to_string(raw[i]) + " is not 0/1");
    bits[i] = static_cast<std::uint8_t>(raw[i]);
  }
  return GroundingMask(j.at("height").get<int>(), j.at("width").get<int>(), std::move(bits));
}

inline json to_json(const SpatialPrompt& prompt) {
  switch (prompt.kind) {
    case PromptKind::point:
      return json{{"kind", "point"}, {"point", {prompt.point.y, prompt.point.x}}};
    case PromptKind::box:
      return json{{"kind", "box"},
                  {"box", {prompt.box.y0, prompt.box.x0, prompt.box.y1, prompt.box.x1}}};
    case PromptKind::text:
      return json{{"kind", "text"}, {"concept", prompt.concept_tokens}};
  }
  throw std::invalid_argument("to_json: unknown prompt kind");
}

inline SpatialPrompt prompt_from_json(const json& j) {
  const PromptKind kind = prompt_kind_from_string(j.at("kind").get<std::string>());
  switch (kind) {
    case PromptKind::point: {
      const auto p = j.at("point").get<std::vector<int>>();
      detail::require(p.size() == 2, "SpatialPrompt: \"point\" must be [y,x]");
      return SpatialPrompt::at_point(Point{p[0], p[1]});
    }
    case PromptKind::box: {
      const auto b = j.at("box").get<std::vector<int>>();
      detail::require(b.size() == 4, "SpatialPrompt: \"box\" must be [y0,x0,y1,x1]");
      return SpatialPrompt::in_box(Box{b[0], b[1], b[2], b[3]});
    }
    case PromptKind::text:
      return SpatialPrompt::of_concepts(j.at("concept").get<std::vector<Token>>());
  }
  throw std::invalid_argument("prompt_from_json: unknown prompt kind");
}

inline json to_json(const ResidualStack& stack) {
  json steps = json::array();
  for (int t = 1; t <= stack.timesteps(); ++t) {
    const ResidualStep& step = stack.step(t);
    json z = json::array();
    for (const auto& [pos, values] : step.residuals) {
      const int y = pos / step.mask.width();
      const int x = pos % step.mask.width();
      z.push_back(json{{"pos", {y, x}}, {"v", values}});
    }
    steps.push_back(json{{"t", t}, {"m", to_json(step.mask)}, {"z", std::move(z)}});
  }
  return json{{"timesteps", stack.timesteps()},
              {"mask", to_json(stack.region())},
              {"source_checksum", to_hex(stack.source_checksum())},
              {"steps", std::move(steps)}};
}

inline ResidualStack stack_from_json(const json& j) {
  const int timesteps = j.at("timesteps").get<int>();
  GroundingMask region = mask_from_json(j.at("mask"));
  std::vector<ResidualStep> steps;
  const json& raw_steps = j.at("steps");
  detail::require(raw_steps.is_array(), "ResidualStack: \"steps\" must be an array");
  steps.reserve(raw_steps.size());
  int expected_t = 1;
  for (const json& raw : raw_steps) {
    detail::require(raw.at("t").get<int>() == expected_t,
                    "ResidualStack: steps must be ordered t = 1..timesteps; found t = " +
                        std::to_string(raw.at("t").get<int>()) + " at slot " +
                        std::to_string(expected_t));
    ++expected_t;
    ResidualStep step{mask_from_json(raw.at("m")), {}};
    for (const json& entry : raw.at("z")) {
      const auto pos = entry.at("pos").get<std::vector<int>>();
      detail::require(pos.size() == 2, "ResidualStack: residual \"pos\" must be [y,x]");
      detail::require(pos[0] >= 0 && pos[0] < step.mask.height() && pos[1] >= 0 &&
                          pos[1] < step.mask.width(),
                      "ResidualStack: residual position (" + std::to_string(pos[0]) + "," +
                          std::to_string(pos[1]) + ") outside the grid");
      step.residuals.emplace_back(pos[0] * step.mask.width() + pos[1],
                                  entry.at("v").get<std::vector<double>>());
    }
    steps.push_back(std::move(step));
  }
  // The vocabulary width lives in the residual vectors themselves; a stack
  // over an empty region stores none, and validation is then vacuous.
  int vocab = 1;
  for (const ResidualStep& step : steps)
    if (!step.residuals.empty()) {
      vocab = static_cast<int>(step.residuals.front().second.size());
      break;
    }
  // The constructor re-validates nestedness, cardinality and alignment.
  return ResidualStack(timesteps, std::move(region),
                       parse_hex(j.at("source_checksum").get<std::string>()),
                       std::move(steps), vocab);
}

// ---- parameters ------------------------------------------------------------

inline json to_json(const ScheduleParams& p) {
  return json{{"timesteps", p.timesteps}, {"mask_temperature", p.mask_temperature}};
}

inline ScheduleParams schedule_from_json(const json& j) {
  ScheduleParams p;
  p.timesteps = j.value("timesteps", p.timesteps);
  p.mask_temperature = j.value("mask_temperature", p.mask_temperature);
  p.validate();
  return p;
}

inline json to_json(const FusionParams& p) {
  json out{{"lambda", p.lambda},
           {"temperature", p.temperature},
           {"lai_margin", p.lai_margin}};
  if (p.lambda_map) out["lambda_map"] = *p.lambda_map;
  return out;
}

inline FusionParams fusion_from_json(const json& j) {
  FusionParams p;
  p.lambda = j.value("lambda", p.lambda);
  p.temperature = j.value("temperature", p.temperature);
  p.lai_margin = j.value("lai_margin", p.lai_margin);
  if (j.contains("lambda_map")) p.lambda_map = j.at("lambda_map").get<std::vector<double>>();
  p.validate();
  return p;
}

inline json to_json(const RefinementParams& p) {
  return json{{"conf_threshold", p.conf_threshold},
              {"refine_steps", p.refine_steps},
              {"relax_mode", to_string(p.relax_mode)}};
}

inline RefinementParams refinement_from_json(const json& j) {
  RefinementParams p;
  p.conf_threshold = j.value("conf_threshold", p.conf_threshold);
  p.refine_steps = j.value("refine_steps", p.refine_steps);
  if (j.contains("relax_mode"))
    p.relax_mode = relax_mode_from_string(j.at("relax_mode").get<std::string>());
  p.validate();
  return p;
}

// ---- denoiser spec ---------------------------------------------------------

inline json to_json(const DenoiserSpec& spec) {
  json out{{"kind", spec.kind == DenoiserKind::local_hash ? "local-hash" : "empirical"},
           {"vocab_size", spec.vocab_size},
           {"attention_layers", spec.attention_layers},
           {"attention_heads", spec.attention_heads}};
  if (spec.kind == DenoiserKind::local_hash) {
    out["locality_radius"] = spec.locality_radius;
  } else if (!spec.table.empty()) {
    json table = json::array();  // std::map keys keep this sorted and stable
    for (const auto& [key, counts] : spec.table)
      table.push_back(json{{"pattern", to_hex(key)}, {"counts", counts}});
    out["table"] = std::move(table);
  } else {
    out["corpus"] = spec.corpus_dir;
  }
  return out;
}

inline std::vector<TokenGrid> load_corpus(const std::string& dir);

inline DenoiserSpec denoiser_spec_from_json(const json& j) {
  DenoiserSpec spec;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "local-hash")
    spec.kind = DenoiserKind::local_hash;
  else if (kind == "empirical")
    spec.kind = DenoiserKind::empirical;
  else
    throw std::invalid_argument("unknown denoiser kind \"" + kind + "\"");
  spec.vocab_size = j.at("vocab_size").get<int>();
  spec.locality_radius = j.value("locality_radius", spec.locality_radius);
  spec.attention_layers = j.value("attention_layers", spec.attention_layers);
  spec.attention_heads = j.value("attention_heads", spec.attention_heads);
  if (spec.kind == DenoiserKind::empirical) {
    if (j.contains("table")) {
      for (const json& row : j.at("table"))
        spec.table[parse_hex(row.at("pattern").get<std::string>())] =
            row.at("counts").get<std::vector<std::uint64_t>>();
    } else if (j.contains("corpus")) {
      spec.corpus_dir = j.at("corpus").get<std::string>();
      const auto corpus = load_corpus(spec.corpus_dir);
      spec.table = EmpiricalDenoiser::fit(corpus, spec.attention_layers,
                                          spec.attention_heads)
                       .table();
      detail::require(spec.vocab_size == corpus.front().vocab_size(),
                      "DenoiserSpec: vocab_size " + std::to_string(spec.vocab_size) +
                          " does not match corpus vocab_size " +
                          std::to_string(corpus.front().vocab_size()));
    } else {
      throw std::invalid_argument(
          "empirical denoiser spec needs a \"table\" or a \"corpus\" directory");
    }
  }
  return spec;
}

// ---- cases -----------------------------------------------------------------

inline json to_json(const EditCase& edit_case) {
  json subs = json::array();
  for (const SubInstruction& sub : edit_case.subs)
    subs.push_back(json{{"op", to_string(sub.op)},
                        {"prompt", to_json(sub.prompt)},
                        {"source_concept", sub.source_concept},
                        {"target_concept", sub.target_concept}});
  return json{{"id", edit_case.id},
              {"modality", to_string(edit_case.modality)},
              {"source", to_json(edit_case.source)},
              {"subs", std::move(subs)}};
}

inline EditCase case_from_json(const json& j) {
  EditCase out{j.at("id").get<std::string>(),
               prompt_kind_from_string(j.at("modality").get<std::string>()),
               token_grid_from_json(j.at("source")),
               {}};
  for (const json& raw : j.at("subs")) {
    SubInstruction sub;
    sub.op = edit_op_from_string(raw.at("op").get<std::string>());
    sub.prompt = prompt_from_json(raw.at("prompt"));
    sub.source_concept = raw.at("source_concept").get<Token>();
    sub.target_concept = raw.at("target_concept").get<Token>();
    out.subs.push_back(std::move(sub));
  }
  return out;
}

// ---- files -----------------------------------------------------------------

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  detail::require(in.good(), "cannot open \"" + path + "\" for reading");
  json j;
  in >> j;
  return j;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  detail::require(out.good(), "cannot open \"" + path + "\" for writing");
  out << j.dump(2) << "\n";
}

inline std::vector<TokenGrid> load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  detail::require(fs::is_directory(dir), "corpus \"" + dir + "\" is not a directory");
  std::set<std::string> paths;  // sorted for a deterministic fit
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      paths.insert(entry.path().string());
  detail::require(!paths.empty(), "corpus \"" + dir + "\" holds no .json grids");
  std::vector<TokenGrid> corpus;
  corpus.reserve(paths.size());
  for (const std::string& path : paths)
    corpus.push_back(token_grid_from_json(read_json_file(path)));
  return corpus;
}

// ---- bench config and report -----------------------------------------------

struct BenchConfig {
  std::vector<EditCase> cases;
  DenoiserSpec denoiser;
  ScheduleParams schedule;
  FusionParams fusion;
  RefinementParams refinement;
  bool order_check = false;
  std::uint64_t seed = 0;

  PipelineConfig pipeline() const {
    return PipelineConfig{denoiser.build(), schedule, fusion, refinement, order_check, seed};
  }
};

// {"cases": "path.json" | {"generate": {"count": n, "seed": s, ...}}, ...}
inline BenchConfig bench_config_from_json(const json& j) {
  BenchConfig config;
  const json& cases = j.at("cases");
  if (cases.is_string()) {
    const json loaded = read_json_file(cases.get<std::string>());
    detail::require(loaded.is_array(), "case file must hold a JSON array of cases");
    for (const json& raw : loaded) config.cases.push_back(case_from_json(raw));
  } else if (cases.is_object() && cases.contains("generate")) {
    const json& gen = cases.at("generate");
    const int count = gen.at("count").get<int>();
    detail::require(count > 0, "bench config: generate.count must be positive");
    const std::uint64_t first_seed = gen.value("seed", 0ULL);
    CaseGenOptions opt;
    opt.height = gen.value("height", opt.height);
    opt.width = gen.value("width", opt.width);
    opt.vocab_size = gen.value("vocab_size", opt.vocab_size);
    for (int i = 0; i < count; ++i)
      config.cases.push_back(generate_case(first_seed + i, opt));
  } else {
    throw std::invalid_argument(
        "bench config: \"cases\" must be a file path or {\"generate\": {...}}");
  }
  detail::require(!config.cases.empty(), "bench config: no cases");

  if (j.contains("denoiser"))
    config.denoiser = denoiser_spec_from_json(j.at("denoiser"));
  else
    config.denoiser = DenoiserSpec::local_hash(config.cases.front().source.vocab_size());
  if (j.contains("schedule")) config.schedule = schedule_from_json(j.at("schedule"));
  if (j.contains("fusion")) config.fusion = fusion_from_json(j.at("fusion"));
  if (j.contains("refinement"))
    config.refinement = refinement_from_json(j.at("refinement"));
  config.order_check = j.value("order_check", false);
  config.seed = j.value("seed", 0ULL);
  return config;
}

inline const char* edited_region_rule(EditOp op) {
  switch (op) {
    case EditOp::replace: return "union(source,target)";
    case EditOp::add: return "target";
    case EditOp::remove: return "source";
  }
  return "?";
}

inline json to_json(const BenchReport& report, const RefinementParams& refinement) {
  json cases = json::array();
  for (const CaseResult& r : report.results) {
    json provenance = json::array();
    for (const SubOutcome& sub : r.subs)
      provenance.push_back(json{{"op", to_string(sub.op)},
                                {"rule", edited_region_rule(sub.op)},
                                {"source_popcount", sub.work.popcount()},
                                {"target_popcount", sub.target.popcount()},
                                {"edited_popcount", sub.edited.popcount()},
                                {"relaxed", refinement.relax_mode == RelaxMode::bounding_box}});
    json entry{{"case_id", r.case_id},
               {"modality", to_string(r.modality)},
               {"non_edit", {{"mse", r.non_edit.mse},
                             {"psnr", r.non_edit.psnr},
                             {"ssim", r.non_edit.ssim}}},
               {"edited_region", {{"popcount", r.edited_popcount},
                                  {"provenance", std::move(provenance)}}},
               {"alignment", "identity"},
               {"ssim_window", "uniform-7x7-clipped"}};
    if (r.order_invariant) entry["order_invariant"] = *r.order_invariant;
    cases.push_back(std::move(entry));
  }
  json aggregate{{"cases", report.aggregate.cases},
                 {"mean_mse", report.aggregate.mean_mse},
                 {"mean_psnr", report.aggregate.mean_psnr},
                 {"mean_ssim", report.aggregate.mean_ssim}};
  if (report.aggregate.order_invariant_fraction)
    aggregate["order_invariant_fraction"] = *report.aggregate.order_invariant_fraction;
  return json{{"cases", std::move(cases)}, {"aggregate", std::move(aggregate)}};
}

}  // namespace dik
