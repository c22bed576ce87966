#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "grala/compose.hpp"
#include "grala/error.hpp"
#include "grala/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kValidation = 2, kProvider = 3, kInternal = 4 };

struct Args {
  grala::RunConfig run;
  double lambda_local = 0;
  int iters = 0;
  int resolution = 0;
};

void add_run_options(CLI::App& cmd, Args& a) {
  cmd.add_option("--scene", a.run.scene_path, "Scene DSL file")->check(CLI::ExistingFile);
  cmd.add_option("--prompt", a.run.prompt, "Scene prompt to compose through the LLM client");
  cmd.add_option("--llm-transcript", a.run.transcript_path, "Recorded LLM replies ({\"replies\": [...]})")
      ->check(CLI::ExistingFile);
  cmd.add_option("--reference", a.run.reference_path, "Mock oracle target scene (JSON primitives)")
      ->check(CLI::ExistingFile);
  cmd.add_option("--provider", a.run.provider, "Guidance and refiner backend")
      ->check(CLI::IsMember({"mock", "remote"}))
      ->capture_default_str();
  cmd.add_option("--endpoint", a.run.endpoint, "Bridge URL for the remote provider")->envname("GRALA_ENDPOINT");
  cmd.add_option("--seed", a.run.seed, "Run seed")->capture_default_str();
  cmd.add_option("--out", a.run.out_dir, "Output directory")->capture_default_str();
  cmd.add_flag("--force", a.run.force, "Rerun stages even when cached");
  cmd.add_option("--lambda-local", a.lambda_local, "Localization loss weight");
  cmd.add_option("--iters", a.iters, "Optimization iterations per node");
  cmd.add_option("--resolution", a.resolution, "Single render resolution instead of the 128/256/512 staircase");
  cmd.add_option("--views", a.run.views, "Evaluation views")->capture_default_str();
  cmd.add_option("--mesh-resolution", a.run.mesh_resolution, "Occupancy grid size")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grala: scene graph and layout guided 3D scene generation"};
  app.require_subcommand(1, 1);
  Args args;
  const struct {
    const char* name;
    grala::Stage last;
    const char* help;
  } commands[] = {
      {"compose", grala::Stage::compose, "Parse or compose the scene graph and layout"},
      {"validate", grala::Stage::validate, "Check the layout against the graph"},
      {"generate", grala::Stage::generate, "Optimize one splat model per node and super-node"},
      {"mesh", grala::Stage::mesh, "Extract, texture and assemble the node meshes"},
      {"harmonize", grala::Stage::harmonize, "Refine the assembled textures"},
      {"render", grala::Stage::render, "Render views of the harmonized scene"},
      {"eval", grala::Stage::eval, "Score the harmonized scene over sampled views"},
      {"pipeline", grala::Stage::eval, "Run every stage"},
  };
  grala::Stage last = grala::Stage::eval;
  bool with_render = false;
  for (const auto& c : commands) {
    CLI::App* cmd = app.add_subcommand(c.name, c.help);
    add_run_options(*cmd, args);
    cmd->callback([&last, &with_render, stage = c.last, all = std::string(c.name) == "pipeline"] {
      last = stage;
      with_render = all;
    });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  CLI::App* cmd = app.get_subcommands().front();
  if (cmd->count("--lambda-local")) args.run.lambda_local = args.lambda_local;
  if (cmd->count("--iters")) args.run.iters = args.iters;
  if (cmd->count("--resolution")) args.run.resolution = args.resolution;

  grala::Pipeline pipeline(args.run, [](const grala::StageEvent& e) {
    std::cout << grala::to_string(e.stage) << (e.unit.empty() ? "" : "/" + e.unit) << ": "
              << (e.cached ? "cached" : "done") << std::endl;
  });
  const auto fail = [&](const std::exception& e, int code) {
    std::cerr << "error: stage " << grala::to_string(pipeline.current()) << ": " << e.what() << "\n";
    return code;
  };
  try {
    pipeline.run(last, with_render);
  } catch (const grala::LLMReplyError& e) {
    return fail(e, kProvider);
  } catch (const grala::ValidationError& e) {
    return fail(e, kValidation);
  } catch (const grala::ParseError& e) {
    return fail(e, kValidation);
  } catch (const grala::ProviderError& e) {
    return fail(e, kProvider);
  } catch (const std::exception& e) {
    return fail(e, kInternal);
  }
  return kOk;
}
