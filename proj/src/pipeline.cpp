#include "grala/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>

#include "grala/compose.hpp"
#include "grala/error.hpp"
#include "grala/harmonize.hpp"
#include "grala/io.hpp"
#include "grala/json_util.hpp"
#include "grala/layout.hpp"
#include "grala/mesh.hpp"
#include "grala/remote.hpp"

namespace grala {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::compose: return "compose";
    case Stage::validate: return "validate";
    case Stage::generate: return "generate";
    case Stage::mesh: return "mesh";
    case Stage::harmonize: return "harmonize";
    case Stage::render: return "render";
    case Stage::eval: return "eval";
  }
  return "?";
}

void RunConfig::validate() const {
  const bool dsl = !scene_path.empty();
  const bool llm = !prompt.empty() || !transcript_path.empty();
  if (dsl == llm) throw ValidationError("give either a scene file or a prompt with an LLM transcript");
  if (llm && (prompt.empty() || transcript_path.empty()))
    throw ValidationError("composing from a prompt needs both the prompt and the LLM transcript");
  for (const auto* p : {&scene_path, &transcript_path, &reference_path})
    if (!p->empty() && !fs::exists(*p)) throw ValidationError("no such file: " + *p);
  if (provider != "mock" && provider != "remote") throw ValidationError("provider must be mock or remote");
  if (provider == "remote" && endpoint.empty())
    throw ValidationError("the remote provider needs an endpoint (--endpoint or GRALA_ENDPOINT)");
  if (iters && *iters < 0) throw ValidationError("--iters must be non-negative");
  if (resolution && *resolution < 1) throw ValidationError("--resolution must be positive");
  if (lambda_local && *lambda_local < 0) throw ValidationError("--lambda-local must be non-negative");
  if (views < 1) throw ValidationError("--views must be positive");
  if (render_views < 0 || render_resolution < 1) throw ValidationError("bad render settings");
  optim().schedule.validate();
}

OptimConfig RunConfig::optim() const {
  OptimConfig c;
  if (iters) c.schedule.total_iters = *iters;
  if (resolution) c.schedule.set_resolution(*resolution);
  if (lambda_local) c.weights.local = *lambda_local;
  return c;
}

json RunConfig::to_json() const {
  json j{{"scene", scene_path},
         {"prompt", prompt},
         {"transcript", transcript_path},
         {"reference", reference_path},
         {"provider", provider},
         {"endpoint", provider == "remote" ? endpoint : ""},
         {"seed", seed},
         {"views", views},
         {"render_views", render_views},
         {"render_resolution", render_resolution},
         {"mesh_resolution", mesh_resolution},
         {"optim", optim().to_json()}};
  return j;
}

namespace {

constexpr const char* kStageMarker = "stage.json";
constexpr const char* kUnitMarker = "unit.json";
constexpr double kAssemblyTolerance = 1.05;

std::string hash_of(std::string_view stage, const std::string& input, const json& config) {
  return fnv1a_hex(std::string(stage) + "|" + input + "|" + config.dump());
}

void write_json(const fs::path& path, const json& j) { write_text(path.string(), j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path.string()));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

void write_marker(const fs::path& dir, const char* name, std::string_view stage, const std::string& key,
                  const std::string& input, const json& config) {
  write_json(dir / name, {{"stage", stage}, {"key", key}, {"input", input}, {"config", config}});
}

void fresh_dir(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
}

json partition_json(const SceneGraph& g, const Partition& p) {
  json s = json::array();
  for (const auto& sn : p.supernodes)
    s.push_back({{"first", sn.first},
                 {"second", sn.second},
                 {"label", sn.edge.label},
                 {"id", supernode_id(sn)},
                 {"prompt", supernode_prompt(g, sn)}});
  return {{"singles", p.singles}, {"supernodes", s}};
}

std::unique_ptr<GuidanceProvider> make_provider(const RunConfig& c, const SceneDocument& doc) {
  if (c.provider == "remote") return std::make_unique<RemoteGuidanceProvider>(c.endpoint);
  ReferenceScene ref = c.reference_path.empty() ? ReferenceScene::from_layout(doc.graph, *doc.layout)
                                                : ReferenceScene::load(c.reference_path);
  return std::make_unique<MockOracle>(std::move(ref));
}

std::unique_ptr<RefinerProvider> make_refiner(const RunConfig& c) {
  if (c.provider == "remote") return std::make_unique<RemoteRefiner>(c.endpoint);
  return std::make_unique<MockHarmonizer>();
}

}  // namespace

Pipeline::Pipeline(RunConfig config, std::function<void(const StageEvent&)> on_event,
                   std::function<void(const std::string&)> warn)
    : config_(std::move(config)), on_event_(std::move(on_event)), warn_(std::move(warn)) {
  if (!warn_) warn_ = [](const std::string& m) { std::cerr << "warning: " << m << "\n"; };
}

std::string Pipeline::stage_dir(Stage stage) const { return (fs::path(config_.out_dir) / to_string(stage)).string(); }

bool Pipeline::reuse(const std::string& dir, const std::string& marker, const std::string& key) const {
  if (config_.force) return false;
  const fs::path p = fs::path(dir) / marker;
  if (!fs::exists(p)) return false;
  try {
    return read_json(p).value("key", std::string{}) == key;
  } catch (const Error&) {
    return false;
  }
}

void Pipeline::enter(Stage stage) { current_ = stage; }

void Pipeline::run(Stage last, bool with_render) {
  enter(Stage::compose);
  config_.validate();
  fs::create_directories(config_.out_dir);
  write_json(fs::path(config_.out_dir) / "run.json", config_.to_json());
  std::string key = compose();
  using Step = std::string (Pipeline::*)(const std::string&);
  const std::pair<Stage, Step> steps[] = {{Stage::validate, &Pipeline::validate}, {Stage::generate, &Pipeline::generate},
                                          {Stage::mesh, &Pipeline::mesh},         {Stage::harmonize, &Pipeline::harmonize},
                                          {Stage::render, &Pipeline::render},     {Stage::eval, &Pipeline::eval}};
  for (const auto& [stage, step] : steps) {
    if (static_cast<int>(stage) > static_cast<int>(last)) break;
    if (stage == Stage::render && !with_render && last != Stage::render) continue;
    enter(stage);
    const std::string out = (this->*step)(key);
    if (stage != Stage::render) key = out;  // eval reads the harmonized scene, not the renders
  }
}

std::string Pipeline::compose() {
  const fs::path dir = stage_dir(Stage::compose);
  const bool dsl = !config_.scene_path.empty();
  const std::string text = read_text(dsl ? config_.scene_path : config_.transcript_path);
  const json slice{{"source", dsl ? "dsl" : "llm"}, {"prompt", config_.prompt}};
  const std::string key = hash_of("compose", text, slice);
  if (reuse(dir.string(), kStageMarker, key)) {
    if (on_event_) on_event_({Stage::compose, {}, true});
    return key;
  }
  fresh_dir(dir);
  SceneDocument doc;
  if (dsl) {
    doc = parse_scene_file(text);
  } else {
    ScriptedLLMClient client = ScriptedLLMClient::from_file(config_.transcript_path);
    try {
      doc = compose_with_llm(config_.prompt, client);
    } catch (const LayoutRejected& e) {
      write_json(dir / "report.json", e.report().to_json());
      throw;
    }
    write_json(dir / "requests.json", client.requests());
  }
  write_text((dir / "scene.json").string(), serialize_scene(doc));
  write_json(dir / "partition.json", partition_json(doc.graph, partition_nodes(doc.graph)));
  write_marker(dir, kStageMarker, "compose", key, fnv1a_hex(text), slice);
  if (on_event_) on_event_({Stage::compose, {}, false});
  return key;
}

std::string Pipeline::validate(const std::string& input) {
  const fs::path dir = stage_dir(Stage::validate);
  const std::string key = hash_of("validate", input, json::object());
  if (reuse(dir.string(), kStageMarker, key)) {
    if (on_event_) on_event_({Stage::validate, {}, true});
    return key;
  }
  fresh_dir(dir);
  const SceneDocument doc = load_scene_file(stage_dir(Stage::compose) + "/scene.json");
  if (!doc.layout) throw ValidationError("the scene has no layout section");
  const ValidationReport report = validate_layout(*doc.layout, doc.graph);
  write_json(dir / "report.json", {{"ok", report.ok()}, {"report", report.to_json()}});
  if (!report.ok()) {
    std::string detail;
    for (const auto& v : report.violations) detail += "\n  " + v.rule + ": " + v.detail;
    throw ValidationError("layout validation failed (" + std::to_string(report.violations.size()) +
                          " violations, see " + (dir / "report.json").string() + ")" + detail);
  }
  write_marker(dir, kStageMarker, "validate", key, input, json::object());
  if (on_event_) on_event_({Stage::validate, {}, false});
  return key;
}

std::string Pipeline::generate(const std::string& input) {
  const fs::path dir = stage_dir(Stage::generate);
  const SceneDocument doc = load_scene_file(stage_dir(Stage::compose) + "/scene.json");
  const Partition part = partition_nodes(doc.graph);
  const OptimConfig cfg = config_.optim();
  const auto provider = make_provider(config_, doc);
  const json provider_sig{{"name", provider->name()}, {"config", provider->config_hash()}};

  // λ_local only reaches super-node loops, so singles hash without it.
  json single_cfg = cfg.to_json();
  single_cfg["weights"].erase("local");

  std::string unit_keys;
  const auto unit_key = [&](const json& slice) {
    const std::string k = hash_of("generate", input, slice);
    unit_keys += k;
    return k;
  };
  fs::create_directories(dir);
  for (const auto& id : part.singles) {
    const json slice{{"node", id},
                     {"box", to_json(doc.layout->at(id))},
                     {"seed", config_.seed},
                     {"provider", provider_sig},
                     {"optim", single_cfg}};
    const std::string key = unit_key(slice);
    const fs::path udir = dir / id;
    if (reuse(udir.string(), kUnitMarker, key)) {
      if (on_event_) on_event_({Stage::generate, id, true});
      continue;
    }
    fresh_dir(udir);
    optimize_single(doc.graph.node(id), doc.layout->at(id), *provider, cfg, config_.seed,
                    {udir.string(), {}, warn_});
    write_marker(udir, kUnitMarker, "generate", key, input, slice);
    if (on_event_) on_event_({Stage::generate, id, false});
  }
  for (const auto& sn : part.supernodes) {
    const std::string id = supernode_id(sn);
    const json slice{{"supernode", id},
                     {"label", sn.edge.label},
                     {"boxes", {to_json(doc.layout->at(sn.first)), to_json(doc.layout->at(sn.second))}},
                     {"seed", config_.seed},
                     {"provider", provider_sig},
                     {"optim", cfg.to_json()}};
    const std::string key = unit_key(slice);
    const SuperRunDirs dirs{(dir / id).string(), (dir / sn.first).string(), (dir / sn.second).string()};
    if (reuse(dirs.joint, kUnitMarker, key) && fs::exists(dirs.first) && fs::exists(dirs.second)) {
      if (on_event_) on_event_({Stage::generate, id, true});
      continue;
    }
    for (const auto& d : {dirs.joint, dirs.first, dirs.second}) fresh_dir(d);
    optimize_super(doc.graph, sn, doc.layout->at(sn.first), doc.layout->at(sn.second), *provider, cfg, config_.seed,
                   dirs, warn_);
    write_marker(dirs.joint, kUnitMarker, "generate", key, input, slice);
    if (on_event_) on_event_({Stage::generate, id, false});
  }
  const std::string key = fnv1a_hex(unit_keys);
  write_marker(dir, kStageMarker, "generate", key, input, {{"units", part.singles.size() + part.supernodes.size()}});
  return key;
}

std::string Pipeline::mesh(const std::string& input) {
  const fs::path dir = stage_dir(Stage::mesh);
  const BakeSettings bake;
  const json slice{{"grid", config_.mesh_resolution},
                   {"iso", kIsoLevel},
                   {"atlas", bake.resolution},
                   {"padding", bake.padding},
                   {"tolerance", kAssemblyTolerance}};
  const std::string key = hash_of("mesh", input, slice);
  if (reuse(dir.string(), kStageMarker, key)) {
    if (on_event_) on_event_({Stage::mesh, {}, true});
    return key;
  }
  fresh_dir(dir);
  const SceneDocument doc = load_scene_file(stage_dir(Stage::compose) + "/scene.json");
  std::map<std::string, Mesh> meshes;
  json stats = json::object();
  for (const auto& node : doc.graph.nodes) {
    const LayoutBox& box = doc.layout->at(node.id);
    const GaussianModel model = load_grla(stage_dir(Stage::generate) + "/" + node.id + "/final.grla", node.id);
    Mesh m = marching_cubes(sample_occupancy(model, config_.mesh_resolution, box));
    BakeStats bs;
    if (!m.empty()) m = bake_texture(model, m, bake, &bs);
    stats[node.id] = {{"gaussians", model.size()},
                      {"vertices", m.vertices.size()},
                      {"triangles", m.triangles.size()},
                      {"atlas", bs.resolution},
                      {"charts", bs.charts},
                      {"bounds", to_json(m.bounds())},
                      {"box", to_json(box)}};
    meshes[node.id] = std::move(m);
  }
  const Assembly a = assemble_scene(doc.graph, meshes, *doc.layout, kAssemblyTolerance);
  for (const auto& w : a.warnings) warn_(w);
  write_scene(a.scene, dir.string());
  write_json(dir / "assembly.json", {{"meshes", stats}, {"warnings", a.warnings}});
  write_marker(dir, kStageMarker, "mesh", key, input, slice);
  if (on_event_) on_event_({Stage::mesh, {}, false});
  return key;
}

std::string Pipeline::harmonize(const std::string& input) {
  const fs::path dir = stage_dir(Stage::harmonize);
  const auto refiner = make_refiner(config_);
  HarmonizeConfig hc;
  hc.seed = config_.seed;
  const json slice{{"harmonize", hc.to_json()}, {"refiner", refiner->name()}, {"endpoint", config_.to_json()["endpoint"]}};
  const std::string key = hash_of("harmonize", input, slice);
  if (reuse(dir.string(), kStageMarker, key)) {
    if (on_event_) on_event_({Stage::harmonize, {}, true});
    return key;
  }
  fresh_dir(dir);
  Scene scene = read_scene(stage_dir(Stage::mesh));
  std::string log;
  grala::harmonize(scene, *refiner, hc, [&](const HarmonizeIteration& it, const Scene&, const SceneRender&) {
    log += json{{"iter", it.iter}, {"mse", it.mse}, {"texels_updated", it.texels_updated}}.dump() + "\n";
  });
  write_scene(scene, dir.string());
  write_text((dir / "log.jsonl").string(), log);
  write_marker(dir, kStageMarker, "harmonize", key, input, slice);
  if (on_event_) on_event_({Stage::harmonize, {}, false});
  return key;
}

std::string Pipeline::render(const std::string& input) {
  const fs::path dir = stage_dir(Stage::render);
  const json slice{{"views", config_.render_views}, {"resolution", config_.render_resolution}, {"seed", config_.seed}};
  const std::string key = hash_of("render", input, slice);
  if (reuse(dir.string(), kStageMarker, key)) {
    if (on_event_) on_event_({Stage::render, {}, true});
    return key;
  }
  fresh_dir(dir);
  const Scene scene = read_scene(stage_dir(Stage::harmonize));
  Rng rng(config_.seed);
  json cams = json::array();
  for (int v = 0; v < config_.render_views; ++v) {
    const Camera cam =
        sample_camera(rng, scene.bounds(), {}, config_.render_resolution, config_.render_resolution);
    char name[32];
    std::snprintf(name, sizeof name, "view-%03d.png", v);
    write_png((dir / name).string(), render_scene(scene, cam).rgb);
    cams.push_back(camera_to_json(cam));
  }
  write_json(dir / "cameras.json", cams);
  write_marker(dir, kStageMarker, "render", key, input, slice);
  if (on_event_) on_event_({Stage::render, {}, false});
  return key;
}

std::string Pipeline::eval(const std::string& input) {
  const fs::path dir = stage_dir(Stage::eval);
  EvalConfig ec;
  ec.views = config_.views;
  ec.seed = config_.seed;
  const MockScorer probe{Scene{}};
  const json slice{{"eval", ec.to_json()}, {"scorer", probe.name()}, {"reference", "mesh"}};
  const std::string key = hash_of("eval", input, slice);
  if (reuse(dir.string(), kStageMarker, key)) {
    if (on_event_) on_event_({Stage::eval, {}, true});
    return key;
  }
  fresh_dir(dir);
  const Scene scene = read_scene(stage_dir(Stage::harmonize));
  const EvalReport report = evaluate_scene(scene, MockScorer(read_scene(stage_dir(Stage::mesh))), ec);
  write_json(dir / "report.json", report.to_json());
  write_marker(dir, kStageMarker, "eval", key, input, slice);
  if (on_event_) on_event_({Stage::eval, {}, false});
  return key;
}

}  // namespace grala
