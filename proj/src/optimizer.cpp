#include "grala/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "grala/error.hpp"
#include "grala/io.hpp"
#include "grala/json_util.hpp"
#include "grala/layout.hpp"

namespace grala {

using nlohmann::json;

int Schedule::resolution(int iter) const {
  int res = stages.front().resolution;
  for (const auto& s : stages)
    if (iter >= s.start) res = s.resolution;
  return res;
}

int Schedule::timestep(int iter) const {
  if (total_iters <= 1) return timestep_max;
  const double f = static_cast<double>(iter) / static_cast<double>(total_iters - 1);
  return static_cast<int>(std::lround(timestep_max + (timestep_min - timestep_max) * f));
}

bool Schedule::densify_at(int iter) const {
  if (densify_every <= 0 || iter < densify_from || iter > densify_until) return false;
  return (iter - densify_from) % densify_every == 0;
}

void Schedule::validate() const {
  if (total_iters < 0) throw ValidationError("schedule: negative iteration count");
  if (stages.empty() || stages.front().start != 0) throw ValidationError("schedule: stages must start at iteration 0");
  for (std::size_t i = 1; i < stages.size(); ++i)
    if (stages[i].start <= stages[i - 1].start || stages[i].resolution < stages[i - 1].resolution)
      throw ValidationError("schedule: stages must have increasing starts and non-decreasing resolution");
  for (const auto& s : stages)
    if (s.resolution < 8) throw ValidationError("schedule: resolution below 8");
  if (timestep_max > 1000 || timestep_min < 1 || timestep_min > timestep_max)
    throw ValidationError("schedule: timesteps must satisfy 1 <= min <= max <= 1000");
}

json Schedule::to_json() const {
  json st = json::array();
  for (const auto& s : stages) st.push_back({{"start", s.start}, {"resolution", s.resolution}});
  return {{"total_iters", total_iters},     {"stages", st},
          {"timestep_max", timestep_max},   {"timestep_min", timestep_min},
          {"local_warmup", local_warmup},   {"densify_from", densify_from},
          {"densify_until", densify_until}, {"densify_every", densify_every},
          {"checkpoint_every", checkpoint_every}};
}

Schedule Schedule::from_json(const json& j) {
  Schedule s;
  s.total_iters = j.value("total_iters", s.total_iters);
  if (j.contains("stages")) {
    s.stages.clear();
    for (const auto& e : j["stages"]) s.stages.push_back({e.at("start").get<int>(), e.at("resolution").get<int>()});
  }
  s.timestep_max = j.value("timestep_max", s.timestep_max);
  s.timestep_min = j.value("timestep_min", s.timestep_min);
  s.local_warmup = j.value("local_warmup", s.local_warmup);
  s.densify_from = j.value("densify_from", s.densify_from);
  s.densify_until = j.value("densify_until", s.densify_until);
  s.densify_every = j.value("densify_every", s.densify_every);
  s.checkpoint_every = j.value("checkpoint_every", s.checkpoint_every);
  return s;
}

json OptimConfig::to_json() const {
  return {{"schedule", schedule.to_json()},
          {"weights", weights.to_json()},
          {"lr",
           {{"position_factor", lr.position_factor},
            {"log_scale", lr.log_scale},
            {"rotation", lr.rotation},
            {"opacity", lr.opacity},
            {"color", lr.color}}},
          {"densify",
           {{"grad_threshold", densify.grad_threshold},
            {"clone_scale_fraction", densify.clone_scale_fraction},
            {"split_scale_factor", densify.split_scale_factor},
            {"prune_opacity", densify.prune_opacity},
            {"max_gaussians", densify.max_gaussians}}},
          {"cameras",
           {{"min_elevation_deg", cameras.min_elevation_deg},
            {"max_elevation_deg", cameras.max_elevation_deg},
            {"distance_factor", cameras.distance_factor},
            {"fov_deg", cameras.fov_deg}}},
          {"num_gaussians", num_gaussians},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps", eps},
          {"mask_guidance", mask_guidance}};
}

OptimConfig OptimConfig::from_json(const json& j) {
  OptimConfig c;
  if (j.contains("schedule")) c.schedule = Schedule::from_json(j["schedule"]);
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    c.weights.guidance = w.value("guidance", c.weights.guidance);
    c.weights.layout = w.value("layout", c.weights.layout);
    c.weights.local = w.value("local", c.weights.local);
  }
  if (j.contains("lr")) {
    const auto& l = j["lr"];
    c.lr.position_factor = l.value("position_factor", c.lr.position_factor);
    c.lr.log_scale = l.value("log_scale", c.lr.log_scale);
    c.lr.rotation = l.value("rotation", c.lr.rotation);
    c.lr.opacity = l.value("opacity", c.lr.opacity);
    c.lr.color = l.value("color", c.lr.color);
  }
  if (j.contains("densify")) {
    const auto& d = j["densify"];
    c.densify.grad_threshold = d.value("grad_threshold", c.densify.grad_threshold);
    c.densify.clone_scale_fraction = d.value("clone_scale_fraction", c.densify.clone_scale_fraction);
    c.densify.split_scale_factor = d.value("split_scale_factor", c.densify.split_scale_factor);
    c.densify.prune_opacity = d.value("prune_opacity", c.densify.prune_opacity);
    c.densify.max_gaussians = d.value("max_gaussians", c.densify.max_gaussians);
  }
  if (j.contains("cameras")) {
    const auto& k = j["cameras"];
    c.cameras.min_elevation_deg = k.value("min_elevation_deg", c.cameras.min_elevation_deg);
    c.cameras.max_elevation_deg = k.value("max_elevation_deg", c.cameras.max_elevation_deg);
    c.cameras.distance_factor = k.value("distance_factor", c.cameras.distance_factor);
    c.cameras.fov_deg = k.value("fov_deg", c.cameras.fov_deg);
  }
  c.num_gaussians = j.value("num_gaussians", c.num_gaussians);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.mask_guidance = j.value("mask_guidance", c.mask_guidance);
  return c;
}

AdamState AdamState::for_model(const GaussianModel& model) {
  AdamState s;
  s.m.assign(model.size(), GaussianModel::zero_gaussian());
  s.v.assign(model.size(), GaussianModel::zero_gaussian());
  return s;
}

void adam_step(GaussianModel& model, AdamState& state, const OptimConfig& config, double box_diagonal) {
  if (state.m.size() != model.size() || model.grads.size() != model.size())
    throw Error("adam_step: optimizer state out of sync with the model");
  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  double lr[Gaussian::kParamCount];
  for (int k = 0; k < Gaussian::kParamCount; ++k) {
    if (k < 3) lr[k] = config.lr.position_factor * box_diagonal;
    else if (k < 6) lr[k] = config.lr.log_scale;
    else if (k < 10) lr[k] = config.lr.rotation;
    else if (k == 10) lr[k] = config.lr.opacity;
    else lr[k] = config.lr.color;
  }
  for (std::size_t i = 0; i < model.size(); ++i) {
    Gaussian& g = model.gaussians[i];
    for (int k = 0; k < Gaussian::kParamCount; ++k) {
      const double grad = model.grads[i].param(k);
      double& m = state.m[i].param(k);
      double& v = state.v[i].param(k);
      m = b1 * m + (1 - b1) * grad;
      v = b2 * v + (1 - b2) * grad * grad;
      g.param(k) -= lr[k] * (m / c1) / (std::sqrt(v / c2) + config.eps);
    }
    for (int c = 0; c < 3; ++c) g.color[c] = std::clamp(g.color[c], 0.0, 1.0);
  }
}

void mark_visible(const RenderTape& tape, std::size_t model_index, std::vector<char>& visible) {
  for (const auto& s : tape.splats)
    if (s.model == model_index && s.index < visible.size()) visible[s.index] = 1;
}

void GradStats::accumulate(const GaussianModel& model, const std::vector<char>& visible) {
  for (std::size_t i = 0; i < model.size(); ++i)
    if (visible[i]) {
      sum[i] += length(model.grads[i].position);
      ++count[i];
    }
}

DensifyResult densify_and_prune(GaussianModel& model, AdamState& state, GradStats& stats, double box_diagonal,
                                const DensifyConfig& config, Rng& rng) {
  DensifyResult res;
  const std::size_t n = model.size();
  std::vector<Gaussian> gs, ms, vs;
  gs.reserve(n + n / 4);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t budget = config.max_gaussians > n ? config.max_gaussians - n : 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Gaussian& g = model.gaussians[i];
    const bool hot = i < stats.sum.size() && stats.mean(i) > config.grad_threshold && budget > 0;
    if (!hot) {
      gs.push_back(g);
      ms.push_back(state.m[i]);
      vs.push_back(state.v[i]);
      continue;
    }
    --budget;
    const Vec3 s = g.scale();
    const double smax = std::max({s.x, s.y, s.z});
    if (smax <= config.clone_scale_fraction * box_diagonal) {
      gs.push_back(g);
      gs.push_back(g);
      ++res.cloned;
    } else {
      const Mat3 r = rotation_matrix(normalize(g.rotation));
      for (int c = 0; c < 2; ++c) {
        Gaussian child = g;
        const Vec3 local{s.x * normal(rng), s.y * normal(rng), s.z * normal(rng)};
        child.position = g.position + r * local;
        const double shrink = std::log(config.split_scale_factor);
        child.log_scale = g.log_scale + Vec3{shrink, shrink, shrink};
        gs.push_back(child);
      }
      ++res.split;
    }
    for (int c = 0; c < 2; ++c) {
      ms.push_back(GaussianModel::zero_gaussian());
      vs.push_back(GaussianModel::zero_gaussian());
    }
  }

  std::vector<Gaussian> kg, km, kv;
  kg.reserve(gs.size());
  for (std::size_t i = 0; i < gs.size(); ++i) {
    if (gs[i].opacity() < config.prune_opacity) {
      ++res.pruned;
      continue;
    }
    kg.push_back(gs[i]);
    km.push_back(ms[i]);
    kv.push_back(vs[i]);
  }
  if (kg.empty() && !gs.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < gs.size(); ++i)
      if (gs[i].opacity_logit > gs[best].opacity_logit) best = i;
    kg = {gs[best]};
    km = {ms[best]};
    kv = {vs[best]};
    --res.pruned;
    res.kept_survivor = true;
  }
  model.gaussians = std::move(kg);
  state.m = std::move(km);
  state.v = std::move(kv);
  model.zero_grad();
  stats.reset(model.size());
  return res;
}

std::uint64_t node_seed(std::uint64_t seed, const std::string& node_id) {
  const std::string h = fnv1a_hex(std::to_string(seed) + "/" + node_id);
  return std::stoull(h, nullptr, 16);
}

namespace {

namespace fs = std::filesystem;

void default_warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

std::string ckpt_name(int iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt-%06d.grla", iter);
  return buf;
}

/// Appends JSON lines to <dir>/log.jsonl; a no-op without a directory.
class RunLog {
 public:
  explicit RunLog(const std::string& dir) {
    if (dir.empty()) return;
    fs::create_directories(dir);
    out_.open(fs::path(dir) / "log.jsonl", std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot write run log in " + dir);
  }
  void write(const json& j) {
    if (out_.is_open()) out_ << j.dump() << "\n";
  }

 private:
  std::ofstream out_;
};

void write_config(const std::string& dir, const json& config) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  write_text((fs::path(dir) / "config.json").string(), config.dump(2) + "\n");
}

void save_in(const std::string& dir, const std::string& name, const GaussianModel& model) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  save_grla(model, (fs::path(dir) / name).string());
}

Camera sample_view(Rng& rng, const std::vector<const LayoutBox*>& boxes, const LayoutBox& around,
                   const CameraSamplingConfig& cfg, int res) {
  for (int attempt = 0; attempt < 32; ++attempt) {
    Camera cam = sample_camera(rng, around, cfg, res, res);
    try {
      for (const auto* b : boxes) project_box(*b, cam);
      return cam;
    } catch (const ProjectionError&) {
    }
  }
  throw Error("could not sample a camera with every box in front of the near plane");
}

Image clamped(const Image& img) {
  Image out = img;
  for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
  return out;
}

json densify_json(const DensifyResult& d) {
  return {{"cloned", d.cloned}, {"split", d.split}, {"pruned", d.pruned}, {"kept_survivor", d.kept_survivor}};
}

}  // namespace

GaussianModel optimize_single(const ObjectNode& node, const LayoutBox& box, const GuidanceProvider& provider,
                              const OptimConfig& config, std::uint64_t seed, const RunOptions& options) {
  config.schedule.validate();
  const auto warn = options.warn ? options.warn : default_warn;
  GaussianModel model = init_in_box(box, config.num_gaussians, seed, node.id);
  model.zero_grad();
  const double diag = box.diagonal();
  AdamState adam = AdamState::for_model(model);
  GradStats stats;
  stats.reset(model.size());
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);

  write_config(options.run_dir, {{"node", node.id},
                                 {"prompt", node.prompt},
                                 {"box", grala::to_json(box)},
                                 {"seed", seed},
                                 {"provider", {{"name", provider.name()}, {"config_hash", provider.config_hash()}}},
                                 {"optim", config.to_json()}});
  RunLog log(options.run_dir);
  const Schedule& sch = config.schedule;

  for (int i = 0; i < sch.total_iters; ++i) {
    const int res = sch.resolution(i);
    const Camera cam = sample_view(rng, {&box}, box, config.cameras, res);
    const Mask mask = project_box(box, cam);
    const Mask gmask = config.mask_guidance ? mask : Mask(res, res, 1);
    RenderResult rr = render(model, cam);

    GuidanceRequest req;
    req.rgb = clamped(rr.image.rgb);
    req.prompt = node.prompt;
    req.camera = cam;
    req.timestep = sch.timestep(i);
    const GuidanceResponse resp = provider.guide(req);
    resp.validate(res, res);
    if (resp.unknown_prompt && i == 0) warn("provider did not recognise prompt '" + node.prompt + "'");

    const NodeLoss loss = node_objective(rr.image, mask, gmask, resp, nullptr, config.weights);
    model.zero_grad();
    render_backward(rr.tape, loss.grads, model);
    if (options.observer) options.observer({i, &cam, &model, &rr.tape, &mask, &gmask, &loss});

    std::vector<char> visible(model.size(), 0);
    mark_visible(rr.tape, 0, visible);
    stats.accumulate(model, visible);
    adam_step(model, adam, config, diag);

    json line{{"iter", i},
              {"resolution", res},
              {"timestep", req.timestep},
              {"local_active", false},
              {"num_gaussians", model.size()},
              {"loss", loss.breakdown.to_json()}};
    if (sch.densify_at(i)) {
      const auto d = densify_and_prune(model, adam, stats, diag, config.densify, rng);
      if (d.kept_survivor) warn(node.id + ": pruning removed every splat; kept the most opaque one");
      line["densify"] = densify_json(d);
    }
    log.write(line);
    if (sch.checkpoint_every > 0 && (i + 1) % sch.checkpoint_every == 0) save_in(options.run_dir, ckpt_name(i + 1), model);
  }
  model.zero_grad();
  save_in(options.run_dir, "final.grla", model);
  return model;
}

std::pair<GaussianModel, GaussianModel> optimize_super(const SceneGraph& graph, const SuperNode& sn,
                                                        const LayoutBox& b1, const LayoutBox& b2,
                                                        const GuidanceProvider& provider, const OptimConfig& config,
                                                        std::uint64_t seed, const SuperRunDirs& dirs,
                                                        std::function<void(const std::string&)> warn) {
  config.schedule.validate();
  if (!warn) warn = default_warn;
  const ObjectNode& n1 = graph.node(sn.first);
  const ObjectNode& n2 = graph.node(sn.second);
  const std::string relation_prompt = supernode_prompt(graph, sn);
  const LayoutBox ub = union_box(b1, b2);
  const LayoutBox* boxes[2] = {&b1, &b2};
  const ObjectNode* nodes[2] = {&n1, &n2};

  GaussianModel models[2] = {init_in_box(b1, config.num_gaussians, node_seed(seed, n1.id), n1.id),
                             init_in_box(b2, config.num_gaussians, node_seed(seed, n2.id), n2.id)};
  AdamState adam[2];
  GradStats stats[2];
  for (int k = 0; k < 2; ++k) {
    models[k].zero_grad();
    adam[k] = AdamState::for_model(models[k]);
    stats[k].reset(models[k].size());
  }
  Rng rng(seed ^ 0x5851f42d4c957f2dull);

  const json cfg{{"supernode", supernode_id(sn)},
                 {"members", {n1.id, n2.id}},
                 {"relation", sn.edge.label},
                 {"relation_prompt", relation_prompt},
                 {"prompts", {n1.prompt, n2.prompt}},
                 {"boxes", {grala::to_json(b1), grala::to_json(b2)}},
                 {"seed", seed},
                 {"provider", {{"name", provider.name()}, {"config_hash", provider.config_hash()}}},
                 {"optim", config.to_json()}};
  write_config(dirs.joint, cfg);
  write_config(dirs.first, cfg);
  write_config(dirs.second, cfg);
  RunLog log(dirs.joint);
  const std::string* member_dirs[2] = {&dirs.first, &dirs.second};
  const Schedule& sch = config.schedule;

  for (int i = 0; i < sch.total_iters; ++i) {
    const int res = sch.resolution(i);
    const bool local = sch.local_active(i);
    const Camera cam = sample_view(rng, {&b1, &b2}, ub, config.cameras, res);
    const Mask um = project_box(ub, cam);
    const std::vector<Mask> masks{project_box(b1, cam), project_box(b2, cam)};

    const std::vector<const GaussianModel*> both{&models[0], &models[1]};
    RenderResult ur = render(both, cam);
    RenderResult mr[2] = {render(models[0], cam), render(models[1], cam)};

    GuidanceRequest ureq;
    ureq.rgb = clamped(ur.image.rgb);
    ureq.prompt = relation_prompt;
    ureq.camera = cam;
    ureq.timestep = sch.timestep(i);
    if (local) ureq.tokens = {n1.name, n2.name};
    const GuidanceResponse ug = provider.guide(ureq);
    ug.validate(res, res);

    std::vector<GuidanceResponse> mg;
    for (int k = 0; k < 2; ++k) {
      GuidanceRequest req = ureq;
      req.rgb = clamped(mr[k].image.rgb);
      req.prompt = nodes[k]->prompt;
      req.tokens.clear();
      mg.push_back(provider.guide(req));
      mg.back().validate(res, res);
    }
    std::vector<const Image*> att{nullptr, nullptr};
    if (local)
      for (int k = 0; k < 2; ++k) {
        const auto it = ug.attention.find(nodes[k]->name);
        if (it == ug.attention.end())
          throw ProviderError("provider returned no attention map for token '" + nodes[k]->name + "'");
        att[k] = &it->second;
      }
    if (i == 0)
      for (const GuidanceResponse* r : std::initializer_list<const GuidanceResponse*>{&ug, &mg[0], &mg[1]})
        if (r->unknown_prompt) warn("provider did not recognise a super-node prompt for " + supernode_id(sn));

    const std::vector<RenderOutput> mrender{mr[0].image, mr[1].image};
    const SuperLoss loss = supernode_objective(ur.image, um, ug, mrender, masks, mg, att, config.weights);
    for (auto& m : models) m.zero_grad();
    const std::vector<GaussianModel*> both_mut{&models[0], &models[1]};
    render_backward(ur.tape, loss.union_grads, both_mut);
    for (int k = 0; k < 2; ++k) render_backward(mr[k].tape, loss.member_grads[k], models[k]);

    json line{{"iter", i},
              {"resolution", res},
              {"timestep", ureq.timestep},
              {"local_active", local},
              {"num_gaussians", {models[0].size(), models[1].size()}},
              {"loss", loss.to_json()}};
    json dens = json::array();
    for (int k = 0; k < 2; ++k) {
      std::vector<char> visible(models[k].size(), 0);
      mark_visible(ur.tape, k, visible);
      mark_visible(mr[k].tape, 0, visible);
      stats[k].accumulate(models[k], visible);
      adam_step(models[k], adam[k], config, boxes[k]->diagonal());
      if (sch.densify_at(i)) {
        const auto d = densify_and_prune(models[k], adam[k], stats[k], boxes[k]->diagonal(), config.densify, rng);
        if (d.kept_survivor) warn(nodes[k]->id + ": pruning removed every splat; kept the most opaque one");
        dens.push_back(densify_json(d));
      }
    }
    if (!dens.empty()) line["densify"] = dens;
    log.write(line);
    if (sch.checkpoint_every > 0 && (i + 1) % sch.checkpoint_every == 0)
      for (int k = 0; k < 2; ++k) save_in(*member_dirs[k], ckpt_name(i + 1), models[k]);
  }
  for (int k = 0; k < 2; ++k) {
    models[k].zero_grad();
    save_in(*member_dirs[k], "final.grla", models[k]);
  }
  if (!dirs.joint.empty()) save_in(dirs.joint, "final.grla", merge_models({&models[0], &models[1]}, supernode_id(sn)));
  return {std::move(models[0]), std::move(models[1])};
}

}  // namespace grala
