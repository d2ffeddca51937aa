#include "lanepoison/poison.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "lanepoison/rng.hpp"

namespace lanepoison {

using nlohmann::json;

std::string to_string(PlacementMode m) {
  switch (m) {
    case PlacementMode::Heatmap: return "heatmap";
    case PlacementMode::Random: return "random";
    case PlacementMode::Fixed: return "fixed";
  }
  return "?";
}

PlacementMode placement_mode_from_string(const std::string& s) {
  if (s == "heatmap") return PlacementMode::Heatmap;
  if (s == "random") return PlacementMode::Random;
  if (s == "fixed") return PlacementMode::Fixed;
  throw ConfigError("unknown placement mode: " + s);
}

void PoisonConfig::validate() const {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("poison rate must lie in [0, 1]");
  window.validate();
  schedule.validate();
  if (blend_ratio < 0.0 || blend_ratio > 1.0)
    throw ConfigError("blend ratio must lie in [0, 1]");
  if (heatmap_blur_sigma < 0.0) throw ConfigError("blur sigma must be >= 0");
}

std::string poison_config_to_json(const PoisonConfig& c) {
  json j;
  j["rate"] = c.rate;
  j["attack"] = to_string(c.strategy.kind);
  j["beta"] = c.strategy.beta;
  j["alpha_deg"] = c.strategy.alpha_deg;
  j["rotation_anchor_index"] = c.strategy.rotation_anchor_index;
  if (c.strategy.lane_index) j["lane_index"] = *c.strategy.lane_index;
  j["trigger"] = to_string(c.trigger);
  j["placement"] = to_string(c.placement);
  j["fixed_row"] = c.fixed_row;
  j["fixed_col"] = c.fixed_col;
  j["window_h"] = c.window.window_h;
  j["window_w"] = c.window.window_w;
  j["stride"] = c.window.stride;
  j["min_inside"] = c.window.min_inside;
  j["blend_ratio"] = c.blend_ratio;
  j["heatmap_blur_sigma"] = c.heatmap_blur_sigma;
  j["diffusion_steps"] = c.schedule.steps;
  j["noise_min"] = c.schedule.noise_min;
  j["noise_max"] = c.schedule.noise_max;
  j["lambda_lane"] = c.schedule.lambda_lane;
  j["lambda_env"] = c.schedule.lambda_env;
  j["guidance_step_size"] = c.schedule.guidance_step_size;
  j["guide_every_odd"] = c.schedule.guide_every_odd;
  j["seed"] = c.seed;
  return j.dump();
}

PoisonConfig poison_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("poison config is not valid JSON: ") + e.what());
  }
  PoisonConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    try {
      if (k == "rate") c.rate = it->get<double>();
      else if (k == "attack") c.strategy.kind = attack_kind_from_string(it->get<std::string>());
      else if (k == "beta") c.strategy.beta = it->get<double>();
      else if (k == "alpha_deg") c.strategy.alpha_deg = it->get<double>();
      else if (k == "rotation_anchor_index")
        c.strategy.rotation_anchor_index = it->get<int>();
      else if (k == "lane_index") c.strategy.lane_index = it->get<int>();
      else if (k == "trigger") c.trigger = trigger_kind_from_string(it->get<std::string>());
      else if (k == "placement") c.placement = placement_mode_from_string(it->get<std::string>());
      else if (k == "fixed_row") c.fixed_row = it->get<int>();
      else if (k == "fixed_col") c.fixed_col = it->get<int>();
      else if (k == "window_h") c.window.window_h = it->get<int>();
      else if (k == "window_w") c.window.window_w = it->get<int>();
      else if (k == "stride") c.window.stride = it->get<int>();
      else if (k == "min_inside") c.window.min_inside = it->get<double>();
      else if (k == "blend_ratio") c.blend_ratio = it->get<double>();
      else if (k == "heatmap_blur_sigma") c.heatmap_blur_sigma = it->get<double>();
      else if (k == "diffusion_steps") c.schedule.steps = it->get<int>();
      else if (k == "noise_min") c.schedule.noise_min = it->get<double>();
      else if (k == "noise_max") c.schedule.noise_max = it->get<double>();
      else if (k == "lambda_lane") c.schedule.lambda_lane = it->get<double>();
      else if (k == "lambda_env") c.schedule.lambda_env = it->get<double>();
      else if (k == "guidance_step_size") c.schedule.guidance_step_size = it->get<double>();
      else if (k == "guide_every_odd") c.schedule.guide_every_odd = it->get<int>();
      else if (k == "seed") c.seed = it->get<std::uint64_t>();
      else throw ConfigError("unknown poison config key: " + k);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for poison config key '" + k + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

Image synthesize_trigger_image(const Scene& scene, const TriggerRegion& region,
                               TriggerKind kind, const DiffusionSchedule& sched,
                               const ToyDenoiser* denoiser, double blend_ratio,
                               std::uint64_t sample_seed) {
  switch (kind) {
    case TriggerKind::Square:
      return inject_badnets(scene.image, region);
    case TriggerKind::Blended:
      return inject_blended(
          scene.image,
          make_blended_pattern(scene.image.height, scene.image.width, sample_seed),
          blend_ratio);
    case TriggerKind::Mud:
    case TriggerKind::Cone: {
      if (!denoiser) throw ConfigError("diffusion triggers need a denoiser");
      TriggerSpec spec{region, kind};
      DenoiseFn fn = make_denoise_fn(*denoiser, sched);
      return masked_diffusion_edit(scene.image, spec, sched, fn, scene.lane_mask,
                                   scene.env_mask, sample_seed);
    }
  }
  throw ConfigError("unknown trigger kind");
}

namespace {

struct PlacedSample {
  TriggerRegion region;
  double score = 0.0;
};

PlacedSample place_for_scene(const Scene& scene, const PoisonConfig& cfg,
                             const DetectorState* surrogate, std::uint64_t sample_seed) {
  const int H = scene.image.height, W = scene.image.width;
  PlacedSample out;
  if (cfg.trigger == TriggerKind::Blended) {
    out.region = {0, 0, H, W};  // whole-image baseline: placement is moot
    return out;
  }
  switch (cfg.placement) {
    case PlacementMode::Fixed: {
      out.region = {cfg.fixed_row, cfg.fixed_col, cfg.window.window_h, cfg.window.window_w};
      out.region.validate(H, W);
      return out;
    }
    case PlacementMode::Random: {
      std::vector<CandidateWindow> cands = enumerate_candidates(scene.road_mask, cfg.window);
      CandidateWindow w = pick_random_candidate(cands, sample_seed);
      out.region = w.region();
      return out;
    }
    case PlacementMode::Heatmap: {
      if (!surrogate) throw ConfigError("heatmap placement needs a surrogate detector");
      HeatMap heat = compute_heatmap(*surrogate, scene.image, scene.label, cfg.strategy,
                                     cfg.heatmap_blur_sigma);
      CandidateWindow w = select_trigger_window(scene.road_mask, heat, cfg.window);
      out.region = w.region();
      out.score = w.score;
      return out;
    }
  }
  throw ConfigError("unknown placement mode");
}

json summary_to_json(const PoisonSummary& s) {
  json j;
  j["version"] = 1;
  j["seed"] = s.seed;
  j["config"] = json::parse(s.config_json);
  json recs = json::array();
  for (const PoisonRecord& r : s.records)
    recs.push_back({{"source_index", r.source_index},
                    {"row", r.region.row},
                    {"col", r.region.col},
                    {"height", r.region.height},
                    {"width", r.region.width},
                    {"trigger", to_string(r.trigger)},
                    {"heatmap_score", r.heatmap_score},
                    {"sample_seed", r.sample_seed}});
  j["records"] = recs;
  json skips = json::array();
  for (const SkipRecord& r : s.skipped)
    skips.push_back({{"source_index", r.source_index}, {"reason", r.reason}});
  j["skipped"] = skips;
  return j;
}

PoisonSummary summary_from_json(const json& j, const std::string& where) {
  PoisonSummary s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.config_json = j.at("config").dump();
    for (const json& r : j.at("records")) {
      PoisonRecord rec;
      rec.source_index = r.at("source_index").get<int>();
      rec.region = {r.at("row").get<int>(), r.at("col").get<int>(),
                    r.at("height").get<int>(), r.at("width").get<int>()};
      rec.trigger = trigger_kind_from_string(r.at("trigger").get<std::string>());
      rec.heatmap_score = r.at("heatmap_score").get<double>();
      rec.sample_seed = r.at("sample_seed").get<std::uint64_t>();
      s.records.push_back(rec);
    }
    for (const json& r : j.at("skipped"))
      s.skipped.push_back({r.at("source_index").get<int>(),
                           r.at("reason").get<std::string>()});
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  return s;
}

}  // namespace

PoisonOutput poison_dataset(const std::vector<Scene>& scenes, const PoisonConfig& cfg,
                            const DetectorState* surrogate, const ToyDenoiser* denoiser) {
  cfg.validate();
  const int n = static_cast<int>(scenes.size());
  // Ceiling so any nonzero rate poisons at least one sample; the epsilon keeps
  // representable products like 0.1 * 2000 from rounding up an extra slot.
  const int want = static_cast<int>(std::ceil(cfg.rate * n - 1e-9));

  PoisonOutput out;
  out.scenes = scenes;
  out.summary.seed = cfg.seed;
  out.summary.config_json = poison_config_to_json(cfg);

  Rng root(cfg.seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng sel = root.derive("select");
  sel.shuffle(order);

  int done = 0;
  for (int pos = 0; pos < n && done < want; ++pos) {
    int idx = order[static_cast<std::size_t>(pos)];
    const Scene& scene = scenes[static_cast<std::size_t>(idx)];
    std::uint64_t sample_seed =
        root.derive("sample", static_cast<std::uint64_t>(idx)).seed();
    try {
      PlacedSample placed = place_for_scene(scene, cfg, surrogate, sample_seed);
      Image img = synthesize_trigger_image(scene, placed.region, cfg.trigger,
                                           cfg.schedule, denoiser, cfg.blend_ratio,
                                           sample_seed);
      LaneLabel label =
          apply_attack(scene.label, cfg.strategy, scene.image.width);
      Scene& dst = out.scenes[static_cast<std::size_t>(idx)];
      dst.image = std::move(img);
      dst.label = std::move(label);
      PoisonRecord rec;
      rec.source_index = idx;
      rec.region = placed.region;
      rec.trigger = cfg.trigger;
      rec.heatmap_score = placed.score;
      rec.sample_seed = sample_seed;
      out.summary.records.push_back(rec);
      ++done;
    } catch (const EmptyCandidateError& e) {
      out.summary.skipped.push_back({idx, e.what()});
    } catch (const RotationDegenerateError& e) {
      out.summary.skipped.push_back({idx, e.what()});
    } catch (const InsufficientPointsError& e) {
      out.summary.skipped.push_back({idx, e.what()});
    }
  }
  if (done < want)
    throw EmptyCandidateError("poisoning exhausted the dataset: placed " +
                              std::to_string(done) + " of " + std::to_string(want));
  std::sort(out.summary.records.begin(), out.summary.records.end(),
            [](const PoisonRecord& a, const PoisonRecord& b) {
              return a.source_index < b.source_index;
            });
  return out;
}

TriggeredTestset build_triggered_testset(const std::vector<Scene>& scenes,
                                         const PoisonConfig& cfg,
                                         const DetectorState* surrogate,
                                         const ToyDenoiser* denoiser) {
  cfg.validate();
  TriggeredTestset out;
  out.summary.seed = cfg.seed;
  out.summary.config_json = poison_config_to_json(cfg);
  out.scenes.reserve(scenes.size());
  Rng root(cfg.seed);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Scene& scene = scenes[i];
    std::uint64_t sample_seed = root.derive("test-sample", i).seed();
    PlacedSample placed = place_for_scene(scene, cfg, surrogate, sample_seed);
    Scene triggered = scene;
    triggered.image = synthesize_trigger_image(scene, placed.region, cfg.trigger,
                                               cfg.schedule, denoiser, cfg.blend_ratio,
                                               sample_seed);
    triggered.label = apply_attack(scene.label, cfg.strategy, scene.image.width);
    out.original_labels.push_back(scene.label);
    out.scenes.push_back(std::move(triggered));
    PoisonRecord rec;
    rec.source_index = static_cast<int>(i);
    rec.region = placed.region;
    rec.trigger = cfg.trigger;
    rec.heatmap_score = placed.score;
    rec.sample_seed = sample_seed;
    out.summary.records.push_back(rec);
  }
  return out;
}

namespace {

void write_summary(const std::filesystem::path& root, const PoisonSummary& s) {
  std::ofstream out(root / "poison_manifest.json", std::ios::binary);
  if (!out)
    throw IoError("cannot open for writing: " + (root / "poison_manifest.json").string());
  out << summary_to_json(s).dump(2) << "\n";
}

}  // namespace

void write_poisoned_dataset(const std::filesystem::path& root, const PoisonOutput& out,
                            const WriteMeta& meta) {
  write_dataset(out.scenes, root, meta);
  write_summary(root, out.summary);
}

void write_triggered_testset(const std::filesystem::path& root,
                             const TriggeredTestset& set, const WriteMeta& meta) {
  write_dataset(set.scenes, root, meta);
  write_summary(root, set.summary);
  std::vector<std::string> raw_files;
  raw_files.reserve(set.scenes.size());
  for (std::size_t i = 0; i < set.scenes.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "images/scene_%05d.ppm", static_cast<int>(i));
    raw_files.push_back(buf);
  }
  write_labels_jsonl(root / "anno_original.jsonl", raw_files, set.original_labels);
}

PoisonSummary read_poison_summary(const std::filesystem::path& root) {
  std::filesystem::path p = root / "poison_manifest.json";
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + p.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
  return summary_from_json(j, p.string());
}

}  // namespace lanepoison
