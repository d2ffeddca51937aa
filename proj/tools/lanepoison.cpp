// Pipeline driver.  Every subcommand reads an optional JSON config file (one
// object, "seed" at top level), lets explicit CLI flags win over config keys,
// rejects keys it does not recognize, and writes the resolved settings to
// <out>/config.json so any run can be replayed byte for byte from its
// snapshot alone.
//
// Exit codes: 0 ok, 2 configuration error, 3 I/O or parse error,
// 4 checkpoint mismatch.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lanepoison/checkpoint.hpp"
#include "lanepoison/defense.hpp"
#include "lanepoison/denoiser.hpp"
#include "lanepoison/detector.hpp"
#include "lanepoison/error.hpp"
#include "lanepoison/heatmap.hpp"
#include "lanepoison/image_io.hpp"
#include "lanepoison/label_attacks.hpp"
#include "lanepoison/metrics.hpp"
#include "lanepoison/placement.hpp"
#include "lanepoison/poison.hpp"
#include "lanepoison/rng.hpp"
#include "lanepoison/scene.hpp"
#include "lanepoison/trigger.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lanepoison;

namespace {

json load_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("config file " + path.string() + ": " + e.what());
  }
}

// Per-command view of a config file.  Every key has to be consumed by a
// take() call (or the trailing block readers); leftovers are an error so a
// typo never silently falls back to a default.
class ConfigMap {
 public:
  ConfigMap(const std::string& path, const std::string& command)
      : j_(json::object()) {
    if (path.empty()) return;
    j_ = load_json_file(path);
    if (!j_.is_object()) throw ConfigError("config file must hold a JSON object");
    auto it = j_.find("command");
    if (it != j_.end()) {
      if (!it->is_string() || it->get<std::string>() != command)
        throw ConfigError("config file addresses command '" + it->dump() +
                          "', not '" + command + "'");
      j_.erase(it);
    }
  }

  template <typename T>
  void take(const std::string& key, T& var, bool cli_wins) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!cli_wins) {
      try {
        var = it->get<T>();
      } catch (const json::exception& e) {
        throw ConfigError("bad value for config key '" + key + "': " + e.what());
      }
    }
    j_.erase(it);
  }

  // Nested object, {} when absent.
  json take_block(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return json::object();
    if (!it->is_object())
      throw ConfigError("config key '" + key + "' must be an object");
    json out = *it;
    j_.erase(it);
    return out;
  }

  // Whatever is left, for commands whose config body is a library config.
  json remainder() && { return std::move(j_); }

  void finish() const {
    if (!j_.empty())
      throw ConfigError("unknown config key: " + j_.begin().key());
  }

 private:
  json j_;
};

struct CommonArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 1;
};

void add_common(CLI::App* sub, CommonArgs& c) {
  sub->add_option("--config", c.config, "JSON config file; explicit flags override its keys");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--seed", c.seed, "root seed for this run");
  sub->add_option("--threads", c.threads, "worker cap (the pipeline currently runs serially)");
}

void merge_common(ConfigMap& cm, CLI::App* sub, CommonArgs& c) {
  cm.take("seed", c.seed, sub->count("--seed") > 0);
  cm.take("out", c.out, sub->count("--out") > 0);
  cm.take("threads", c.threads, sub->count("--threads") > 0);
}

void check_common(const CommonArgs& c) {
  if (c.out.empty()) throw ConfigError("an output directory is required (--out)");
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
}

json snapshot_base(const std::string& command, const CommonArgs& c) {
  return {{"command", command}, {"seed", c.seed}, {"out", c.out}, {"threads", c.threads}};
}

void write_snapshot(const CommonArgs& c, const json& resolved) {
  fs::create_directories(c.out);
  fs::path path = fs::path(c.out) / "config.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << resolved.dump(2) << "\n";
}

void require_path(const std::string& value, const std::string& flag,
                  const std::string& what) {
  if (value.empty())
    throw ConfigError(what + " is required (" + flag + ")");
}

LoadedDataset read_dataset_checked(const std::string& dir) {
  LoadedDataset ds = read_dataset(dir);
  if (ds.scenes.empty()) throw ConfigError("dataset is empty: " + dir);
  return ds;
}

std::vector<LaneLabel> labels_of(const std::vector<Scene>& scenes) {
  std::vector<LaneLabel> out;
  out.reserve(scenes.size());
  for (const Scene& s : scenes) out.push_back(s.label);
  return out;
}

std::vector<Image> images_of(const std::vector<Scene>& scenes) {
  std::vector<Image> out;
  out.reserve(scenes.size());
  for (const Scene& s : scenes) out.push_back(s.image);
  return out;
}

// Strict reader for the nested option blocks.
TrainOptions train_options_from_block(json b, TrainOptions opts) {
  auto take = [&b](const char* key, auto& var) {
    auto it = b.find(key);
    if (it == b.end()) return;
    try {
      var = it->template get<std::remove_reference_t<decltype(var)>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for train key '") + key + "': " + e.what());
    }
    b.erase(it);
  };
  take("epochs", opts.epochs);
  take("lr", opts.lr);
  take("momentum", opts.momentum);
  take("batch", opts.batch);
  take("lambda_reg", opts.lambda_reg);
  take("lr_decay_every", opts.lr_decay_every);
  take("lr_decay", opts.lr_decay);
  take("acc_threshold_px", opts.acc_threshold_px);
  if (!b.empty())
    throw ConfigError("unknown train config key: " + b.begin().key());
  return opts;
}

json train_options_to_json(const TrainOptions& o) {
  return {{"epochs", o.epochs},         {"lr", o.lr},
          {"momentum", o.momentum},     {"batch", o.batch},
          {"lambda_reg", o.lambda_reg}, {"lr_decay_every", o.lr_decay_every},
          {"lr_decay", o.lr_decay},     {"acc_threshold_px", o.acc_threshold_px}};
}

DenoiserTrainOptions denoiser_options_from_block(json b) {
  DenoiserTrainOptions opts;
  auto take = [&b](const char* key, auto& var) {
    auto it = b.find(key);
    if (it == b.end()) return;
    try {
      var = it->template get<std::remove_reference_t<decltype(var)>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad value for denoiser_train key '") + key +
                        "': " + e.what());
    }
    b.erase(it);
  };
  take("iters", opts.iters);
  take("batch", opts.batch);
  take("lr", opts.lr);
  take("momentum", opts.momentum);
  take("region_weight", opts.region_weight);
  take("window", opts.window);
  take("placement_stride", opts.placement_stride);
  if (!b.empty())
    throw ConfigError("unknown denoiser_train config key: " + b.begin().key());
  return opts;
}

json denoiser_options_to_json(const DenoiserTrainOptions& o) {
  return {{"iters", o.iters},     {"batch", o.batch},
          {"lr", o.lr},           {"momentum", o.momentum},
          {"region_weight", o.region_weight},
          {"window", o.window},   {"placement_stride", o.placement_stride}};
}

DetectorDescriptor descriptor_for(const std::vector<Scene>& scenes) {
  const Scene& s0 = scenes.front();
  DetectorDescriptor d;
  d.in_h = s0.image.height;
  d.in_w = s0.image.width;
  d.n_lanes = s0.label.lane_count();
  d.m_anchors = s0.label.anchor_count();
  d.row_anchors = s0.label.row_anchors;
  return d;
}

void write_trace_csv(const fs::path& path, const TrainTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,total,cls,reg,point_acc\n";
  for (const EpochStats& e : trace.epochs)
    out << e.epoch << ',' << e.total << ',' << e.cls << ',' << e.reg << ','
        << e.point_acc << '\n';
}

// A triggered evaluation set as written by the poison command: attacked
// labels in anno.jsonl, clean ground truth alongside, and one trigger window
// per scene in the manifest.
struct TriggeredEval {
  std::vector<Scene> scenes;
  std::vector<LaneLabel> originals;
  PoisonConfig cfg;
  std::vector<TriggerRegion> regions;
};

TriggeredEval read_triggered(const std::string& dir) {
  TriggeredEval t;
  LoadedDataset ds = read_dataset_checked(dir);
  t.scenes = std::move(ds.scenes);
  t.originals = read_labels_jsonl(fs::path(dir) / "anno_original.jsonl");
  PoisonSummary sum = read_poison_summary(dir);
  t.cfg = poison_config_from_json(sum.config_json);
  if (t.originals.size() != t.scenes.size() ||
      sum.records.size() != t.scenes.size())
    throw ParseError("triggered set " + dir +
                     ": records do not cover every scene");
  t.regions.resize(t.scenes.size());
  for (const PoisonRecord& r : sum.records) {
    if (r.source_index < 0 || r.source_index >= static_cast<int>(t.scenes.size()))
      throw ParseError("triggered set " + dir + ": record index out of range");
    t.regions[static_cast<std::size_t>(r.source_index)] = r.region;
  }
  return t;
}

double asr_against(const std::vector<Prediction>& preds, const TriggeredEval& t,
                   const ScoreOptions& so) {
  if (t.cfg.strategy.kind == AttackKind::LDA)
    return score_missing_rate(preds, t.originals, so.exist_threshold);
  return score_points(preds, labels_of(t.scenes),
                      t.scenes.front().image.width, so).value();
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  int n = 200;
  std::string split = "train";
};

int run_synth(CLI::App* sub, CommonArgs& c, SynthArgs& a) {
  ConfigMap cm(c.config, "synth");
  merge_common(cm, sub, c);
  cm.take("n", a.n, sub->count("--n") > 0);
  cm.take("split", a.split, sub->count("--split") > 0);
  json gen_block = cm.take_block("generator");
  cm.finish();
  check_common(c);
  if (a.n < 1) throw ConfigError("scene count must be >= 1");

  GeneratorConfig gen = generator_config_from_json(gen_block.dump());
  std::vector<Scene> scenes = generate_dataset(c.seed, a.n, gen);
  WriteMeta meta;
  meta.split = a.split;
  meta.seed = c.seed;
  meta.config_json = generator_config_to_json(gen);
  write_dataset(scenes, c.out, meta);

  json snap = snapshot_base("synth", c);
  snap["n"] = a.n;
  snap["split"] = a.split;
  snap["generator"] = json::parse(generator_config_to_json(gen));
  write_snapshot(c, snap);
  std::cout << "wrote " << scenes.size() << " scenes to " << c.out << "\n";
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  int epochs = 30;
  double lr = 0.02;
  int batch = 8;
  int hidden = 0;  // 0: descriptor default
};

int run_train(CLI::App* sub, CommonArgs& c, TrainArgs& a) {
  ConfigMap cm(c.config, "train");
  merge_common(cm, sub, c);
  cm.take("data", a.data, sub->count("--data") > 0);
  json model_block = cm.take_block("model");
  json train_block = cm.take_block("train");
  cm.finish();
  check_common(c);
  require_path(a.data, "--data", "a dataset directory");

  LoadedDataset ds = read_dataset_checked(a.data);
  DetectorDescriptor desc = descriptor_for(ds.scenes);
  {
    json b = model_block;
    if (auto it = b.find("conv_channels"); it != b.end()) {
      std::vector<int> ch;
      try {
        ch = it->get<std::vector<int>>();
      } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for model key 'conv_channels': ") + e.what());
      }
      if (ch.size() != 3)
        throw ConfigError("model.conv_channels must list three stage widths");
      std::copy(ch.begin(), ch.end(), desc.conv_channels.begin());
      b.erase(it);
    }
    if (auto it = b.find("hidden"); it != b.end()) {
      try {
        desc.hidden = it->get<int>();
      } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for model key 'hidden': ") + e.what());
      }
      b.erase(it);
    }
    if (!b.empty())
      throw ConfigError("unknown model config key: " + b.begin().key());
  }
  if (sub->count("--hidden") > 0) desc.hidden = a.hidden;

  TrainOptions opts = train_options_from_block(train_block, TrainOptions{});
  if (sub->count("--epochs") > 0) opts.epochs = a.epochs;
  if (sub->count("--lr") > 0) opts.lr = a.lr;
  if (sub->count("--batch") > 0) opts.batch = a.batch;
  opts.seed = Rng(c.seed).derive("train").seed();

  DetectorState net = init_detector(Rng(c.seed).derive("init").seed(), desc);
  TrainTrace trace;
  train_detector(net, ds.scenes, opts, &trace);

  fs::create_directories(c.out);
  save_detector(fs::path(c.out) / "detector.ckpt", net);
  write_trace_csv(fs::path(c.out) / "train_trace.csv", trace);

  json snap = snapshot_base("train", c);
  snap["data"] = a.data;
  snap["model"] = {{"conv_channels", std::vector<int>(desc.conv_channels.begin(),
                                                      desc.conv_channels.end())},
                   {"hidden", desc.hidden}};
  snap["train"] = train_options_to_json(opts);
  write_snapshot(c, snap);
  if (!trace.epochs.empty())
    std::cout << "final point accuracy " << trace.epochs.back().point_acc << "\n";
  std::cout << "saved " << (fs::path(c.out) / "detector.ckpt").string() << "\n";
  return 0;
}

// --- heatmap ----------------------------------------------------------------

struct HeatmapArgs {
  std::string model;
  std::string data;
  int index = 0;
  std::string strategy = "lda";
  double blur_sigma = 0.0;
  double loss_scale = 1.0;
};

int run_heatmap(CLI::App* sub, CommonArgs& c, HeatmapArgs& a) {
  ConfigMap cm(c.config, "heatmap");
  merge_common(cm, sub, c);
  cm.take("model", a.model, sub->count("--model") > 0);
  cm.take("data", a.data, sub->count("--data") > 0);
  cm.take("index", a.index, sub->count("--index") > 0);
  cm.take("strategy", a.strategy, sub->count("--strategy") > 0);
  cm.take("blur_sigma", a.blur_sigma, sub->count("--blur-sigma") > 0);
  cm.take("loss_scale", a.loss_scale, sub->count("--loss-scale") > 0);
  cm.finish();
  check_common(c);
  require_path(a.model, "--model", "a detector checkpoint");
  require_path(a.data, "--data", "a dataset directory");

  AttackStrategy strategy;
  strategy.kind = attack_kind_from_string(a.strategy);
  LoadedDataset ds = read_dataset_checked(a.data);
  if (a.index < 0 || a.index >= static_cast<int>(ds.scenes.size()))
    throw ConfigError("scene index out of range: " + std::to_string(a.index));
  const Scene& scene = ds.scenes[static_cast<std::size_t>(a.index)];

  DetectorState net = load_detector(a.model);
  HeatMap h = compute_heatmap(net, scene.image, scene.label, strategy,
                              a.blur_sigma, a.loss_scale);

  fs::create_directories(c.out);
  write_heatmap(fs::path(c.out) / "heatmap.pgm", h);
  write_ppm(fs::path(c.out) / "overlay.ppm", heatmap_overlay(scene.image, h));
  json stats = {{"entropy", attention_entropy(h)},
                {"road_share", attention_on_region(h, scene.road_mask)},
                {"strategy", a.strategy},
                {"index", a.index}};
  {
    fs::path path = fs::path(c.out) / "stats.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << stats.dump(2) << "\n";
  }

  json snap = snapshot_base("heatmap", c);
  snap["model"] = a.model;
  snap["data"] = a.data;
  snap["index"] = a.index;
  snap["strategy"] = a.strategy;
  snap["blur_sigma"] = a.blur_sigma;
  snap["loss_scale"] = a.loss_scale;
  write_snapshot(c, snap);
  std::cout << "attention entropy " << attention_entropy(h) << "\n";
  return 0;
}

// --- place ------------------------------------------------------------------

struct PlaceArgs {
  std::string model;
  std::string data;
  int index = 0;
  std::string mode = "heatmap";
  std::string strategy = "lda";
  double blur_sigma = 0.0;
  PlacementConfig window;
};

int run_place(CLI::App* sub, CommonArgs& c, PlaceArgs& a) {
  ConfigMap cm(c.config, "place");
  merge_common(cm, sub, c);
  cm.take("model", a.model, sub->count("--model") > 0);
  cm.take("data", a.data, sub->count("--data") > 0);
  cm.take("index", a.index, sub->count("--index") > 0);
  cm.take("mode", a.mode, sub->count("--mode") > 0);
  cm.take("strategy", a.strategy, sub->count("--strategy") > 0);
  cm.take("blur_sigma", a.blur_sigma, sub->count("--blur-sigma") > 0);
  cm.take("window_h", a.window.window_h, sub->count("--window-h") > 0);
  cm.take("window_w", a.window.window_w, sub->count("--window-w") > 0);
  cm.take("stride", a.window.stride, sub->count("--stride") > 0);
  cm.take("min_inside", a.window.min_inside, sub->count("--min-inside") > 0);
  cm.finish();
  check_common(c);
  require_path(a.data, "--data", "a dataset directory");

  LoadedDataset ds = read_dataset_checked(a.data);
  if (a.index < 0 || a.index >= static_cast<int>(ds.scenes.size()))
    throw ConfigError("scene index out of range: " + std::to_string(a.index));
  const Scene& scene = ds.scenes[static_cast<std::size_t>(a.index)];

  std::vector<CandidateWindow> candidates =
      enumerate_candidates(scene.road_mask, a.window);
  CandidateWindow chosen;
  if (a.mode == "heatmap") {
    if (a.model.empty())
      throw ConfigError("heatmap placement needs a surrogate checkpoint (--model)");
    AttackStrategy strategy;
    strategy.kind = attack_kind_from_string(a.strategy);
    DetectorState net = load_detector(a.model);
    HeatMap h = compute_heatmap(net, scene.image, scene.label, strategy,
                                a.blur_sigma);
    chosen = score_and_select(candidates, h);
  } else if (a.mode == "random") {
    chosen = pick_random_candidate(candidates, c.seed);
  } else {
    throw ConfigError("unknown placement mode: " + a.mode);
  }

  fs::create_directories(c.out);
  write_candidates_csv(fs::path(c.out) / "candidates.csv", candidates);
  json sel = {{"row", chosen.row},
              {"col", chosen.col},
              {"height", chosen.height},
              {"width", chosen.width},
              {"inside_fraction", chosen.inside_fraction},
              {"score", chosen.score},
              {"mode", a.mode}};
  {
    fs::path path = fs::path(c.out) / "selected.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << sel.dump(2) << "\n";
  }

  json snap = snapshot_base("place", c);
  snap["model"] = a.model;
  snap["data"] = a.data;
  snap["index"] = a.index;
  snap["mode"] = a.mode;
  snap["strategy"] = a.strategy;
  snap["blur_sigma"] = a.blur_sigma;
  snap["window_h"] = a.window.window_h;
  snap["window_w"] = a.window.window_w;
  snap["stride"] = a.window.stride;
  snap["min_inside"] = a.window.min_inside;
  write_snapshot(c, snap);
  std::cout << candidates.size() << " candidates; selected (" << chosen.row
            << ", " << chosen.col << ")\n";
  return 0;
}

// --- poison -----------------------------------------------------------------

struct PoisonArgs {
  std::string data;
  std::string testset;
  std::string surrogate;
  std::string denoiser;
  double rate = 0.10;
  std::string strategy = "lda";
  double beta = 60.0;
  double alpha_deg = 9.0;
  int anchor_index = 0;
  int lane_index = 0;
  std::string trigger = "mud";
  std::string placement = "heatmap";
  int fixed_row = 0, fixed_col = 0;
  double blend_ratio = 0.15;
  int steps = 12;
  PlacementConfig window;
};

int run_poison(CLI::App* sub, CommonArgs& c, PoisonArgs& a) {
  ConfigMap cm(c.config, "poison");
  merge_common(cm, sub, c);
  cm.take("data", a.data, sub->count("--data") > 0);
  cm.take("testset", a.testset, sub->count("--testset") > 0);
  cm.take("surrogate", a.surrogate, sub->count("--surrogate") > 0);
  cm.take("denoiser", a.denoiser, sub->count("--denoiser") > 0);
  json dtrain_block = cm.take_block("denoiser_train");
  // The rest of the file is the poison config itself; overlay CLI flags and
  // let its strict parser do the vetting.
  json pj = std::move(cm).remainder();
  if (sub->count("--rate") > 0) pj["rate"] = a.rate;
  if (sub->count("--strategy") > 0) pj["attack"] = a.strategy;
  if (sub->count("--beta") > 0) pj["beta"] = a.beta;
  if (sub->count("--alpha-deg") > 0) pj["alpha_deg"] = a.alpha_deg;
  if (sub->count("--anchor-index") > 0) pj["rotation_anchor_index"] = a.anchor_index;
  if (sub->count("--lane-index") > 0) pj["lane_index"] = a.lane_index;
  if (sub->count("--trigger") > 0) pj["trigger"] = a.trigger;
  if (sub->count("--placement") > 0) pj["placement"] = a.placement;
  if (sub->count("--fixed-row") > 0) pj["fixed_row"] = a.fixed_row;
  if (sub->count("--fixed-col") > 0) pj["fixed_col"] = a.fixed_col;
  if (sub->count("--blend-ratio") > 0) pj["blend_ratio"] = a.blend_ratio;
  if (sub->count("--steps") > 0) pj["diffusion_steps"] = a.steps;
  if (sub->count("--window-h") > 0) pj["window_h"] = a.window.window_h;
  if (sub->count("--window-w") > 0) pj["window_w"] = a.window.window_w;
  if (sub->count("--stride") > 0) pj["stride"] = a.window.stride;
  if (sub->count("--min-inside") > 0) pj["min_inside"] = a.window.min_inside;
  if (sub->count("--seed") > 0 || !pj.contains("seed")) pj["seed"] = c.seed;
  PoisonConfig cfg = poison_config_from_json(pj.dump());
  c.seed = cfg.seed;
  check_common(c);
  require_path(a.data, "--data", "a clean training set");

  LoadedDataset train = read_dataset_checked(a.data);

  std::optional<DetectorState> surrogate;
  if (cfg.placement == PlacementMode::Heatmap) {
    if (a.surrogate.empty())
      throw ConfigError("heatmap placement needs a surrogate checkpoint (--surrogate)");
    surrogate = load_detector(a.surrogate);
  }

  std::optional<ToyDenoiser> denoiser;
  std::string denoiser_path = a.denoiser;
  bool trained_denoiser = false;
  if (cfg.trigger == TriggerKind::Mud || cfg.trigger == TriggerKind::Cone) {
    if (!denoiser_path.empty() && fs::exists(denoiser_path)) {
      denoiser = load_denoiser(denoiser_path);
    } else {
      // No usable checkpoint: fit the editor on the clean set, then keep it
      // next to the other artifacts so later runs skip this step.
      DenoiserTrainOptions dopts = denoiser_options_from_block(dtrain_block);
      dopts.seed = Rng(cfg.seed).derive("denoiser-train").seed();
      denoiser = train_denoiser(train.scenes, cfg.schedule, dopts);
      if (denoiser_path.empty())
        denoiser_path = (fs::path(c.out) / "denoiser.ckpt").string();
      fs::path parent = fs::path(denoiser_path).parent_path();
      if (!parent.empty()) fs::create_directories(parent);
      save_denoiser(denoiser_path, *denoiser);
      trained_denoiser = true;
    }
  }

  PoisonOutput out = poison_dataset(train.scenes, cfg,
                                    surrogate ? &*surrogate : nullptr,
                                    denoiser ? &*denoiser : nullptr);
  WriteMeta meta;
  meta.split = train.manifest.split;
  meta.seed = cfg.seed;
  meta.config_json = poison_config_to_json(cfg);
  write_poisoned_dataset(fs::path(c.out) / "poisoned", out, meta);

  if (!a.testset.empty()) {
    LoadedDataset test = read_dataset_checked(a.testset);
    TriggeredTestset trig = build_triggered_testset(test.scenes, cfg,
                                                    surrogate ? &*surrogate : nullptr,
                                                    denoiser ? &*denoiser : nullptr);
    WriteMeta tmeta;
    tmeta.split = test.manifest.split;
    tmeta.seed = cfg.seed;
    tmeta.config_json = poison_config_to_json(cfg);
    write_triggered_testset(fs::path(c.out) / "triggered", trig, tmeta);
  }

  json snap = snapshot_base("poison", c);
  json cfg_json = json::parse(poison_config_to_json(cfg));
  for (auto it = cfg_json.begin(); it != cfg_json.end(); ++it)
    snap[it.key()] = it.value();
  snap["data"] = a.data;
  snap["testset"] = a.testset;
  snap["surrogate"] = a.surrogate;
  snap["denoiser"] = denoiser_path;
  snap["denoiser_train"] = denoiser_options_to_json(
      denoiser_options_from_block(dtrain_block));
  write_snapshot(c, snap);
  std::cout << "poisoned " << out.summary.records.size() << " of "
            << train.scenes.size() << " scenes";
  if (!out.summary.skipped.empty())
    std::cout << " (" << out.summary.skipped.size() << " skipped)";
  if (trained_denoiser) std::cout << "; trained denoiser at " << denoiser_path;
  std::cout << "\n";
  return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string model_name = "victim";
  std::string clean;
  std::string triggered;
  double threshold_px = 2.5;
  double exist_threshold = 0.5;
};

int run_eval(CLI::App* sub, CommonArgs& c, EvalArgs& a) {
  ConfigMap cm(c.config, "eval");
  merge_common(cm, sub, c);
  cm.take("model", a.model, sub->count("--model") > 0);
  cm.take("model_name", a.model_name, sub->count("--model-name") > 0);
  cm.take("clean", a.clean, sub->count("--clean") > 0);
  cm.take("triggered", a.triggered, sub->count("--triggered") > 0);
  cm.take("threshold_px", a.threshold_px, sub->count("--threshold-px") > 0);
  cm.take("exist_threshold", a.exist_threshold, sub->count("--exist-threshold") > 0);
  cm.finish();
  check_common(c);
  require_path(a.model, "--model", "a detector checkpoint");
  require_path(a.clean, "--clean", "a clean test set");

  DetectorState net = load_detector(a.model);
  LoadedDataset clean = read_dataset_checked(a.clean);
  ScoreOptions so{a.threshold_px, a.exist_threshold};

  MetricsRow row;
  row.model = a.model_name;
  row.attack = "none";
  row.strategy = "none";
  row.acc_clean = score_points(predict_dataset(net, clean.scenes),
                               labels_of(clean.scenes),
                               clean.scenes.front().image.width, so).value();

  std::optional<StealthReport> stealth;
  if (!a.triggered.empty()) {
    TriggeredEval trig = read_triggered(a.triggered);
    row.attack = to_string(trig.cfg.trigger);
    row.strategy = to_string(trig.cfg.strategy.kind);
    row.asr = asr_against(predict_dataset(net, trig.scenes), trig, so);
    if (trig.scenes.size() == clean.scenes.size() &&
        trig.originals == labels_of(clean.scenes)) {
      stealth = stealth_report(images_of(trig.scenes), images_of(clean.scenes),
                               trig.regions);
    } else {
      std::cerr << "note: triggered set does not pair with --clean;"
                   " skipping the stealth report\n";
    }
  }

  json snap = snapshot_base("eval", c);
  snap["model"] = a.model;
  snap["model_name"] = a.model_name;
  snap["clean"] = a.clean;
  snap["triggered"] = a.triggered;
  snap["threshold_px"] = a.threshold_px;
  snap["exist_threshold"] = a.exist_threshold;

  fs::create_directories(c.out);
  write_metrics_csv(fs::path(c.out) / "metrics.csv", {row});
  write_metrics_json(fs::path(c.out) / "metrics.json", {row},
                     config_hash(snap.dump()));
  if (stealth) {
    fs::path path = fs::path(c.out) / "stealth.csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "index,ssim\n";
    for (std::size_t i = 0; i < stealth->per_sample.size(); ++i)
      out << i << ',' << stealth->per_sample[i] << '\n';
  }
  write_snapshot(c, snap);
  std::cout << "acc_clean " << row.acc_clean;
  if (!a.triggered.empty()) std::cout << "  asr " << row.asr;
  if (stealth) std::cout << "  stealth_ssim " << stealth->mean;
  std::cout << "\n";
  return 0;
}

// --- defend -----------------------------------------------------------------

struct DefendArgs {
  std::string model;
  std::string clean;
  std::string testset;
  std::string triggered;
  int channels_per_step = 4;
  int max_channels = 0;  // 0: final stage's full width
  double threshold_px = 2.5;
  double exist_threshold = 0.5;
};

int run_defend(CLI::App* sub, CommonArgs& c, DefendArgs& a) {
  ConfigMap cm(c.config, "defend");
  merge_common(cm, sub, c);
  cm.take("model", a.model, sub->count("--model") > 0);
  cm.take("clean", a.clean, sub->count("--clean") > 0);
  cm.take("testset", a.testset, sub->count("--testset") > 0);
  cm.take("triggered", a.triggered, sub->count("--triggered") > 0);
  cm.take("channels_per_step", a.channels_per_step, sub->count("--channels-per-step") > 0);
  cm.take("max_channels", a.max_channels, sub->count("--max-channels") > 0);
  cm.take("threshold_px", a.threshold_px, sub->count("--threshold-px") > 0);
  cm.take("exist_threshold", a.exist_threshold, sub->count("--exist-threshold") > 0);
  json ft_block = cm.take_block("finetune");
  cm.finish();
  check_common(c);
  require_path(a.model, "--model", "a victim checkpoint");
  require_path(a.clean, "--clean", "a clean training set");
  require_path(a.testset, "--testset", "a clean test set");
  require_path(a.triggered, "--triggered", "a triggered test set");

  DetectorState victim = load_detector(a.model);
  LoadedDataset clean = read_dataset_checked(a.clean);
  LoadedDataset test = read_dataset_checked(a.testset);
  TriggeredEval trig = read_triggered(a.triggered);
  ScoreOptions so{a.threshold_px, a.exist_threshold};

  auto acc_of = [&](const DetectorState& s) {
    return score_points(predict_dataset(s, test.scenes), labels_of(test.scenes),
                        test.scenes.front().image.width, so).value();
  };
  auto asr_of = [&](const DetectorState& s) {
    return asr_against(predict_dataset(s, trig.scenes), trig, so);
  };

  PruneOptions popts;
  popts.channels_per_step = a.channels_per_step;
  popts.max_channels = a.max_channels > 0 ? a.max_channels
                                          : victim.desc.conv_channels[2];
  PruneReport report = prune_defense(victim, clean.scenes, popts,
                                     [&](const DetectorState& s) {
                                       return std::pair{acc_of(s), asr_of(s)};
                                     });

  TrainOptions defaults;
  defaults.epochs = 10;
  defaults.lr = 0.01;
  TrainOptions fopts = train_options_from_block(ft_block, defaults);
  fopts.seed = Rng(c.seed).derive("finetune").seed();
  FinetuneResult ft = finetune_defense(victim, clean.scenes, fopts, asr_of);

  fs::create_directories(c.out);
  write_prune_csv(fs::path(c.out) / "prune.csv", report);
  save_detector(fs::path(c.out) / "finetuned.ckpt", ft.state);
  json ftj = {{"asr_before", ft.asr_before},
              {"asr_after", ft.asr_after},
              {"acc_after", acc_of(ft.state)}};
  {
    fs::path path = fs::path(c.out) / "finetune.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << ftj.dump(2) << "\n";
  }

  json snap = snapshot_base("defend", c);
  snap["model"] = a.model;
  snap["clean"] = a.clean;
  snap["testset"] = a.testset;
  snap["triggered"] = a.triggered;
  snap["channels_per_step"] = a.channels_per_step;
  snap["max_channels"] = popts.max_channels;
  snap["threshold_px"] = a.threshold_px;
  snap["exist_threshold"] = a.exist_threshold;
  snap["finetune"] = train_options_to_json(fopts);
  write_snapshot(c, snap);
  std::cout << "prune sweep: " << report.steps.size() << " steps; finetune asr "
            << ft.asr_before << " -> " << ft.asr_after << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale lane-detection poisoning laboratory"};
  app.require_subcommand(1);

  CommonArgs common[7];

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic clean dataset");
  add_common(synth, common[0]);
  synth->add_option("--n", synth_args.n, "scene count");
  synth->add_option("--split", synth_args.split, "manifest split tag");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train the row-anchor detector");
  add_common(train, common[1]);
  train->add_option("--data", train_args.data, "dataset directory");
  train->add_option("--epochs", train_args.epochs, "training epochs");
  train->add_option("--lr", train_args.lr, "learning rate");
  train->add_option("--batch", train_args.batch, "minibatch size");
  train->add_option("--hidden", train_args.hidden, "dense layer width");

  HeatmapArgs heatmap_args;
  CLI::App* heatmap = app.add_subcommand("heatmap", "export a gradient attention map");
  add_common(heatmap, common[2]);
  heatmap->add_option("--model", heatmap_args.model, "detector checkpoint");
  heatmap->add_option("--data", heatmap_args.data, "dataset directory");
  heatmap->add_option("--index", heatmap_args.index, "scene index");
  heatmap->add_option("--strategy", heatmap_args.strategy, "label attack: loa, lda, lra");
  heatmap->add_option("--blur-sigma", heatmap_args.blur_sigma, "gaussian smoothing sigma");
  heatmap->add_option("--loss-scale", heatmap_args.loss_scale, "loss scale factor");

  PlaceArgs place_args;
  CLI::App* place = app.add_subcommand("place", "audit trigger window placement");
  add_common(place, common[3]);
  place->add_option("--model", place_args.model, "surrogate checkpoint (heatmap mode)");
  place->add_option("--data", place_args.data, "dataset directory");
  place->add_option("--index", place_args.index, "scene index");
  place->add_option("--mode", place_args.mode, "placement mode: heatmap, random");
  place->add_option("--strategy", place_args.strategy, "label attack steering the heatmap");
  place->add_option("--blur-sigma", place_args.blur_sigma, "gaussian smoothing sigma");
  place->add_option("--window-h", place_args.window.window_h, "window height");
  place->add_option("--window-w", place_args.window.window_w, "window width");
  place->add_option("--stride", place_args.window.stride, "window stride");
  place->add_option("--min-inside", place_args.window.min_inside, "required road coverage");

  PoisonArgs poison_args;
  CLI::App* poison = app.add_subcommand("poison", "poison a training set");
  add_common(poison, common[4]);
  poison->add_option("--data", poison_args.data, "clean training set");
  poison->add_option("--testset", poison_args.testset, "clean test set to trigger 100%");
  poison->add_option("--surrogate", poison_args.surrogate, "surrogate detector checkpoint");
  poison->add_option("--denoiser", poison_args.denoiser,
                     "denoiser checkpoint (trained here when missing)");
  poison->add_option("--rate", poison_args.rate, "poisoning rate");
  poison->add_option("--strategy", poison_args.strategy, "label attack: loa, lda, lra");
  poison->add_option("--beta", poison_args.beta, "horizontal offset (loa)");
  poison->add_option("--alpha-deg", poison_args.alpha_deg, "rotation angle (lra)");
  poison->add_option("--anchor-index", poison_args.anchor_index, "rotation anchor (lra)");
  poison->add_option("--lane-index", poison_args.lane_index, "restrict lra to one lane");
  poison->add_option("--trigger", poison_args.trigger, "mud, cone, square, blended");
  poison->add_option("--placement", poison_args.placement, "heatmap, random, fixed");
  poison->add_option("--fixed-row", poison_args.fixed_row, "fixed placement row");
  poison->add_option("--fixed-col", poison_args.fixed_col, "fixed placement column");
  poison->add_option("--blend-ratio", poison_args.blend_ratio, "blended trigger opacity");
  poison->add_option("--steps", poison_args.steps, "diffusion steps");
  poison->add_option("--window-h", poison_args.window.window_h, "window height");
  poison->add_option("--window-w", poison_args.window.window_w, "window width");
  poison->add_option("--stride", poison_args.window.stride, "window stride");
  poison->add_option("--min-inside", poison_args.window.min_inside, "required road coverage");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "score a detector on clean and triggered sets");
  add_common(eval, common[5]);
  eval->add_option("--model", eval_args.model, "detector checkpoint");
  eval->add_option("--model-name", eval_args.model_name, "row label in the report");
  eval->add_option("--clean", eval_args.clean, "clean test set");
  eval->add_option("--triggered", eval_args.triggered, "triggered test set");
  eval->add_option("--threshold-px", eval_args.threshold_px, "point tolerance in pixels");
  eval->add_option("--exist-threshold", eval_args.exist_threshold, "lane existence cutoff");

  DefendArgs defend_args;
  CLI::App* defend = app.add_subcommand("defend", "run pruning and fine-tuning defenses");
  add_common(defend, common[6]);
  defend->add_option("--model", defend_args.model, "victim checkpoint");
  defend->add_option("--clean", defend_args.clean, "clean data for probe and fine-tuning");
  defend->add_option("--testset", defend_args.testset, "clean test set");
  defend->add_option("--triggered", defend_args.triggered, "triggered test set");
  defend->add_option("--channels-per-step", defend_args.channels_per_step,
                     "channels pruned per sweep step");
  defend->add_option("--max-channels", defend_args.max_channels,
                     "sweep end (0: full final stage)");
  defend->add_option("--threshold-px", defend_args.threshold_px, "point tolerance in pixels");
  defend->add_option("--exist-threshold", defend_args.exist_threshold, "lane existence cutoff");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) return run_synth(synth, common[0], synth_args);
    if (*train) return run_train(train, common[1], train_args);
    if (*heatmap) return run_heatmap(heatmap, common[2], heatmap_args);
    if (*place) return run_place(place, common[3], place_args);
    if (*poison) return run_poison(poison, common[4], poison_args);
    if (*eval) return run_eval(eval, common[5], eval_args);
    if (*defend) return run_defend(defend, common[6], defend_args);
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    // Domain failures (degenerate geometry, empty candidate sets...) read as
    // configuration problems at the command line.
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
