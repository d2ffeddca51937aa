#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lanepoison/types.hpp"

namespace lanepoison {

// Synthetic road-scene generator.  Scenes are perspective trapezoid roads with
// 2..4 lane markings (fixed lateral slots so lane index is semantically
// stable), optional sprites (car / cone), and one of four lighting modes.
struct GeneratorConfig {
  int height = 96;
  int width = 160;
  int anchor_count = 12;
  double anchor_top_frac = 0.40;  // anchors span [ceil(frac*H), H-1]
  int lanes_min = 2;
  int lanes_max = 4;
  std::string lighting = "auto";  // auto|normal|shadow|highlight|night
  int max_sprites = 2;
  double horizon_frac = 0.35;

  void validate() const;
  std::vector<int> row_anchors() const;
};

std::string generator_config_to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_config_from_json(const std::string& json_text);

// Deterministic: equal (seed, config) gives byte-identical scenes.
Scene generate_scene(std::uint64_t seed, const GeneratorConfig& cfg);

std::vector<Scene> generate_dataset(std::uint64_t seed, int count,
                                    const GeneratorConfig& cfg);

// --- dataset serialization (TuSimple-style layout) -------------------------
//
// root/
//   manifest.json            split, seed, config snapshot, entry list
//   anno.jsonl               one record per scene: raw_file, lanes,
//                            h_samples, exist
//   images/scene_#####.ppm
//   masks/scene_#####_{road,lane,env}.pgm

struct WriteMeta {
  std::string split = "train";
  std::uint64_t seed = 0;
  std::string config_json = "{}";
};

DatasetManifest write_dataset(const std::vector<Scene>& scenes,
                              const std::filesystem::path& root, const WriteMeta& meta);

struct LoadedDataset {
  std::vector<Scene> scenes;
  DatasetManifest manifest;
};

// Strict reader: malformed records raise ParseError naming file and line.
LoadedDataset read_dataset(const std::filesystem::path& root);

// Annotation-only helpers (used for the original labels of triggered sets).
void write_labels_jsonl(const std::filesystem::path& path,
                        const std::vector<std::string>& raw_files,
                        const std::vector<LaneLabel>& labels);
std::vector<LaneLabel> read_labels_jsonl(const std::filesystem::path& path);

}  // namespace lanepoison
