#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lanepoison/image_io.hpp"
#include "lanepoison/scene.hpp"

namespace lanepoison {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string scene_stem(int idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%05d", idx);
  return buf;
}

json label_to_json(const std::string& raw_file, const LaneLabel& label) {
  json j;
  j["raw_file"] = raw_file;
  j["h_samples"] = label.row_anchors;
  j["lanes"] = label.lanes;
  j["exist"] = label.exist;
  return j;
}

LaneLabel label_from_json(const json& j, const std::string& where) {
  LaneLabel label;
  try {
    label.row_anchors = j.at("h_samples").get<std::vector<int>>();
    label.lanes = j.at("lanes").get<std::vector<std::vector<double>>>();
    if (j.contains("exist")) {
      label.exist = j.at("exist").get<std::vector<int>>();
    } else {
      // plain TuSimple records carry no existence flags; infer from points
      label.exist.assign(label.lanes.size(), 0);
      for (std::size_t i = 0; i < label.lanes.size(); ++i)
        for (double c : label.lanes[i])
          if (c != kMissing) { label.exist[i] = 1; break; }
    }
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  return label;
}

void check_label(const LaneLabel& label, int width, int height, const std::string& where) {
  try {
    label.validate(width, height);
  } catch (const Error& e) {
    throw ParseError(where + ": " + e.what());
  }
}

}  // namespace

void write_labels_jsonl(const fs::path& path, const std::vector<std::string>& raw_files,
                        const std::vector<LaneLabel>& labels) {
  if (raw_files.size() != labels.size())
    throw ShapeError("write_labels_jsonl: raw_files/labels size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (std::size_t i = 0; i < labels.size(); ++i)
    out << label_to_json(raw_files[i], labels[i]).dump() << "\n";
  if (!out) throw IoError("short write: " + path.string());
}

std::vector<LaneLabel> read_labels_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<LaneLabel> labels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string where = path.string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    labels.push_back(label_from_json(j, where));
  }
  return labels;
}

DatasetManifest write_dataset(const std::vector<Scene>& scenes, const fs::path& root,
                              const WriteMeta& meta) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");

  DatasetManifest man;
  man.split = meta.split;
  man.seed = meta.seed;
  man.config_json = meta.config_json;

  std::ofstream anno(root / "anno.jsonl", std::ios::binary);
  if (!anno) throw IoError("cannot open for writing: " + (root / "anno.jsonl").string());

  json seeds = json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Scene& s = scenes[i];
    std::string stem = scene_stem(static_cast<int>(i));
    std::string raw_file = "images/" + stem + ".ppm";
    write_ppm(root / raw_file, s.image);
    write_mask_pgm(root / "masks" / (stem + "_road.pgm"), s.road_mask);
    write_mask_pgm(root / "masks" / (stem + "_lane.pgm"), s.lane_mask);
    write_mask_pgm(root / "masks" / (stem + "_env.pgm"), s.env_mask);
    anno << label_to_json(raw_file, s.label).dump() << "\n";
    man.entries.push_back({raw_file, static_cast<int>(i)});
    seeds.push_back(s.seed);
  }
  if (!anno) throw IoError("short write: " + (root / "anno.jsonl").string());
  anno.close();

  json j;
  j["version"] = man.version;
  j["split"] = man.split;
  j["seed"] = man.seed;
  j["config"] = json::parse(meta.config_json.empty() ? "{}" : meta.config_json);
  j["scene_seeds"] = seeds;
  json entries = json::array();
  for (const DatasetEntry& e : man.entries)
    entries.push_back({{"raw_file", e.raw_file}, {"anno_index", e.anno_index}});
  j["entries"] = entries;
  std::ofstream mf(root / "manifest.json", std::ios::binary);
  if (!mf) throw IoError("cannot open for writing: " + (root / "manifest.json").string());
  mf << j.dump(2) << "\n";
  return man;
}

LoadedDataset read_dataset(const fs::path& root) {
  fs::path man_path = root / "manifest.json";
  std::ifstream mf(man_path, std::ios::binary);
  if (!mf) throw IoError("cannot open for reading: " + man_path.string());
  json j;
  try {
    j = json::parse(mf);
  } catch (const json::exception& e) {
    throw ParseError(man_path.string() + ": " + e.what());
  }

  LoadedDataset out;
  try {
    out.manifest.version = j.at("version").get<int>();
    if (out.manifest.version != 1)
      throw ParseError(man_path.string() + ": unsupported manifest version " +
                       std::to_string(out.manifest.version));
    out.manifest.split = j.at("split").get<std::string>();
    out.manifest.seed = j.at("seed").get<std::uint64_t>();
    out.manifest.config_json = j.at("config").dump();
    for (const json& e : j.at("entries"))
      out.manifest.entries.push_back(
          {e.at("raw_file").get<std::string>(), e.at("anno_index").get<int>()});
  } catch (const json::exception& e) {
    throw ParseError(man_path.string() + ": " + e.what());
  }
  std::vector<std::uint64_t> seeds;
  if (j.contains("scene_seeds"))
    seeds = j.at("scene_seeds").get<std::vector<std::uint64_t>>();

  std::vector<LaneLabel> labels = read_labels_jsonl(root / "anno.jsonl");
  if (labels.size() != out.manifest.entries.size())
    throw ParseError((root / "anno.jsonl").string() + ": expected " +
                     std::to_string(out.manifest.entries.size()) + " records, got " +
                     std::to_string(labels.size()));

  out.scenes.reserve(labels.size());
  for (std::size_t i = 0; i < out.manifest.entries.size(); ++i) {
    const DatasetEntry& e = out.manifest.entries[i];
    Scene s;
    s.image = read_ppm(root / e.raw_file);
    std::string stem = fs::path(e.raw_file).stem().string();
    s.road_mask = read_mask_pgm(root / "masks" / (stem + "_road.pgm"));
    s.lane_mask = read_mask_pgm(root / "masks" / (stem + "_lane.pgm"));
    s.env_mask = read_mask_pgm(root / "masks" / (stem + "_env.pgm"));
    if (e.anno_index < 0 || e.anno_index >= static_cast<int>(labels.size()))
      throw ParseError(man_path.string() + ": entry " + std::to_string(i) +
                       " anno_index out of range");
    s.label = labels[static_cast<std::size_t>(e.anno_index)];
    check_label(s.label, s.image.width, s.image.height,
                (root / "anno.jsonl").string() + ":" + std::to_string(e.anno_index + 1));
    if (i < seeds.size()) s.seed = seeds[i];
    out.scenes.push_back(std::move(s));
  }
  return out;
}

}  // namespace lanepoison
