#include "lanepoison/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "lanepoison/denoiser.hpp"

namespace lanepoison {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'L', 'P', 'C', 'K'};

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw CheckpointError("truncated checkpoint: " + path.string());
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_doubles(std::ofstream& out, const double* p, std::size_t n) {
  // host is little-endian x86; bytes are the canonical on-disk layout
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * 8));
}

void read_doubles(std::ifstream& in, double* p, std::size_t n,
                  const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * 8));
  if (static_cast<std::size_t>(in.gcount()) != n * 8)
    throw CheckpointError("truncated checkpoint tensors: " + path.string());
}

struct NamedTensor {
  const char* name;
  Matrix* mat = nullptr;
  Vector* vec = nullptr;
};

void save_container(const std::filesystem::path& path, std::uint32_t kind, json header,
                    const std::vector<NamedTensor>& tensors) {
  json tlist = json::array();
  for (const NamedTensor& t : tensors) {
    Eigen::Index rows = t.mat ? t.mat->rows() : t.vec->size();
    Eigen::Index cols = t.mat ? t.mat->cols() : 1;
    tlist.push_back({{"name", t.name}, {"rows", rows}, {"cols", cols}});
  }
  header["tensors"] = tlist;
  std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, kind);
  put_u32(out, static_cast<std::uint32_t>(htext.size()));
  out << htext;
  for (const NamedTensor& t : tensors) {
    if (t.mat)
      write_doubles(out, t.mat->data(), static_cast<std::size_t>(t.mat->size()));
    else
      write_doubles(out, t.vec->data(), static_cast<std::size_t>(t.vec->size()));
  }
  if (!out) throw IoError("short write: " + path.string());
}

json open_container(std::ifstream& in, const std::filesystem::path& path,
                    std::uint32_t expect_kind) {
  if (!in) throw IoError("cannot open for reading: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("not a checkpoint file: " + path.string());
  std::uint32_t version = get_u32(in, path);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          ": " + path.string());
  std::uint32_t kind = get_u32(in, path);
  if (kind != expect_kind)
    throw CheckpointError("checkpoint kind mismatch (found " + std::to_string(kind) +
                          ", expected " + std::to_string(expect_kind) + "): " +
                          path.string());
  std::uint32_t hlen = get_u32(in, path);
  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  if (static_cast<std::uint32_t>(in.gcount()) != hlen)
    throw CheckpointError("truncated checkpoint header: " + path.string());
  try {
    return json::parse(htext);
  } catch (const json::exception& e) {
    throw CheckpointError("bad checkpoint header: " + path.string() + ": " + e.what());
  }
}

void load_tensors(std::ifstream& in, const std::filesystem::path& path, const json& header,
                  const std::vector<NamedTensor>& tensors) {
  const json& tlist = header.at("tensors");
  if (tlist.size() != tensors.size())
    throw CheckpointError("checkpoint tensor count mismatch: " + path.string());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const json& meta = tlist[i];
    const NamedTensor& t = tensors[i];
    if (meta.at("name").get<std::string>() != t.name)
      throw CheckpointError("checkpoint tensor order mismatch at '" +
                            std::string(t.name) + "': " + path.string());
    Eigen::Index rows = meta.at("rows").get<Eigen::Index>();
    Eigen::Index cols = meta.at("cols").get<Eigen::Index>();
    if (t.mat) {
      t.mat->resize(rows, cols);
      read_doubles(in, t.mat->data(), static_cast<std::size_t>(t.mat->size()), path);
    } else {
      if (cols != 1)
        throw CheckpointError("expected vector for '" + std::string(t.name) + "'");
      t.vec->resize(rows);
      read_doubles(in, t.vec->data(), static_cast<std::size_t>(t.vec->size()), path);
    }
  }
}

std::vector<NamedTensor> detector_tensors(DetectorState& s) {
  return {
      {"c1.W", &s.c1.W, nullptr},       {"c1.b", nullptr, &s.c1.b},
      {"c2.W", &s.c2.W, nullptr},       {"c2.b", nullptr, &s.c2.b},
      {"c3.W", &s.c3.W, nullptr},       {"c3.b", nullptr, &s.c3.b},
      {"fc.W", &s.fc.W, nullptr},       {"fc.b", nullptr, &s.fc.b},
      {"exist.W", &s.exist_head.W, nullptr}, {"exist.b", nullptr, &s.exist_head.b},
      {"coord.W", &s.coord_head.W, nullptr}, {"coord.b", nullptr, &s.coord_head.b},
  };
}

std::vector<NamedTensor> denoiser_tensors(ToyDenoiser& d) {
  return {
      {"l1.W", &d.l1.W, nullptr}, {"l1.b", nullptr, &d.l1.b},
      {"l2.W", &d.l2.W, nullptr}, {"l2.b", nullptr, &d.l2.b},
      {"l3.W", &d.l3.W, nullptr}, {"l3.b", nullptr, &d.l3.b},
  };
}

}  // namespace

void save_detector(const std::filesystem::path& path, const DetectorState& s) {
  json h;
  h["descriptor"] = {{"in_ch", s.desc.in_ch},
                     {"in_h", s.desc.in_h},
                     {"in_w", s.desc.in_w},
                     {"n_lanes", s.desc.n_lanes},
                     {"m_anchors", s.desc.m_anchors},
                     {"conv_channels", s.desc.conv_channels},
                     {"hidden", s.desc.hidden},
                     {"row_anchors", s.desc.row_anchors}};
  h["norm_mean"] = s.norm_mean;
  h["norm_std"] = s.norm_std;
  h["init_seed"] = s.init_seed;
  DetectorState& mut = const_cast<DetectorState&>(s);
  save_container(path, kKindDetector, h, detector_tensors(mut));
}

DetectorState load_detector(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  json h = open_container(in, path, kKindDetector);
  DetectorState s;
  try {
    const json& d = h.at("descriptor");
    s.desc.in_ch = d.at("in_ch").get<int>();
    s.desc.in_h = d.at("in_h").get<int>();
    s.desc.in_w = d.at("in_w").get<int>();
    s.desc.n_lanes = d.at("n_lanes").get<int>();
    s.desc.m_anchors = d.at("m_anchors").get<int>();
    auto cc = d.at("conv_channels").get<std::vector<int>>();
    if (cc.size() != 3) throw CheckpointError("bad conv_channels: " + path.string());
    std::copy(cc.begin(), cc.end(), s.desc.conv_channels.begin());
    s.desc.hidden = d.at("hidden").get<int>();
    s.desc.row_anchors = d.at("row_anchors").get<std::vector<int>>();
    s.norm_mean = h.at("norm_mean").get<double>();
    s.norm_std = h.at("norm_std").get<double>();
    s.init_seed = h.at("init_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw CheckpointError("bad checkpoint header: " + path.string() + ": " + e.what());
  }
  s.desc.validate();
  s.c1.spec = {s.desc.in_ch, s.desc.conv_channels[0]};
  s.c2.spec = {s.desc.conv_channels[0], s.desc.conv_channels[1]};
  s.c3.spec = {s.desc.conv_channels[1], s.desc.conv_channels[2]};
  load_tensors(in, path, h, detector_tensors(s));
  return s;
}

void save_denoiser(const std::filesystem::path& path, const ToyDenoiser& d) {
  json h;
  h["hidden"] = d.desc.hidden;
  h["init_seed"] = d.init_seed;
  ToyDenoiser& mut = const_cast<ToyDenoiser&>(d);
  save_container(path, kKindDenoiser, h, denoiser_tensors(mut));
}

ToyDenoiser load_denoiser(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  json h = open_container(in, path, kKindDenoiser);
  ToyDenoiser d;
  try {
    d.desc.hidden = h.at("hidden").get<int>();
    d.init_seed = h.at("init_seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw CheckpointError("bad checkpoint header: " + path.string() + ": " + e.what());
  }
  d.l1.spec = ConvSpec{kDenoiserInPlanes, d.desc.hidden, 3, 1, 1};
  d.l2.spec = ConvSpec{d.desc.hidden, d.desc.hidden, 3, 1, 1};
  d.l3.spec = ConvSpec{d.desc.hidden, 3, 3, 1, 1};
  load_tensors(in, path, h, denoiser_tensors(d));
  return d;
}

std::uint32_t checkpoint_kind(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("not a checkpoint file: " + path.string());
  std::uint32_t version = get_u32(in, path);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          ": " + path.string());
  return get_u32(in, path);
}

}  // namespace lanepoison
