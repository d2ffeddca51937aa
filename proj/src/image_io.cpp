#include "lanepoison/image_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "lanepoison/error.hpp"

namespace lanepoison {
namespace {

void write_bytes(const std::filesystem::path& path, const std::string& header,
                 const std::vector<unsigned char>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << header;
  out.write(reinterpret_cast<const char*>(body.data()),
            static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("short write: " + path.string());
}

struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

// Reads "P5"/"P6" headers, tolerating '#' comments, returns the stream
// positioned at the first raster byte.
PnmHeader read_header(std::ifstream& in, const std::filesystem::path& path) {
  PnmHeader h;
  auto next_token = [&]() -> std::string {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw ParseError("truncated PNM header: " + path.string());
    return tok;
  };
  h.magic = next_token();
  h.width = std::stoi(next_token());
  h.height = std::stoi(next_token());
  h.maxval = std::stoi(next_token());
  if (h.width <= 0 || h.height <= 0)
    throw ParseError("bad PNM dimensions: " + path.string());
  return h;
}

std::vector<unsigned char> read_raster(std::ifstream& in, std::size_t n,
                                       const std::filesystem::path& path) {
  std::vector<unsigned char> body(n);
  in.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw ParseError("truncated PNM raster: " + path.string());
  return body;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Image& image) {
  if (image.channel_count() != 3)
    throw IoError("write_ppm expects 3 channels, got " +
                  std::to_string(image.channel_count()));
  std::ostringstream header;
  header << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> body;
  body.reserve(static_cast<std::size_t>(image.width) * image.height * 3);
  for (int r = 0; r < image.height; ++r)
    for (int c = 0; c < image.width; ++c)
      for (int ch = 0; ch < 3; ++ch)
        body.push_back(image.channels[static_cast<std::size_t>(ch)](r, c));
  write_bytes(path, header.str(), body);
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  PnmHeader h = read_header(in, path);
  if (h.magic != "P6" || h.maxval != 255)
    throw ParseError("expected P6 maxval 255: " + path.string());
  auto body = read_raster(in, static_cast<std::size_t>(h.width) * h.height * 3, path);
  Image im = Image::zeros(h.height, h.width, 3);
  std::size_t i = 0;
  for (int r = 0; r < h.height; ++r)
    for (int c = 0; c < h.width; ++c)
      for (int ch = 0; ch < 3; ++ch)
        im.channels[static_cast<std::size_t>(ch)](r, c) = body[i++];
  return im;
}

void write_mask_pgm(const std::filesystem::path& path, const MaskPlane& mask) {
  std::ostringstream header;
  header << "P5\n" << mask.cols() << " " << mask.rows() << "\n255\n";
  std::vector<unsigned char> body;
  body.reserve(static_cast<std::size_t>(mask.size()));
  for (Eigen::Index r = 0; r < mask.rows(); ++r)
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
      body.push_back(mask(r, c) ? 255 : 0);
  write_bytes(path, header.str(), body);
}

MaskPlane read_mask_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  PnmHeader h = read_header(in, path);
  if (h.magic != "P5" || h.maxval != 255)
    throw ParseError("expected P5 maxval 255: " + path.string());
  auto body = read_raster(in, static_cast<std::size_t>(h.width) * h.height, path);
  MaskPlane m(h.height, h.width);
  std::size_t i = 0;
  for (int r = 0; r < h.height; ++r)
    for (int c = 0; c < h.width; ++c) m(r, c) = body[i++] >= 128 ? 1 : 0;
  return m;
}

void write_pgm16(const std::filesystem::path& path, const PlaneU16& plane) {
  std::ostringstream header;
  header << "P5\n" << plane.cols() << " " << plane.rows() << "\n65535\n";
  std::vector<unsigned char> body;
  body.reserve(static_cast<std::size_t>(plane.size()) * 2);
  for (Eigen::Index r = 0; r < plane.rows(); ++r)
    for (Eigen::Index c = 0; c < plane.cols(); ++c) {
      std::uint16_t v = plane(r, c);
      body.push_back(static_cast<unsigned char>(v >> 8));  // big-endian per PNM
      body.push_back(static_cast<unsigned char>(v & 0xff));
    }
  write_bytes(path, header.str(), body);
}

PlaneU16 read_pgm16(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  PnmHeader h = read_header(in, path);
  if (h.magic != "P5" || h.maxval != 65535)
    throw ParseError("expected P5 maxval 65535: " + path.string());
  auto body = read_raster(in, static_cast<std::size_t>(h.width) * h.height * 2, path);
  PlaneU16 p(h.height, h.width);
  std::size_t i = 0;
  for (int r = 0; r < h.height; ++r)
    for (int c = 0; c < h.width; ++c) {
      std::uint16_t hi = body[i++];
      std::uint16_t lo = body[i++];
      p(r, c) = static_cast<std::uint16_t>((hi << 8) | lo);
    }
  return p;
}

}  // namespace lanepoison
