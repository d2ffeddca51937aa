#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lanepoison/types.hpp"

namespace lanepoison {

// Binary PPM (P6, maxval 255) for color images; binary PGM (P5) for masks and
// 16-bit scalar rasters.  Plain deterministic formats keep datasets diffable
// and dependency-free.

void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

// Mask planes hold 0/1; on disk they are stored as 0/255 for visibility.
void write_mask_pgm(const std::filesystem::path& path, const MaskPlane& mask);
MaskPlane read_mask_pgm(const std::filesystem::path& path);

// 16-bit PGM, value range [0, 65535]; callers handle scaling.
using PlaneU16 = Eigen::Array<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic>;
void write_pgm16(const std::filesystem::path& path, const PlaneU16& plane);
PlaneU16 read_pgm16(const std::filesystem::path& path);

}  // namespace lanepoison
