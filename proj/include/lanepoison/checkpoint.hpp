#pragma once

#include <filesystem>

#include "lanepoison/detector.hpp"

namespace lanepoison {

struct ToyDenoiser;

// Binary container: magic "LPCK", format version, a kind tag, a JSON header
// describing the architecture, then raw little-endian doubles for each listed
// tensor.  Mismatched magic/version/kind raises CheckpointError.
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kKindDetector = 1;
inline constexpr std::uint32_t kKindDenoiser = 2;

void save_detector(const std::filesystem::path& path, const DetectorState& s);
DetectorState load_detector(const std::filesystem::path& path);

void save_denoiser(const std::filesystem::path& path, const ToyDenoiser& d);
ToyDenoiser load_denoiser(const std::filesystem::path& path);

// Kind tag of an existing checkpoint file (validates magic/version).
std::uint32_t checkpoint_kind(const std::filesystem::path& path);

}  // namespace lanepoison
