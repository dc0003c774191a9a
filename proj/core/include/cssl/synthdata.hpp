#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cssl/types.hpp"

namespace cssl {

struct Scene {
  Image image;
  LabelMask mask;

  bool operator==(const Scene&) const = default;
};

/// Labelled and unlabelled scenes plus a held-out evaluation split. The
/// ground truth of unlabelled scenes is kept only for pseudo-label audits.
struct Dataset {
  std::size_t classes = 0;
  std::vector<Scene> labelled;
  std::vector<Image> unlabelled;
  std::vector<LabelMask> unlabelled_truth;  // empty or one per unlabelled image
  std::vector<Scene> evaluation;

  std::size_t height() const;
  std::size_t width() const;
  bool has_unlabelled_truth() const { return unlabelled_truth.size() == unlabelled.size(); }
};

/// Base RGB colour of each class; class 0 is the background.
std::vector<std::array<float, 3>> class_palette(std::size_t classes);

/// Background texture plus 2-5 occluding discs, rectangles and triangles of
/// classes [1, K). Pure function of the arguments.
Scene generate_scene(std::uint64_t seed, std::size_t height, std::size_t width,
                     std::size_t classes);

inline constexpr std::size_t kMaxLabelledRetries = 100;

/// Regenerates the labelled split until every class appears in it.
Dataset generate_dataset(std::uint64_t seed, std::size_t n_labelled, std::size_t n_unlabelled,
                         std::size_t height, std::size_t width, std::size_t classes,
                         std::size_t n_evaluation = 0);

/// round(v * 255) with halves rounded up, v clamped to [0, 1].
std::uint8_t quantize(float v);
Image quantize(const Image& image);

std::vector<std::uint8_t> encode_ppm(const Image& image);
Image decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const LabelMask& mask);
LabelMask decode_pgm(std::span<const std::uint8_t> bytes);

void write_image(const std::filesystem::path& path, const Image& image);
Image read_image(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const LabelMask& mask);
LabelMask read_mask(const std::filesystem::path& path);

/// Writes images, masks and manifest.json under `dir`.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);

/// Loads a dataset from its manifest; relative paths resolve against the
/// manifest's directory.
Dataset load_dataset(const std::filesystem::path& manifest);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace cssl
