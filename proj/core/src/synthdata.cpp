#include "cssl/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cssl/error.hpp"
#include "cssl/rng.hpp"
#include "cssl/tensor.hpp"

namespace cssl {

namespace {

constexpr float kPixelNoise = 0.05f;
constexpr double kBrightnessJitter = 0.1;
constexpr double kTextureAmplitude = 0.06;
constexpr double kTextureSigma = 2.0;
// Per-shape offset of each colour channel around the class base colour.
constexpr double kShapeColourJitter = 0.10;

enum class ShapeKind { kDisc, kRect, kTriangle };

struct Point {
  double x, y;
};

double cross(Point a, Point b, Point c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

bool in_triangle(Point p, Point a, Point b, Point c) {
  const double d1 = cross(a, b, p);
  const double d2 = cross(b, c, p);
  const double d3 = cross(c, a, p);
  const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
  const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(neg && pos);
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace

std::size_t Dataset::height() const {
  if (!labelled.empty()) return labelled.front().image.height();
  if (!unlabelled.empty()) return unlabelled.front().height();
  return evaluation.empty() ? 0 : evaluation.front().image.height();
}

std::size_t Dataset::width() const {
  if (!labelled.empty()) return labelled.front().image.width();
  if (!unlabelled.empty()) return unlabelled.front().width();
  return evaluation.empty() ? 0 : evaluation.front().image.width();
}

std::vector<std::array<float, 3>> class_palette(std::size_t classes) {
  static constexpr std::array<std::array<float, 3>, 8> kBase{{
      {0.45f, 0.45f, 0.45f},
      {0.70f, 0.34f, 0.30f},
      {0.58f, 0.50f, 0.26f},
      {0.32f, 0.40f, 0.64f},
      {0.30f, 0.60f, 0.35f},
      {0.65f, 0.35f, 0.60f},
      {0.25f, 0.60f, 0.62f},
      {0.80f, 0.64f, 0.40f},
  }};
  std::vector<std::array<float, 3>> palette;
  palette.reserve(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    if (c < kBase.size()) {
      palette.push_back(kBase[c]);
      continue;
    }
    // Deterministic pseudo-random colours beyond the fixed table.
    Rng rng(mix64(c));
    palette.push_back({static_cast<float>(uniform(rng, 0.2, 0.8)),
                       static_cast<float>(uniform(rng, 0.2, 0.8)),
                       static_cast<float>(uniform(rng, 0.2, 0.8))});
  }
  return palette;
}

Scene generate_scene(std::uint64_t seed, std::size_t height, std::size_t width,
                     std::size_t classes) {
  if (classes < 2) throw ArgumentError("generate_scene: K must be >= 2");
  if (classes >= kIgnore) throw ArgumentError("generate_scene: K must be < 255");
  if (height < 16 || width < 16) throw ArgumentError("generate_scene: H and W must be >= 16");

  Rng rng(seed);
  const auto palette = class_palette(classes);
  const double scale = std::min(height, width) / 48.0;
  const double H = static_cast<double>(height);
  const double W = static_cast<double>(width);

  Scene scene{Image(height, width), LabelMask(height, width, 0)};
  // owner[i] is 0 for background, else 1 + index of the topmost shape.
  std::vector<std::uint8_t> owner(height * width, 0);
  std::vector<std::array<float, 3>> colours;
  auto jittered = [&](std::uint8_t cls) {
    std::array<float, 3> c = palette[cls];
    for (float& v : c) v += static_cast<float>(uniform(rng, -kShapeColourJitter, kShapeColourJitter));
    return c;
  };
  colours.push_back(jittered(0));

  const std::size_t n_shapes = 2 + uniform_index(rng, 4);
  for (std::size_t s = 0; s < n_shapes; ++s) {
    const auto kind = static_cast<ShapeKind>(uniform_index(rng, 3));
    const auto cls = static_cast<std::uint8_t>(1 + uniform_index(rng, classes - 1));
    colours.push_back(jittered(cls));
    const auto id = static_cast<std::uint8_t>(s + 1);
    auto paint = [&](std::size_t y, std::size_t x) {
      scene.mask.at(y, x) = cls;
      owner[y * width + x] = id;
    };
    const Point centre{uniform(rng, 0.1 * W, 0.9 * W), uniform(rng, 0.1 * H, 0.9 * H)};
    switch (kind) {
      case ShapeKind::kDisc: {
        const double r = uniform(rng, 5.0, 12.0) * scale;
        for (std::size_t y = 0; y < height; ++y) {
          for (std::size_t x = 0; x < width; ++x) {
            const double dx = x + 0.5 - centre.x, dy = y + 0.5 - centre.y;
            if (dx * dx + dy * dy <= r * r) paint(y, x);
          }
        }
        break;
      }
      case ShapeKind::kRect: {
        const double hw = 0.5 * uniform(rng, 8.0, 24.0) * scale;
        const double hh = 0.5 * uniform(rng, 8.0, 24.0) * scale;
        for (std::size_t y = 0; y < height; ++y) {
          for (std::size_t x = 0; x < width; ++x) {
            if (std::abs(x + 0.5 - centre.x) <= hw && std::abs(y + 0.5 - centre.y) <= hh) paint(y, x);
          }
        }
        break;
      }
      case ShapeKind::kTriangle: {
        std::array<Point, 3> v{};
        const double base = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        for (std::size_t k = 0; k < 3; ++k) {
          const double ang = base + 2.0 * std::numbers::pi * k / 3.0 + uniform(rng, -0.4, 0.4);
          const double r = uniform(rng, 8.0, 16.0) * scale;
          v[k] = {centre.x + r * std::cos(ang), centre.y + r * std::sin(ang)};
        }
        for (std::size_t y = 0; y < height; ++y) {
          for (std::size_t x = 0; x < width; ++x) {
            if (in_triangle({x + 0.5, y + 0.5}, v[0], v[1], v[2])) paint(y, x);
          }
        }
        break;
      }
    }
  }

  // Low-amplitude smooth texture for the background.
  TensorF texture({height, width});
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (float& v : texture.data()) v = normal(rng);
  texture = gaussian_filter(texture, kTextureSigma);
  double tex_sq = 0.0;
  for (float v : texture.data()) tex_sq += static_cast<double>(v) * v;
  const double tex_scale = kTextureAmplitude / std::sqrt(tex_sq / texture.size() + 1e-12);

  const auto brightness = static_cast<float>(uniform(rng, -kBrightnessJitter, kBrightnessJitter));
  std::normal_distribution<float> pixel_noise(0.0f, kPixelNoise);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::uint8_t who = owner[y * width + x];
      const float tex = who == 0 ? static_cast<float>(tex_scale * texture[y * width + x]) : 0.0f;
      for (std::size_t c = 0; c < Image::kChannels; ++c) {
        const float v = colours[who][c] + tex + brightness + pixel_noise(rng);
        scene.image.at(y, x, c) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return scene;
}

Dataset generate_dataset(std::uint64_t seed, std::size_t n_labelled, std::size_t n_unlabelled,
                         std::size_t height, std::size_t width, std::size_t classes,
                         std::size_t n_evaluation) {
  if (n_labelled == 0) throw ArgumentError("generate_dataset: n_labelled must be >= 1");
  Dataset ds;
  ds.classes = classes;

  bool covered = false;
  for (std::size_t attempt = 0; attempt < kMaxLabelledRetries && !covered; ++attempt) {
    const std::uint64_t split_seed = derive_seed(seed, Stream::kSceneLabelled, attempt);
    ds.labelled.clear();
    std::vector<bool> seen(classes, false);
    for (std::size_t i = 0; i < n_labelled; ++i) {
      ds.labelled.push_back(
          generate_scene(derive_seed(split_seed, Stream::kSceneLabelled, i), height, width, classes));
      for (std::uint8_t v : ds.labelled.back().mask.labels()) seen[v] = true;
    }
    covered = std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
  }
  if (!covered) {
    throw ArgumentError("generate_dataset: labelled split misses a class after " +
                        std::to_string(kMaxLabelledRetries) + " retries");
  }

  ds.unlabelled.reserve(n_unlabelled);
  ds.unlabelled_truth.reserve(n_unlabelled);
  for (std::size_t i = 0; i < n_unlabelled; ++i) {
    Scene s = generate_scene(derive_seed(seed, Stream::kSceneUnlabelled, i), height, width, classes);
    ds.unlabelled.push_back(std::move(s.image));
    ds.unlabelled_truth.push_back(std::move(s.mask));
  }
  ds.evaluation.reserve(n_evaluation);
  for (std::size_t i = 0; i < n_evaluation; ++i) {
    ds.evaluation.push_back(
        generate_scene(derive_seed(seed, Stream::kSceneEvaluation, i), height, width, classes));
  }
  return ds;
}

}  // namespace cssl
