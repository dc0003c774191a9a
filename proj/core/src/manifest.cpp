#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "cssl/error.hpp"
#include "cssl/synthdata.hpp"

namespace cssl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string numbered(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04zu.%s", stem, i, ext);
  return buf;
}

json scene_entry(const fs::path& dir, const std::string& split, std::size_t i, const Image& img,
                 const LabelMask* mask) {
  json e;
  const std::string image_rel = split + "/" + numbered("image", i, "ppm");
  write_image(dir / image_rel, img);
  e["image"] = image_rel;
  if (mask) {
    const std::string mask_rel = split + "/" + numbered("mask", i, "pgm");
    write_mask(dir / mask_rel, *mask);
    e["mask"] = mask_rel;
  }
  return e;
}

const json& require(const json& obj, const char* key, const fs::path& manifest) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw FormatError(manifest.string() + ": missing key \"" + key + "\"");
  }
  return obj.at(key);
}

fs::path resolve(const fs::path& base, const json& entry, const char* key, const fs::path& manifest) {
  const json& v = require(entry, key, manifest);
  if (!v.is_string()) throw FormatError(manifest.string() + ": \"" + key + "\" must be a string");
  fs::path p(v.get<std::string>());
  return p.is_absolute() ? p : base / p;
}

void check_mask_range(const LabelMask& m, std::size_t classes, const fs::path& path) {
  for (std::uint8_t v : m.labels()) {
    if (v != kIgnore && v >= classes) {
      throw FormatError(path.string() + ": label " + std::to_string(v) + " out of range for K=" +
                        std::to_string(classes));
    }
  }
}

}  // namespace

void write_dataset(const fs::path& dir, const Dataset& ds) {
  for (const char* split : {"labelled", "unlabelled", "evaluation"}) {
    fs::create_directories(dir / split);
  }
  json manifest;
  manifest["classes"] = ds.classes;
  manifest["height"] = ds.height();
  manifest["width"] = ds.width();
  json labelled = json::array();
  for (std::size_t i = 0; i < ds.labelled.size(); ++i) {
    labelled.push_back(scene_entry(dir, "labelled", i, ds.labelled[i].image, &ds.labelled[i].mask));
  }
  json unlabelled = json::array();
  for (std::size_t i = 0; i < ds.unlabelled.size(); ++i) {
    const LabelMask* truth = ds.has_unlabelled_truth() ? &ds.unlabelled_truth[i] : nullptr;
    unlabelled.push_back(scene_entry(dir, "unlabelled", i, ds.unlabelled[i], truth));
  }
  json evaluation = json::array();
  for (std::size_t i = 0; i < ds.evaluation.size(); ++i) {
    evaluation.push_back(
        scene_entry(dir, "evaluation", i, ds.evaluation[i].image, &ds.evaluation[i].mask));
  }
  manifest["labelled"] = std::move(labelled);
  manifest["unlabelled"] = std::move(unlabelled);
  manifest["evaluation"] = std::move(evaluation);

  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

Dataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open manifest: " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  const fs::path base = manifest_path.parent_path();
  Dataset ds;
  const json& k = require(manifest, "classes", manifest_path);
  if (!k.is_number_unsigned() || k.get<std::size_t>() < 2 || k.get<std::size_t>() >= kIgnore) {
    throw FormatError(manifest_path.string() + ": \"classes\" must be an integer in [2, 254]");
  }
  ds.classes = k.get<std::size_t>();

  for (const json& e : require(manifest, "labelled", manifest_path)) {
    const fs::path ip = resolve(base, e, "image", manifest_path);
    const fs::path mp = resolve(base, e, "mask", manifest_path);
    Scene s{read_image(ip), read_mask(mp)};
    check_mask_range(s.mask, ds.classes, mp);
    ds.labelled.push_back(std::move(s));
  }
  bool all_truth = true;
  for (const json& e : require(manifest, "unlabelled", manifest_path)) {
    ds.unlabelled.push_back(read_image(resolve(base, e, "image", manifest_path)));
    if (e.contains("mask")) {
      const fs::path mp = resolve(base, e, "mask", manifest_path);
      ds.unlabelled_truth.push_back(read_mask(mp));
      check_mask_range(ds.unlabelled_truth.back(), ds.classes, mp);
    } else {
      all_truth = false;
    }
  }
  if (!all_truth) ds.unlabelled_truth.clear();
  if (manifest.contains("evaluation")) {
    for (const json& e : manifest.at("evaluation")) {
      const fs::path mp = resolve(base, e, "mask", manifest_path);
      Scene s{read_image(resolve(base, e, "image", manifest_path)), read_mask(mp)};
      check_mask_range(s.mask, ds.classes, mp);
      ds.evaluation.push_back(std::move(s));
    }
  }
  if (ds.labelled.empty()) {
    throw FormatError(manifest_path.string() + ": labelled split is empty");
  }
  return ds;
}

}  // namespace cssl
