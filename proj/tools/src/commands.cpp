#include "commands.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>

#include <fstream>
#include <iostream>
#include <sstream>

#include <cssl/error.hpp>
#include <cssl/rng.hpp>
#include <cssl/synthdata.hpp>
#include <cssl/trainer.hpp>

#include "run_config.hpp"

namespace cssl::cli {

namespace fs = std::filesystem;

namespace {

struct MissingInput : Error {
  using Error::Error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw MissingInput(std::string(what) + " not found: " + path.string());
}

fs::path manifest_path(const fs::path& data) {
  return fs::is_directory(data) ? data / "manifest.json" : data;
}

Dataset load_data(const fs::path& data) {
  const fs::path manifest = manifest_path(data);
  require_file(manifest, "dataset manifest");
  return load_dataset(manifest);
}

SegModel load_teacher(const fs::path& path, const Dataset& ds) {
  require_file(path, "checkpoint");
  SegModel m = load_checkpoint(path);
  if (m.classes() != ds.classes) {
    throw ArgumentError("checkpoint has " + std::to_string(m.classes()) + " classes, dataset has " +
                        std::to_string(ds.classes));
  }
  return m;
}

std::string checkpoint_name(std::size_t round) {
  return "checkpoint_round" + std::to_string(round) + ".cssl";
}

std::string rounds_csv(const IterateResult& it) {
  std::ostringstream os;
  os << "round,miou,mean_w_correct,mean_w_wrong\n";
  auto cell = [&](const std::optional<double>& v) {
    if (v) os << fmt::format("{:.9g}", *v);
  };
  for (const auto& r : it.rounds) {
    os << r.round << ',';
    cell(r.miou);
    os << ',';
    cell(r.weights.mean_correct);
    os << ',';
    cell(r.weights.mean_wrong);
    os << '\n';
  }
  return os.str();
}

// gen-data ------------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t labelled = 4;
  std::size_t unlabelled = 200;
  std::size_t evaluation = 100;
  std::vector<std::size_t> size{48, 48};
  std::size_t classes = 4;
  bool force = false;
};

int gen_data(const GenDataArgs& a, std::ostream& err) {
  const fs::path out(a.out);
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!a.force) {
      err << "gen-data: output directory " << out.string() << " is not empty (use --force)\n";
      return kExitConfig;
    }
    // Only what a previous gen-data run writes is removed.
    fs::remove(out / "manifest.json");
    for (const char* split : {"labelled", "unlabelled", "evaluation"}) fs::remove_all(out / split);
  }
  const Dataset ds = generate_dataset(a.seed, a.labelled, a.unlabelled, a.size[0], a.size[1], a.classes,
                                      a.evaluation);
  write_dataset(out, ds);
  err << "gen-data: wrote " << ds.labelled.size() << " labelled, " << ds.unlabelled.size()
      << " unlabelled and " << ds.evaluation.size() << " evaluation scenes to " << out.string() << '\n';
  return kExitOk;
}

// train ---------------------------------------------------------------------

int train(const std::string& config_path, const std::string& mode, std::ostream& err) {
  const RunConfig cfg = load_run_config(config_path);
  const Dataset ds = load_data(cfg.dataset);
  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "effective_config.json", to_json(cfg).dump(2) + "\n");

  IterateResult result;
  if (mode == "sup") {
    for (const auto& key : cfg.ssl_keys_present) {
      err << "warning: train --mode sup ignores key /" << key << '\n';
    }
    TrainResult sup = train_supervised(cfg.train, ds);
    result.log = sup.log;
    result.rounds.push_back({0, std::move(sup.model), sup.miou, {}});
  } else {
    result = iterate(cfg.train, ds);
  }
  write_text(cfg.output_dir / "metrics.csv", metrics_csv(result.log));
  write_text(cfg.output_dir / "rounds.csv", rounds_csv(result));
  for (const auto& r : result.rounds) save_checkpoint(cfg.output_dir / checkpoint_name(r.round), r.model);
  for (const auto& r : result.rounds) {
    err << "round " << r.round << ": mIoU " << (r.miou ? fmt::format("{:.4f}", *r.miou) : "n/a") << '\n';
  }
  return kExitOk;
}

// audit ---------------------------------------------------------------------

struct AuditArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  double filter_q = 0.0;
  std::size_t boundary_distance = kDefaultBoundaryDistance;
  std::size_t panels = 4;
  std::size_t views = 1;
  std::uint64_t seed = 0;
};

std::string boundary_csv(const BoundaryStats& s) {
  return fmt::format("group,pixel_count,mean_confidence\nnear,{},{:.9g}\nfar,{},{:.9g}\n", s.near_count,
                     s.near_mean_confidence, s.far_count, s.far_mean_confidence);
}

std::string precision_csv(const std::vector<std::optional<double>>& per_class) {
  std::string s = "class,precision\n";
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    s += std::to_string(c) + ',' + (per_class[c] ? fmt::format("{:.9g}", *per_class[c]) : "") + '\n';
  }
  return s;
}

// Side-by-side strip: source 1, source 2, mask, mixed image, mixed pseudo-labels.
Image mix_panel(const Image& x1, const Image& x2, const CowMask& m, const MixResult& mixed,
                std::size_t classes) {
  const std::size_t h = x1.height(), w = x1.width(), gap = 2;
  Image panel(h, 5 * w + 4 * gap, 1.0f);
  const auto palette = class_palette(classes);
  auto blit = [&](std::size_t slot, auto&& pixel) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::array<float, 3> rgb = pixel(y, x);
        for (std::size_t c = 0; c < 3; ++c) panel.at(y, slot * (w + gap) + x, c) = rgb[c];
      }
  };
  auto from_image = [](const Image& img) {
    return [&img](std::size_t y, std::size_t x) {
      return std::array<float, 3>{img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)};
    };
  };
  blit(0, from_image(x1));
  blit(1, from_image(x2));
  blit(2, [&](std::size_t y, std::size_t x) {
    const float v = m.mask[y * w + x] ? 1.0f : 0.0f;
    return std::array<float, 3>{v, v, v};
  });
  blit(3, from_image(mixed.image));
  blit(4, [&](std::size_t y, std::size_t x) {
    const std::uint8_t l = mixed.labels.at(y, x);
    return l == kIgnore ? std::array<float, 3>{0.0f, 0.0f, 0.0f} : palette[l];
  });
  return panel;
}

int audit(const AuditArgs& a, std::ostream& err) {
  const Dataset ds = load_data(a.data);
  const SegModel teacher = load_teacher(a.checkpoint, ds);
  if (ds.unlabelled.empty()) throw ArgumentError("audit: dataset has no unlabelled images");
  TrainConfig cfg;
  cfg.filter_q = a.filter_q;
  cfg.ensemble_views = a.views;
  cfg.validate();
  const auto records = make_pseudo_labels(cfg, teacher, ds);
  const fs::path out(a.out);
  fs::create_directories(out);

  write_text(out / "histograms.csv", histograms_csv(class_histograms(records, ds.classes)));
  const std::span<const LabelMask> truth =
      ds.has_unlabelled_truth() ? std::span<const LabelMask>(ds.unlabelled_truth) : std::span<const LabelMask>();
  if (truth.empty()) err << "audit: dataset has no unlabelled ground truth; precision columns left empty\n";
  write_text(out / "deciles.csv", decile_csv(decile_report(records, truth, ds.classes)));
  write_text(out / "precision.csv",
             precision_csv(truth.empty() ? std::vector<std::optional<double>>(ds.classes)
                                         : precision(records, truth, ds.classes)));
  write_text(out / "boundary.csv", boundary_csv(boundary_confidence(records, a.boundary_distance)));

  if (a.panels > 0) fs::create_directories(out / "panels");
  Rng rng = make_rng(a.seed, Stream::kMasks);
  const std::size_t n = ds.unlabelled.size();
  for (std::size_t i = 0; i < a.panels && n >= 2; ++i) {
    const std::size_t j = uniform_index(rng, n);
    const std::size_t k = (j + 1 + uniform_index(rng, n - 1)) % n;
    const MaskParams params = sample_mask_params(rng, ds.height(), ds.width());
    const CowMask m = generate_cowmask(ds.height(), ds.width(), params.sigma, params.p, rng());
    const WeightMap w1 = compute_weights(teacher, ds.unlabelled[j], records[j]);
    const WeightMap w2 = compute_weights(teacher, ds.unlabelled[k], records[k]);
    const MixResult mixed = mix(ds.unlabelled[j], ds.unlabelled[k], records[j].effective_labels(),
                                records[k].effective_labels(), w1, w2, m);
    write_image(out / "panels" / fmt::format("panel_{:03d}.ppm", i),
                mix_panel(ds.unlabelled[j], ds.unlabelled[k], m, mixed, ds.classes));
  }
  err << "audit: wrote reports for " << records.size() << " pseudo-labelled images to " << out.string()
      << '\n';
  return kExitOk;
}

// decile --------------------------------------------------------------------

int decile(const std::string& config_path, const std::string& checkpoint,
           const std::vector<std::size_t>& deciles, std::ostream& err) {
  const RunConfig cfg = load_run_config(config_path);
  const Dataset ds = load_data(cfg.dataset);
  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "effective_config.json", to_json(cfg).dump(2) + "\n");
  SegModel teacher;
  if (checkpoint.empty()) {
    TrainResult base = train_supervised(cfg.train, ds);
    err << "decile: trained baseline teacher, mIoU "
        << (base.miou ? fmt::format("{:.4f}", *base.miou) : "n/a") << '\n';
    save_checkpoint(cfg.output_dir / checkpoint_name(0), base.model);
    teacher = std::move(base.model);
  } else {
    teacher = load_teacher(checkpoint, ds);
  }
  const auto runs = decile_experiment(cfg.train, teacher, ds, deciles);
  write_text(cfg.output_dir / "decile_runs.csv", decile_experiment_csv(runs));
  return kExitOk;
}

// eval ----------------------------------------------------------------------

int eval(const std::string& checkpoint, const std::string& data, const std::string& out_path,
         std::ostream& out) {
  const Dataset ds = load_data(data);
  const SegModel model = load_teacher(checkpoint, ds);
  if (ds.evaluation.empty()) throw ArgumentError("eval: dataset has no evaluation split");
  const std::string csv = evaluation_csv(evaluate(model, ds.evaluation));
  if (out_path.empty()) {
    out << csv;
  } else {
    write_text(out_path, csv);
  }
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-training semi-supervised segmentation on synthetic scenes"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset with manifest");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Master seed");
  gen_cmd->add_option("--labelled", gen.labelled, "Labelled scenes")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--unlabelled", gen.unlabelled, "Unlabelled scenes");
  gen_cmd->add_option("--evaluation", gen.evaluation, "Held-out evaluation scenes");
  gen_cmd->add_option("--size", gen.size, "Height and width")->expected(2);
  gen_cmd->add_option("--classes", gen.classes, "Number of classes including background");
  gen_cmd->add_flag("--force", gen.force, "Replace the contents of a non-empty output directory");

  std::string config, mode = "ssl";
  auto* train_cmd = app.add_subcommand("train", "Supervised baseline or iterated self-training");
  train_cmd->add_option("--config", config, "Run configuration (JSON)")->required();
  train_cmd->add_option("--mode", mode, "sup or ssl")->check(CLI::IsMember({"sup", "ssl"}));

  AuditArgs aud;
  auto* audit_cmd = app.add_subcommand("audit", "Pseudo-label statistics for a teacher checkpoint");
  audit_cmd->add_option("--checkpoint", aud.checkpoint, "Teacher checkpoint")->required();
  audit_cmd->add_option("--data", aud.data, "Dataset directory or manifest")->required();
  audit_cmd->add_option("--out", aud.out, "Report directory")->required();
  audit_cmd->add_option("--filter-q", aud.filter_q, "Class-wise filtering quantile")->check(CLI::Range(0.0, 0.999999));
  audit_cmd->add_option("--boundary-distance", aud.boundary_distance, "Near-boundary distance in pixels");
  audit_cmd->add_option("--panels", aud.panels, "Number of mixed-image panels");
  audit_cmd->add_option("--views", aud.views, "Flip-ensemble views for confidence")->check(CLI::PositiveNumber);
  audit_cmd->add_option("--seed", aud.seed, "Seed for panel sampling");

  std::string dec_config, dec_checkpoint;
  std::vector<std::size_t> dec_subsets;
  auto* decile_cmd = app.add_subcommand("decile", "One self-training round per confidence decile");
  decile_cmd->add_option("--config", dec_config, "Run configuration (JSON)")->required();
  decile_cmd->add_option("--checkpoint", dec_checkpoint, "Teacher; trained from the config when omitted");
  decile_cmd->add_option("--deciles", dec_subsets, "Deciles to run (1-10); all when omitted")
      ->delimiter(',')
      ->check(CLI::Range(1, 10));

  std::string ev_checkpoint, ev_data, ev_out;
  auto* eval_cmd = app.add_subcommand("eval", "Per-class IoU and mIoU on the evaluation split");
  eval_cmd->add_option("--checkpoint", ev_checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--data", ev_data, "Dataset directory or manifest")->required();
  eval_cmd->add_option("--out", ev_out, "CSV path; stdout when omitted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "cssl: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*gen_cmd) return gen_data(gen, err);
    if (*train_cmd) return train(config, mode, err);
    if (*audit_cmd) return audit(aud, err);
    if (*decile_cmd) return decile(dec_config, dec_checkpoint, dec_subsets, err);
    if (*eval_cmd) return eval(ev_checkpoint, ev_data, ev_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const MissingInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace cssl::cli
