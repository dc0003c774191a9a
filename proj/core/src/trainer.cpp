#include "cssl/trainer.hpp"

#include <cmath>
#include <sstream>

#include "cssl/rng.hpp"
#include "format.hpp"

namespace cssl {

void TrainConfig::validate() const {
  if (steps == 0) throw ArgumentError("TrainConfig: steps must be >= 1");
  if (!(base_lr > 0.0)) throw ArgumentError("TrainConfig: base_lr must be > 0");
  if (!(poly_power >= 0.0)) throw ArgumentError("TrainConfig: poly_power must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("TrainConfig: momentum must be in [0,1)");
  if (!(weight_decay >= 0.0)) throw ArgumentError("TrainConfig: weight_decay must be >= 0");
  if (batch_labelled == 0) throw ArgumentError("TrainConfig: batch_labelled must be >= 1");
  if (!(filter_q >= 0.0 && filter_q < 1.0)) throw ArgumentError("TrainConfig: filter_q must be in [0,1)");
  if (rounds == 0) throw ArgumentError("TrainConfig: rounds must be >= 1");
  if (ensemble_views == 0) throw ArgumentError("TrainConfig: ensemble_views must be >= 1");
  sce.validate();
}

TrainConfig ablation_preset(std::string_view row, TrainConfig base) {
  base.filter_q = 0.0;
  base.weighting = false;
  base.sce_enabled = false;
  base.mixing = MixMode::kCow;
  if (row == "ST") {
    base.mixing = MixMode::kNone;
  } else if (row == "ST_CM") {
  } else if (row == "ST_CM_PLF") {
    base.filter_q = 0.2;
  } else if (row == "ST_CM_PLW") {
    base.weighting = true;
  } else if (row == "ST_CM_PLW_SCE") {
    base.weighting = true;
    base.sce_enabled = true;
  } else if (row == "ST_CM_PLF_PLW_SCE" || row == "FULL") {
    base.filter_q = 0.2;
    base.weighting = true;
    base.sce_enabled = true;
    if (row == "FULL") base.rounds = 3;
  } else {
    throw ArgumentError("unknown ablation row: " + std::string(row));
  }
  return base;
}

std::string_view to_string(MixMode mode) {
  switch (mode) {
    case MixMode::kNone: return "none";
    case MixMode::kCow: return "cow";
    case MixMode::kCutMix: return "cutmix";
  }
  return "none";
}

MixMode parse_mix_mode(std::string_view name) {
  if (name == "none") return MixMode::kNone;
  if (name == "cow") return MixMode::kCow;
  if (name == "cutmix") return MixMode::kCutMix;
  throw ArgumentError("unknown mixing mode: " + std::string(name));
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::ostringstream os;
  os << "round,step,lr,loss_sup,loss_unsup,miou_eval,mean_w_correct,mean_w_wrong\n";
  for (const auto& r : rows) {
    os << r.round << ',' << r.step << ',' << detail::fmt_double(r.lr) << ','
       << detail::fmt_double(r.loss_sup) << ',' << detail::fmt_optional(r.loss_unsup) << ','
       << detail::fmt_optional(r.miou_eval) << ',' << detail::fmt_optional(r.mean_w_correct)
       << ',' << detail::fmt_optional(r.mean_w_wrong) << '\n';
  }
  return os.str();
}

ConfusionMatrix evaluate(const SegModel& model, std::span<const Scene> scenes) {
  ConfusionMatrix cm(model.classes());
  for (const Scene& s : scenes) cm.accumulate(s.mask, argmax_channel(forward(model, s.image)));
  return cm;
}

double evaluate_miou(const SegModel& model, std::span<const Scene> scenes) {
  return miou(evaluate(model, scenes));
}

namespace {

struct SeparationAccumulator {
  double correct_sum = 0.0;
  double wrong_sum = 0.0;
  std::size_t correct = 0;
  std::size_t wrong = 0;

  void add(const WeightMap& w, const PseudoLabelRecord& rec, const LabelMask& truth) {
    for (std::size_t i = 0; i < rec.labels.size(); ++i) {
      if (!rec.valid[i] || truth[i] == kIgnore) continue;
      if (rec.labels[i] == truth[i]) {
        correct_sum += w.w[i];
        ++correct;
      } else {
        wrong_sum += w.w[i];
        ++wrong;
      }
    }
  }

  WeightSeparation result() const {
    WeightSeparation s;
    s.correct_pixels = correct;
    s.wrong_pixels = wrong;
    if (correct) s.mean_correct = correct_sum / static_cast<double>(correct);
    if (wrong) s.mean_wrong = wrong_sum / static_cast<double>(wrong);
    return s;
  }
};

PseudoLabelRecord hflip(const PseudoLabelRecord& rec) {
  PseudoLabelRecord out;
  out.labels = cssl::hflip(rec.labels);
  const std::size_t h = rec.labels.height(), w = rec.labels.width();
  out.confidence.resize(rec.confidence.size());
  out.valid.resize(rec.valid.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      out.confidence[y * w + x] = rec.confidence[y * w + w - 1 - x];
      out.valid[y * w + x] = rec.valid[y * w + w - 1 - x];
    }
  }
  return out;
}

WeightMap validity_weights(const PseudoLabelRecord& rec) {
  WeightMap w(rec.labels.height(), rec.labels.width(), 0.0f);
  for (std::size_t i = 0; i < rec.valid.size(); ++i) {
    w.w[i] = rec.valid[i] && rec.labels[i] != kIgnore ? 1.0f : 0.0f;
  }
  return w;
}

void check_finite(double loss, const char* what, std::size_t round, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string("training diverged: non-finite ") + what + " loss in round " +
                       std::to_string(round) + " at step " + std::to_string(step));
  }
}

struct SupervisedBatch {
  double loss = 0.0;
};

// Accumulates the mean labelled cross-entropy gradient of one batch into `grads`.
SupervisedBatch labelled_batch(const TrainConfig& cfg, const SegModel& model, const Dataset& ds,
                               Rng& rng, ModelGrads<float>& grads) {
  SupervisedBatch out;
  const float scale = 1.0f / static_cast<float>(cfg.batch_labelled);
  for (std::size_t b = 0; b < cfg.batch_labelled; ++b) {
    const Scene& scene = ds.labelled[uniform_index(rng, ds.labelled.size())];
    const bool flip = cfg.hflip && (rng() & 1U);
    const Image img = flip ? hflip(scene.image) : scene.image;
    const LabelMask mask = flip ? hflip(scene.mask) : scene.mask;
    const Activations<float> acts = forward_train(model, to_input<float>(img));
    const LossResult<float> ce = cross_entropy(softmax_channel(acts.logits), mask);
    out.loss += static_cast<double>(ce.loss) / static_cast<double>(cfg.batch_labelled);
    accumulate(grads, backward(model, acts, ce.grad_logits), scale);
  }
  return out;
}

CowMask draw_mask(const TrainConfig& cfg, std::size_t h, std::size_t w, Rng& rng) {
  const MaskParams params = sample_mask_params(rng, h, w);
  const std::uint64_t seed = rng();
  if (cfg.mixing == MixMode::kCutMix) return generate_cutmix_mask(h, w, params.p, seed);
  return generate_cowmask(h, w, params.sigma, params.p, seed);
}

std::optional<double> maybe_eval(const SegModel& model, const Dataset& ds) {
  if (ds.evaluation.empty()) return std::nullopt;
  return evaluate_miou(model, ds.evaluation);
}

}  // namespace

WeightSeparation weight_separation(const SegModel& student, std::span<const Image> images,
                                   std::span<const PseudoLabelRecord> records,
                                   std::span<const LabelMask> truth) {
  if (images.size() != records.size() || truth.size() != records.size()) {
    throw ShapeError("weight_separation: image/record/truth counts differ");
  }
  SeparationAccumulator acc;
  for (std::size_t i = 0; i < records.size(); ++i) {
    acc.add(compute_weights(student, images[i], records[i]), records[i], truth[i]);
  }
  return acc.result();
}

TrainResult train_supervised(const TrainConfig& cfg, const Dataset& ds) {
  cfg.validate();
  if (ds.labelled.empty()) throw ArgumentError("train_supervised: labelled split is empty");
  TrainResult res;
  res.model = init_model(derive_seed(cfg.seed, Stream::kInit), ds.classes);
  OptimState optim = make_optim_state(res.model, cfg.base_lr, cfg.poly_power, cfg.steps,
                                      cfg.momentum, cfg.weight_decay);
  Rng rng = make_rng(cfg.seed, Stream::kLabelledBatches);
  double last_sup = 0.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    ModelGrads<float> grads = zero_grads(res.model);
    const SupervisedBatch sup = labelled_batch(cfg, res.model, ds, rng, grads);
    check_finite(sup.loss, "supervised", 0, step);
    last_sup = sup.loss;
    const double lr = poly_lr(optim, step);
    sgd_step(res.model, grads, optim, step);
    if (cfg.eval_every && step % cfg.eval_every == 0) {
      res.log.push_back({0, step, lr, sup.loss, std::nullopt, maybe_eval(res.model, ds),
                         std::nullopt, std::nullopt});
    }
  }
  res.miou = maybe_eval(res.model, ds);
  res.log.push_back({0, cfg.steps, 0.0, last_sup, std::nullopt, res.miou, std::nullopt, std::nullopt});
  return res;
}

std::vector<PseudoLabelRecord> make_pseudo_labels(const TrainConfig& cfg, const SegModel& teacher,
                                                  const Dataset& ds) {
  std::vector<PseudoLabelRecord> records;
  records.reserve(ds.unlabelled.size());
  for (const Image& img : ds.unlabelled) {
    records.push_back(cfg.ensemble_views > 1 ? ensemble_confidence(teacher, img, cfg.ensemble_views)
                                             : generate_pseudo_labels(teacher, img));
  }
  if (cfg.filter_q > 0.0) filter_by_quantile(records, ds.classes, cfg.filter_q);
  return records;
}

TrainResult train_student(const TrainConfig& cfg, std::span<const PseudoLabelRecord> records,
                          const Dataset& ds, std::size_t round) {
  cfg.validate();
  if (ds.labelled.empty()) throw ArgumentError("train_student: labelled split is empty");
  if (ds.unlabelled.empty()) throw ArgumentError("train_student: unlabelled split is empty");
  if (records.size() != ds.unlabelled.size()) {
    throw ShapeError("train_student: one pseudo-label record per unlabelled image required");
  }
  std::size_t valid_total = 0;
  for (const auto& r : records) valid_total += r.valid_count();
  if (valid_total == 0) {
    throw Error("train_student: no valid pseudo-labels left after filtering (round " +
                std::to_string(round) + ")");
  }
  const bool have_truth = ds.has_unlabelled_truth();
  const std::size_t h = ds.height(), w = ds.width();
  const SceConfig plain_ce{1.0, 0.0, cfg.sce.clamp};
  const SceConfig& unsup_cfg = cfg.sce_enabled ? cfg.sce : plain_ce;

  TrainResult res;
  res.model = init_model(derive_seed(cfg.seed, Stream::kInit), ds.classes);
  OptimState optim = make_optim_state(res.model, cfg.base_lr, cfg.poly_power, cfg.steps,
                                      cfg.momentum, cfg.weight_decay);
  Rng lab_rng = make_rng(cfg.seed, Stream::kLabelledBatches);
  Rng unl_rng = make_rng(cfg.seed, Stream::kUnlabelledBatches);
  Rng mask_rng = make_rng(cfg.seed, Stream::kMasks);
  const std::size_t n_u = cfg.batch_unlabelled;

  std::vector<Image> src_img(n_u);
  std::vector<PseudoLabelRecord> src_rec(n_u);
  std::vector<WeightMap> src_w(n_u);
  double last_sup = 0.0;
  std::optional<double> last_unsup;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    ModelGrads<float> grads = zero_grads(res.model);
    const SupervisedBatch sup = labelled_batch(cfg, res.model, ds, lab_rng, grads);
    check_finite(sup.loss, "supervised", round, step);
    last_sup = sup.loss;

    std::optional<double> unsup_loss;
    const bool log_now = cfg.eval_every && step % cfg.eval_every == 0;
    SeparationAccumulator sep;
    if (n_u > 0) {
      // Unperturbed sources: pick, flip, weight.
      for (std::size_t j = 0; j < n_u; ++j) {
        const std::size_t idx = uniform_index(unl_rng, ds.unlabelled.size());
        const bool flip = cfg.hflip && (unl_rng() & 1U);
        src_img[j] = flip ? hflip(ds.unlabelled[idx]) : ds.unlabelled[idx];
        src_rec[j] = flip ? hflip(records[idx]) : records[idx];
        src_w[j] = cfg.weighting ? compute_weights(res.model, src_img[j], src_rec[j])
                                 : validity_weights(src_rec[j]);
        if (log_now && have_truth) {
          const LabelMask& t = ds.unlabelled_truth[idx];
          sep.add(src_w[j], src_rec[j], flip ? hflip(t) : t);
        }
      }
      double total = 0.0;
      const float scale = 1.0f / static_cast<float>(n_u);
      for (std::size_t j = 0; j < n_u; ++j) {
        const std::size_t k = (j + 1) % n_u;
        MixResult mixed;
        if (cfg.mixing == MixMode::kNone) {
          mixed = {src_img[j], src_rec[j].effective_labels(), src_w[j]};
        } else {
          mixed = mix(src_img[j], src_img[k], src_rec[j].effective_labels(),
                      src_rec[k].effective_labels(), src_w[j], src_w[k], draw_mask(cfg, h, w, mask_rng));
        }
        const Activations<float> acts = forward_train(res.model, to_input<float>(mixed.image));
        const LossResult<float> l =
            weighted_sce(softmax_channel(acts.logits), mixed.labels, mixed.weights, unsup_cfg);
        if (l.counted == 0) continue;
        total += static_cast<double>(l.loss) / static_cast<double>(n_u);
        accumulate(grads, backward(res.model, acts, l.grad_logits), scale);
      }
      check_finite(total, "unsupervised", round, step);
      unsup_loss = total;
    }
    last_unsup = unsup_loss;

    const double lr = poly_lr(optim, step);
    sgd_step(res.model, grads, optim, step);
    if (log_now) {
      const WeightSeparation s = sep.result();
      res.log.push_back({round, step, lr, sup.loss, unsup_loss, maybe_eval(res.model, ds),
                         s.mean_correct, s.mean_wrong});
    }
  }

  res.miou = maybe_eval(res.model, ds);
  if (have_truth) {
    res.weights = weight_separation(res.model, ds.unlabelled, records, ds.unlabelled_truth);
  }
  res.log.push_back({round, cfg.steps, 0.0, last_sup, last_unsup, res.miou,
                     res.weights.mean_correct, res.weights.mean_wrong});
  return res;
}

TrainResult ssl_round(const TrainConfig& cfg, const SegModel& teacher, const Dataset& ds,
                      std::size_t round) {
  if (teacher.classes() != ds.classes) {
    throw ArgumentError("ssl_round: teacher has " + std::to_string(teacher.classes()) +
                        " classes, dataset has " + std::to_string(ds.classes));
  }
  if (ds.unlabelled.empty()) throw ArgumentError("ssl_round: unlabelled split is empty");
  const auto records = make_pseudo_labels(cfg, teacher, ds);
  return train_student(cfg, records, ds, round);
}

IterateResult iterate_from(const TrainConfig& cfg, const Dataset& ds, TrainResult baseline) {
  cfg.validate();
  IterateResult out;
  out.log = baseline.log;
  out.rounds.push_back({0, std::move(baseline.model), baseline.miou, {}});
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    TrainResult res = ssl_round(cfg, out.rounds.back().model, ds, r);
    out.log.insert(out.log.end(), res.log.begin(), res.log.end());
    out.rounds.push_back({r, std::move(res.model), res.miou, res.weights});
  }
  return out;
}

IterateResult iterate(const TrainConfig& cfg, const Dataset& ds) {
  return iterate_from(cfg, ds, train_supervised(cfg, ds));
}

std::vector<DecileRun> decile_experiment(const TrainConfig& cfg, const SegModel& teacher,
                                         const Dataset& ds, std::span<const std::size_t> deciles) {
  TrainConfig unfiltered = cfg;
  unfiltered.filter_q = 0.0;
  const auto records = make_pseudo_labels(unfiltered, teacher, ds);
  const auto subsets = decile_split(records, ds.classes);

  std::vector<std::size_t> chosen(deciles.begin(), deciles.end());
  if (chosen.empty()) {
    for (std::size_t d = 1; d <= kDeciles; ++d) chosen.push_back(d);
  }
  std::vector<DecileRun> runs;
  for (std::size_t d : chosen) {
    if (d < 1 || d > kDeciles) throw ArgumentError("decile_experiment: decile must be in 1..10");
    const auto subset = with_validity(records, subsets[d - 1]);
    DecileRun run;
    run.decile = d;
    for (const auto& r : subset) run.pixel_count += r.valid_count();
    if (ds.has_unlabelled_truth()) {
      run.precision = mean_precision(subset, ds.unlabelled_truth, ds.classes);
    }
    run.miou = train_student(unfiltered, subset, ds, d).miou;
    runs.push_back(run);
  }
  return runs;
}

std::string decile_experiment_csv(std::span<const DecileRun> runs) {
  std::ostringstream os;
  os << "decile,pixel_count,precision,miou\n";
  for (const auto& r : runs) {
    os << r.decile << ',' << r.pixel_count << ',' << detail::fmt_optional(r.precision) << ','
       << detail::fmt_optional(r.miou) << '\n';
  }
  return os.str();
}

}  // namespace cssl
