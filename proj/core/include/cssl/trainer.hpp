#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cssl/cowmask.hpp"
#include "cssl/loss.hpp"
#include "cssl/metrics.hpp"
#include "cssl/model.hpp"
#include "cssl/pseudolabel.hpp"
#include "cssl/synthdata.hpp"

namespace cssl {

/// One self-training configuration. The flag combination selects a row of the
/// ablation grid (see ablation_preset()).
struct TrainConfig {
  std::size_t steps = 1000;  // SGD steps per round, also the poly horizon
  double base_lr = 0.005;  // 0.01 collapses classes under SCE on the toy data
  double poly_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_labelled = 2;
  std::size_t batch_unlabelled = 6;
  SceConfig sce;
  double filter_q = 0.0;     // 0 disables filtering
  bool weighting = false;    // student-confidence weights on pseudo-labels
  bool sce_enabled = false;  // symmetric CE on pseudo-labels, else plain CE
  MixMode mixing = MixMode::kCow;
  std::size_t rounds = 1;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // 0 evaluates only at the end of a round
  bool hflip = true;
  std::size_t ensemble_views = 1;

  void validate() const;
};

/// Applies a named ablation row on top of `base`:
/// "ST", "ST_CM", "ST_CM_PLF", "ST_CM_PLW", "ST_CM_PLW_SCE", "ST_CM_PLF_PLW_SCE", "FULL".
TrainConfig ablation_preset(std::string_view row, TrainConfig base = {});

std::string_view to_string(MixMode mode);
MixMode parse_mix_mode(std::string_view name);

struct MetricsRow {
  std::size_t round = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double loss_sup = 0.0;
  std::optional<double> loss_unsup;
  std::optional<double> miou_eval;
  std::optional<double> mean_w_correct;
  std::optional<double> mean_w_wrong;
};

std::string metrics_csv(std::span<const MetricsRow> rows);

struct WeightSeparation {
  std::optional<double> mean_correct;
  std::optional<double> mean_wrong;
  std::size_t correct_pixels = 0;
  std::size_t wrong_pixels = 0;
};

/// Student weights on every valid pseudo-label, split by correctness against truth.
WeightSeparation weight_separation(const SegModel& student, std::span<const Image> images,
                                   std::span<const PseudoLabelRecord> records,
                                   std::span<const LabelMask> truth);

struct TrainResult {
  SegModel model;
  std::vector<MetricsRow> log;
  std::optional<double> miou;  // on the evaluation split, if present
  WeightSeparation weights;    // end-of-round weights on the pseudo-label set
};

ConfusionMatrix evaluate(const SegModel& model, std::span<const Scene> scenes);
double evaluate_miou(const SegModel& model, std::span<const Scene> scenes);

/// Plain SGD on the labelled split from a fresh initialization.
TrainResult train_supervised(const TrainConfig& cfg, const Dataset& dataset);

/// Teacher pseudo-labels for every unlabelled image, filtered when filter_q > 0.
std::vector<PseudoLabelRecord> make_pseudo_labels(const TrainConfig& cfg, const SegModel& teacher,
                                                  const Dataset& dataset);

/// Trains a fresh student on labelled data plus the given pseudo-labels.
TrainResult train_student(const TrainConfig& cfg, std::span<const PseudoLabelRecord> records,
                          const Dataset& dataset, std::size_t round = 1);

/// make_pseudo_labels followed by train_student; the teacher is only read.
TrainResult ssl_round(const TrainConfig& cfg, const SegModel& teacher, const Dataset& dataset,
                      std::size_t round = 1);

struct RoundSummary {
  std::size_t round = 0;
  SegModel model;
  std::optional<double> miou;
  WeightSeparation weights;
};

struct IterateResult {
  std::vector<RoundSummary> rounds;  // rounds[0] is the supervised baseline
  std::vector<MetricsRow> log;
};

/// Baseline, then cfg.rounds self-training rounds, each student becoming the next teacher.
IterateResult iterate(const TrainConfig& cfg, const Dataset& dataset);

/// Same, starting from an already trained baseline.
IterateResult iterate_from(const TrainConfig& cfg, const Dataset& dataset, TrainResult baseline);

struct DecileRun {
  std::size_t decile = 0;  // 1-based, 1 = least confident
  std::size_t pixel_count = 0;
  std::optional<double> precision;  // mean over present classes
  std::optional<double> miou;
};

/// One self-training round per requested decile subset of the teacher's
/// pseudo-labels. An empty `deciles` runs all ten.
std::vector<DecileRun> decile_experiment(const TrainConfig& cfg, const SegModel& teacher,
                                         const Dataset& dataset,
                                         std::span<const std::size_t> deciles = {});

std::string decile_experiment_csv(std::span<const DecileRun> runs);

}  // namespace cssl
