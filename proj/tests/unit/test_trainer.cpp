#include <gtest/gtest.h>

#include <algorithm>

#include <cssl/error.hpp>
#include <cssl/trainer.hpp>

using namespace cssl;

namespace {

TrainConfig small_config(std::size_t steps = 30) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.seed = 3;
  cfg.batch_unlabelled = 2;
  cfg.eval_every = 10;
  return cfg;
}

const Dataset& small_dataset() {
  static const Dataset ds = generate_dataset(5, 2, 6, 24, 24, 3, 3);
  return ds;
}

}  // namespace

TEST(Config, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.filter_q = 1.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.momentum = 1.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.rounds = 0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
}

TEST(Presets, AblationRows) {
  const auto st = ablation_preset("ST");
  EXPECT_EQ(st.mixing, MixMode::kNone);
  EXPECT_FALSE(st.weighting);
  EXPECT_FALSE(st.sce_enabled);
  EXPECT_EQ(st.filter_q, 0.0);

  const auto full = ablation_preset("FULL");
  EXPECT_EQ(full.mixing, MixMode::kCow);
  EXPECT_TRUE(full.weighting);
  EXPECT_TRUE(full.sce_enabled);
  EXPECT_DOUBLE_EQ(full.filter_q, 0.2);
  EXPECT_EQ(full.rounds, 3u);

  EXPECT_DOUBLE_EQ(ablation_preset("ST_CM_PLF").filter_q, 0.2);
  EXPECT_TRUE(ablation_preset("ST_CM_PLW").weighting);
  EXPECT_FALSE(ablation_preset("ST_CM_PLW").sce_enabled);
  EXPECT_THROW(ablation_preset("nope"), ArgumentError);

  TrainConfig base;
  base.steps = 17;
  EXPECT_EQ(ablation_preset("ST_CM", base).steps, 17u);
}

TEST(Presets, MixModeNames) {
  for (auto m : {MixMode::kNone, MixMode::kCow, MixMode::kCutMix})
    EXPECT_EQ(parse_mix_mode(to_string(m)), m);
  EXPECT_THROW(parse_mix_mode("blend"), ArgumentError);
}

TEST(Supervised, DeterministicCheckpointAndLog) {
  const auto a = train_supervised(small_config(), small_dataset());
  const auto b = train_supervised(small_config(), small_dataset());
  EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));
  EXPECT_EQ(metrics_csv(a.log), metrics_csv(b.log));
  auto other = small_config();
  other.seed = 4;
  EXPECT_NE(serialize_model(train_supervised(other, small_dataset()).model),
            serialize_model(a.model));
}

TEST(Supervised, LossDecreases) {
  auto cfg = small_config(300);
  cfg.eval_every = 1;
  const auto res = train_supervised(cfg, small_dataset());
  auto window = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t i = from; i < from + 50; ++i) s += res.log[i].loss_sup;
    return s / 50.0;
  };
  EXPECT_LT(window(res.log.size() - 51), window(0));
}

TEST(Supervised, RejectsEmptyLabelled) {
  Dataset ds = small_dataset();
  ds.labelled.clear();
  EXPECT_THROW(train_supervised(small_config(), ds), ArgumentError);
}

TEST(Student, NoUnlabelledBatchMatchesSupervised) {
  auto cfg = ablation_preset("FULL", small_config());
  cfg.batch_unlabelled = 0;
  const auto sup = train_supervised(cfg, small_dataset());
  const auto base = train_supervised(small_config(5), small_dataset());
  const auto records = make_pseudo_labels(cfg, base.model, small_dataset());
  const auto stu = train_student(cfg, records, small_dataset());
  EXPECT_EQ(serialize_model(stu.model), serialize_model(sup.model));
}

TEST(Student, DeterministicAndTeacherUntouched) {
  const auto cfg = ablation_preset("FULL", small_config());
  const auto base = train_supervised(small_config(), small_dataset());
  const auto before = serialize_model(base.model);
  const auto a = ssl_round(cfg, base.model, small_dataset());
  const auto b = ssl_round(cfg, base.model, small_dataset());
  EXPECT_EQ(serialize_model(base.model), before);
  EXPECT_EQ(serialize_model(a.model), serialize_model(b.model));
  EXPECT_EQ(metrics_csv(a.log), metrics_csv(b.log));
  EXPECT_TRUE(a.weights.mean_correct.has_value());
}

TEST(Student, AllRowsRun) {
  const auto base = train_supervised(small_config(), small_dataset());
  for (const char* row : {"ST", "ST_CM", "ST_CM_PLF", "ST_CM_PLW", "ST_CM_PLW_SCE", "ST_CM_PLF_PLW_SCE"}) {
    auto cfg = ablation_preset(row, small_config(10));
    const auto res = ssl_round(cfg, base.model, small_dataset());
    ASSERT_TRUE(res.miou.has_value()) << row;
    EXPECT_GE(*res.miou, 0.0);
  }
  auto cut = ablation_preset("ST_CM", small_config(10));
  cut.mixing = MixMode::kCutMix;
  EXPECT_NO_THROW(ssl_round(cut, base.model, small_dataset()));
}

TEST(Student, EmptyPseudoSetAborts) {
  const auto base = train_supervised(small_config(5), small_dataset());
  auto records = make_pseudo_labels(small_config(), base.model, small_dataset());
  for (auto& r : records) std::fill(r.valid.begin(), r.valid.end(), 0);
  EXPECT_THROW(train_student(small_config(), records, small_dataset()), Error);
  records.pop_back();
  EXPECT_THROW(train_student(small_config(), records, small_dataset()), ShapeError);
}

TEST(Student, RejectsMismatchedTeacher) {
  const auto teacher = init_model(1, 5);
  EXPECT_THROW(ssl_round(small_config(), teacher, small_dataset()), ArgumentError);
}

TEST(PseudoLabels, FilterOnlyInvalidates) {
  const auto base = train_supervised(small_config(), small_dataset());
  auto cfg = small_config();
  const auto plain = make_pseudo_labels(cfg, base.model, small_dataset());
  cfg.filter_q = 0.2;
  const auto filtered = make_pseudo_labels(cfg, base.model, small_dataset());
  ASSERT_EQ(plain.size(), filtered.size());
  std::size_t kept = 0, total = 0;
  for (std::size_t i = 0; i < plain.size(); ++i) {
    EXPECT_EQ(plain[i].labels, filtered[i].labels);
    for (std::size_t p = 0; p < plain[i].valid.size(); ++p) EXPECT_LE(filtered[i].valid[p], plain[i].valid[p]);
    kept += filtered[i].valid_count();
    total += plain[i].valid_count();
  }
  EXPECT_LT(kept, total);
  EXPECT_GE(static_cast<double>(kept), 0.75 * static_cast<double>(total));
}

TEST(Iterate, RoundCountAndLog) {
  auto cfg = ablation_preset("ST_CM_PLW_SCE", small_config(10));
  cfg.rounds = 1;
  auto one = iterate(cfg, small_dataset());
  ASSERT_EQ(one.rounds.size(), 2u);
  EXPECT_EQ(one.rounds[0].round, 0u);
  EXPECT_EQ(one.rounds[1].round, 1u);
  cfg.rounds = 2;
  auto two = iterate(cfg, small_dataset());
  ASSERT_EQ(two.rounds.size(), 3u);
  // Round 1 depends only on the baseline, so it repeats exactly.
  EXPECT_EQ(serialize_model(two.rounds[1].model), serialize_model(one.rounds[1].model));
  std::size_t last_round = 0;
  for (const auto& row : two.log) {
    EXPECT_GE(row.round, last_round);
    last_round = row.round;
  }
  EXPECT_EQ(last_round, 2u);
}

TEST(Metrics, CsvColumnsAndEmptyCells) {
  std::vector<MetricsRow> rows{{0, 5, 0.01, 0.5, std::nullopt, 0.25, std::nullopt, std::nullopt},
                               {1, 7, 0.02, 1.5, 0.75, std::nullopt, 0.9, 0.4}};
  EXPECT_EQ(metrics_csv(rows),
            "round,step,lr,loss_sup,loss_unsup,miou_eval,mean_w_correct,mean_w_wrong\n"
            "0,5,0.01,0.5,,0.25,,\n"
            "1,7,0.02,1.5,0.75,,0.9,0.4\n");
}

TEST(WeightSeparation, SplitsByTruth) {
  const auto& ds = small_dataset();
  const auto student = init_model(9, ds.classes);
  const auto records = make_pseudo_labels(small_config(), student, ds);
  std::vector<LabelMask> truth;
  for (const auto& r : records) truth.push_back(r.labels);
  const auto all_right = weight_separation(student, ds.unlabelled, records, truth);
  EXPECT_EQ(all_right.wrong_pixels, 0u);
  EXPECT_FALSE(all_right.mean_wrong.has_value());
  ASSERT_TRUE(all_right.mean_correct.has_value());
  EXPECT_GT(*all_right.mean_correct, 1.0 / 3.0 - 1e-6);
  EXPECT_THROW(weight_separation(student, ds.unlabelled, records, {}), ShapeError);
}

TEST(Decile, ExperimentShape) {
  const auto base = train_supervised(small_config(), small_dataset());
  const std::size_t chosen[] = {1, 10};
  const auto runs = decile_experiment(small_config(5), base.model, small_dataset(), chosen);
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[0].decile, 1u);
  EXPECT_GT(runs[1].pixel_count, 0u);
  EXPECT_TRUE(runs[0].precision.has_value());
  const std::size_t bad[] = {11};
  EXPECT_THROW(decile_experiment(small_config(5), base.model, small_dataset(), bad), ArgumentError);
  const auto csv = decile_experiment_csv(runs);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
