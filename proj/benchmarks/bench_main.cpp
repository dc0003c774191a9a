#include <benchmark/benchmark.h>

#include <cssl/cowmask.hpp>
#include <cssl/loss.hpp>
#include <cssl/model.hpp>
#include <cssl/pseudolabel.hpp>
#include <cssl/synthdata.hpp>
#include <cssl/trainer.hpp>

using namespace cssl;

namespace {

const Scene& scene() {
  static const Scene s = generate_scene(1, 48, 48, 4);
  return s;
}

void BM_Forward(benchmark::State& state) {
  const SegModel m = init_model(1, 4);
  const auto x = to_input<float>(scene().image);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, x));
}
BENCHMARK(BM_Forward);

void BM_ForwardBackward(benchmark::State& state) {
  const SegModel m = init_model(1, 4);
  const auto x = to_input<float>(scene().image);
  for (auto _ : state) {
    const auto acts = forward_train(m, x);
    const auto loss = cross_entropy(softmax_channel(acts.logits), scene().mask);
    benchmark::DoNotOptimize(backward(m, acts, loss.grad_logits));
  }
}
BENCHMARK(BM_ForwardBackward);

// One supervised SGD step: 2 labelled images.
void BM_SupervisedStep(benchmark::State& state) {
  SegModel m = init_model(1, 4);
  OptimState opt = make_optim_state(m, 0.005, 0.9, 1u << 30);
  const auto x = to_input<float>(scene().image);
  std::size_t it = 0;
  for (auto _ : state) {
    auto g = zero_grads(m);
    for (int b = 0; b < 2; ++b) {
      const auto acts = forward_train(m, x);
      accumulate(g, backward(m, acts, cross_entropy(softmax_channel(acts.logits), scene().mask).grad_logits), 0.5f);
    }
    sgd_step(m, g, opt, it++);
  }
}
BENCHMARK(BM_SupervisedStep);

void BM_PseudoLabels(benchmark::State& state) {
  const SegModel m = init_model(1, 4);
  const auto views = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ensemble_confidence(m, scene().image, views));
}
BENCHMARK(BM_PseudoLabels)->Arg(1)->Arg(2);

void BM_CowMask(benchmark::State& state) {
  const auto sigma = static_cast<double>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_cowmask(48, 48, sigma, 0.5, seed++));
}
BENCHMARK(BM_CowMask)->Arg(4)->Arg(16);

void BM_Mix(benchmark::State& state) {
  const Scene other = generate_scene(2, 48, 48, 4);
  const WeightMap w(48, 48, 1.0f);
  const CowMask m = generate_cowmask(48, 48, 8.0, 0.5, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(mix(scene().image, other.image, scene().mask, other.mask, w, w, m));
}
BENCHMARK(BM_Mix);

// A short self-training round on a small dataset, end to end.
void BM_SslRound(benchmark::State& state) {
  const Dataset ds = generate_dataset(1, 2, 12, 48, 48, 4, 0);
  const SegModel teacher = init_model(1, 4);
  TrainConfig cfg = ablation_preset("ST_CM_PLF_PLW_SCE");
  cfg.steps = 20;
  for (auto _ : state) benchmark::DoNotOptimize(ssl_round(cfg, teacher, ds));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * cfg.steps));
}
BENCHMARK(BM_SslRound)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
