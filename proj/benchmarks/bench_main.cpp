#include <benchmark/benchmark.h>

#include "clld/augment.hpp"
#include "clld/crosssim.hpp"
#include "clld/data.hpp"
#include "clld/encoder.hpp"
#include "clld/trainer.hpp"

using namespace clld;

namespace {

Tensor<float> noise(const Shape& s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(s);
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

void BM_EncoderForward(benchmark::State& state) {
  EncoderConfig c;
  Rng rng(1);
  const auto params = init_encoder_params<float>(c, rng);
  const auto x = noise(Shape{3, 64, 64}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(encoder_forward(params, x, c));
}
BENCHMARK(BM_EncoderForward)->Unit(benchmark::kMillisecond);

void BM_CrossSimilarity(benchmark::State& state) {
  const std::size_t alpha = static_cast<std::size_t>(state.range(0));
  const auto y = noise(Shape{32, 8, 8}, 3), yp = noise(Shape{32, 8, 8}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(cross_similarity(y, yp, alpha));
}
BENCHMARK(BM_CrossSimilarity)->Arg(1)->Arg(2)->Arg(4);

void BM_CrossSimilarityNaive(benchmark::State& state) {
  const std::size_t alpha = static_cast<std::size_t>(state.range(0));
  const auto y = noise(Shape{32, 8, 8}, 3), yp = noise(Shape{32, 8, 8}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(cross_similarity_naive(y, yp, alpha));
}
BENCHMARK(BM_CrossSimilarityNaive)->Arg(1)->Arg(2)->Arg(4);

void BM_PretrainStep(benchmark::State& state) {
  TrainConfig c;
  c.batch_size = static_cast<std::size_t>(state.range(0));
  c.total_steps = 1000000;
  DatasetSpec spec;
  spec.count = 64;
  ImageCorpus corpus;
  for (const auto& s : generate_dataset(spec)) corpus.push_back(normalize_per_channel(s.image));
  auto trainer = init_trainer<float>(c);
  for (auto _ : state) benchmark::DoNotOptimize(pretrain_step(trainer, corpus));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PretrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_GenerateScene(benchmark::State& state) {
  GeneratorConfig c;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_scene(seed++, Scenario::kOccluded, c));
}
BENCHMARK(BM_GenerateScene);

}  // namespace

BENCHMARK_MAIN();
