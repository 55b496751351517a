#include <benchmark/benchmark.h>

#include "weatherseg/embedder.hpp"
#include "weatherseg/rng.hpp"
#include "weatherseg/scenegen.hpp"
#include "weatherseg/segnet.hpp"
#include "weatherseg/trainer.hpp"
#include "weatherseg/weathersim.hpp"

namespace ws = weatherseg;

namespace {

ws::scene::SceneConfig scene_config(int side) {
  ws::scene::SceneConfig c;
  c.height = c.width = side;
  return c;
}

void BM_ConvForward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  ws::Rng rng(1);
  ws::nn::Conv2d<float> conv("c", "g", 32, 32, 3, 1, 1);
  conv.init(rng);
  ws::nn::Feature<float> x(32, side, side);
  x.data.setRandom();
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, nullptr));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_ConvForward)->Arg(16)->Arg(32)->Arg(64);

void BM_ComposeWeather(benchmark::State& state) {
  const auto pair = ws::scene::generate_pair(3, scene_config(static_cast<int>(state.range(0))),
                                             ws::scene::default_weather_config());
  const auto& recipe = pair.degraded.front().recipe;
  for (auto _ : state) benchmark::DoNotOptimize(ws::weather::compose_weather(pair.clear, recipe));
}
BENCHMARK(BM_ComposeWeather)->Arg(64)->Arg(256);

void BM_GeneratePair(benchmark::State& state) {
  const auto sc = scene_config(64);
  const auto wc = ws::scene::default_weather_config();
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(ws::scene::generate_pair(seed++, sc, wc));
}
BENCHMARK(BM_GeneratePair);

void BM_MockEmbedImage(benchmark::State& state) {
  const ws::embed::MockBackend backend(static_cast<int>(state.range(0)));
  const ws::Image image = ws::scene::generate_scene(5, scene_config(64)).image;
  for (auto _ : state) benchmark::DoNotOptimize(backend.embed_image(image));
}
BENCHMARK(BM_MockEmbedImage)->Arg(64)->Arg(512);

// One optimizer step of the desk-scale guided network on a batch of 8.
void BM_SegNetTrainStep(benchmark::State& state) {
  ws::seg::NetworkConfig nc;
  nc.channels = {16, 32, 64, 128};
  nc.inject_after = {1, 2, 3};
  nc.heads = 2;
  nc.head_dim = 16;
  nc.decoder_channels = 32;
  nc.classes = 6;
  nc.aux_stage = 3;
  nc.guidance = state.range(0) ? ws::guide::Mode::kBlended : ws::guide::Mode::kNone;
  const ws::embed::MockBackend backend(64);
  const auto bank = ws::embed::build_concept_bank(ws::embed::default_concepts(), backend);
  ws::seg::SegNet<float> net(nc, bank.embeddings.cast<float>(), 1);

  std::vector<ws::train::Example<float>> data;
  for (int i = 0; i < 8; ++i) {
    const auto s = ws::scene::generate_scene(static_cast<std::uint64_t>(i), scene_config(64));
    ws::train::Example<float> e;
    e.input = ws::seg::image_to_feature<float>(s.image);
    e.labels = s.labels;
    e.guidance.image_embedding = backend.embed_image(s.image).transpose().cast<float>();
    data.push_back(std::move(e));
  }
  std::vector<const ws::train::Example<float>*> batch;
  for (const auto& e : data) batch.push_back(&e);

  ws::train::TrainConfig tc;
  tc.batch_size = 8;
  ws::train::Trainer<float> trainer(net, tc);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(batch, 1e-3));
  state.SetLabel(state.range(0) ? "guided" : "baseline");
}
BENCHMARK(BM_SegNetTrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
