#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "weatherseg/dataset_io.hpp"
#include "weatherseg/error.hpp"
#include "weatherseg/scenegen.hpp"
#include "weatherseg/weathersim.hpp"

namespace ws = weatherseg;
namespace fs = std::filesystem;
using namespace weatherseg::scene;
using ws::weather::Effect;

namespace {

WeatherConfig only(std::vector<std::vector<Effect>> sets) {
  WeatherConfig w = default_weather_config();
  w.effect_sets.clear();
  for (auto& s : sets) w.effect_sets.push_back({s, 1.0});
  return w;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("weatherseg_unit_" + name);
  fs::remove_all(p);
  return p;
}

DatasetConfig small_dataset() {
  DatasetConfig c;
  c.scene.height = c.scene.width = 32;
  c.weather = default_weather_config();
  c.weather.variants_per_scene = 2;
  c.train_scenes = 6;
  c.test_scenes = 4;
  c.global_seed = 21;
  return c;
}

}  // namespace

TEST(Scene, DeterministicPerSeed) {
  const SceneConfig c;
  const Scene a = generate_scene(5, c), b = generate_scene(5, c);
  EXPECT_EQ(a.image.to_bytes(), b.image.to_bytes());
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.image, generate_scene(6, c).image);
}

TEST(Scene, SkyAndTerrainOnly) {
  SceneConfig c;
  c.classes.resize(2);
  const Scene s = generate_scene(3, c);
  const std::set<int> ids(s.labels.data().begin(), s.labels.data().end());
  EXPECT_EQ(ids, (std::set<int>{0, 1}));
}

TEST(Scene, EveryClassCommonAtDefaults) {
  const SceneConfig c;
  std::vector<int> present(c.num_classes(), 0);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Scene s = generate_scene(seed, c);
    std::vector<bool> seen(c.num_classes(), false);
    for (auto v : s.labels.data()) seen[v] = true;
    for (int k = 0; k < c.num_classes(); ++k) present[k] += seen[k];
  }
  for (int k = 0; k < c.num_classes(); ++k) EXPECT_GE(present[k], 300) << c.classes[k].name;
}

TEST(Pair, DegenerateFogKeepsClearImage) {
  WeatherConfig w = only({{Effect::kFog}});
  w.fixed_depth = ws::weather::DepthSpec{ws::weather::DepthKind::kPlanar, 0.0, 0.0, {}};
  const PairedSample p = generate_pair(8, SceneConfig{}, w);
  ASSERT_EQ(p.degraded.size(), 1u);
  EXPECT_EQ(p.degraded[0].image, p.clear);
}

TEST(Pair, MultiEffectFractionFollowsWeights) {
  SceneConfig sc;
  sc.height = sc.width = 16;
  const WeatherConfig w = only({{Effect::kRain}, {Effect::kRain, Effect::kFog}});
  int multi = 0;
  for (int i = 0; i < 1000; ++i) multi += generate_pair(sample_seed(1, "x", i), sc, w).degraded[0].recipe.is_multi_effect();
  EXPECT_GE(multi, 450);
  EXPECT_LE(multi, 550);
}

TEST(Pair, EmptyEffectSetsRejected) {
  WeatherConfig w = default_weather_config();
  w.effect_sets.clear();
  EXPECT_THROW(generate_pair(1, SceneConfig{}, w), ws::InvalidInput);
}

TEST(Pair, StoredRecipeReproducesVariant) {
  WeatherConfig w = default_weather_config();
  w.variants_per_scene = 3;
  const PairedSample p = generate_pair(44, SceneConfig{}, w);
  ASSERT_EQ(p.degraded.size(), 3u);
  for (const auto& v : p.degraded) {
    const auto r = ws::weather::compose_weather(p.clear, v.recipe);
    EXPECT_EQ(r.image.quantized(), v.image);
  }
}

TEST(Stratify, AllFogHasNoMulti) {
  std::vector<PairedSample> s;
  for (int i = 0; i < 5; ++i) s.push_back(generate_pair(i, SceneConfig{}, only({{Effect::kFog}}), sample_id(i)));
  const Strata st = stratify(summarize_split(s));
  EXPECT_TRUE(st.multi.empty());
  EXPECT_EQ(st.single.size(), 5u);
}

TEST(Stratify, MultiOnlyHasNoSingle) {
  std::vector<PairedSample> s;
  for (int i = 0; i < 5; ++i)
    s.push_back(generate_pair(i, SceneConfig{}, only({{Effect::kRain, Effect::kFog}}), sample_id(i)));
  const Strata st = stratify(summarize_split(s));
  EXPECT_TRUE(st.single.empty());
  EXPECT_EQ(st.multi.size(), 5u);
}

TEST(Stratify, MixedPartitionIsTotal) {
  const Dataset d = generate_dataset(small_dataset());
  const auto& split = d.manifest.splits.at("train");
  const Strata st = stratify(split);
  EXPECT_EQ(st.single.size() + st.multi.size(), split.variants.size());
  std::set<VariantRef> all(st.single.begin(), st.single.end());
  all.insert(st.multi.begin(), st.multi.end());
  EXPECT_EQ(all.size(), split.variants.size());
}

TEST(Dataset, RoundTrip) {
  const fs::path root = temp_dir("roundtrip");
  const Dataset d = generate_dataset(small_dataset());
  write_dataset(d, root);
  const Dataset back = load_dataset(root, {.verify_render = true});
  ASSERT_EQ(back.train.size(), d.train.size());
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    EXPECT_EQ(back.train[i].labels, d.train[i].labels);
    EXPECT_EQ(back.train[i].clear, d.train[i].clear);
    for (std::size_t k = 0; k < d.train[i].degraded.size(); ++k) {
      EXPECT_EQ(back.train[i].degraded[k].image, d.train[i].degraded[k].image);
      EXPECT_EQ(ws::scene::recipe_to_json(back.train[i].degraded[k].recipe),
                ws::scene::recipe_to_json(d.train[i].degraded[k].recipe));
    }
  }
  // Second write is byte-identical.
  const fs::path again = temp_dir("roundtrip2");
  write_dataset(back, again);
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream a(e.path(), std::ios::binary), b(again / fs::relative(e.path(), root), std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_EQ(sa, sb) << e.path();
  }
}

TEST(Dataset, ManifestCountsMatchRecount) {
  const Dataset d = generate_dataset(small_dataset());
  for (const char* split : {"train", "test"}) {
    std::map<std::string, int> recount;
    for (const auto& s : d.split(split))
      for (const auto& v : s.degraded) ++recount[ws::weather::effect_set_name(v.recipe.effects)];
    EXPECT_EQ(recount, d.manifest.splits.at(split).effect_set_counts) << split;
  }
}

TEST(Dataset, CorruptLabelsNameSample) {
  const fs::path root = temp_dir("corrupt");
  write_dataset(generate_dataset(small_dataset()), root);
  std::ofstream(root / "train" / "scene_00003" / "labels.png", std::ios::binary) << "not a png";
  try {
    load_dataset(root);
    FAIL() << "expected DataError";
  } catch (const ws::DataError& e) {
    EXPECT_EQ(e.sample(), "train/00003");
  }
}

TEST(Dataset, MissingManifestRejected) {
  const fs::path root = temp_dir("missing");
  fs::create_directories(root);
  EXPECT_THROW(load_dataset(root), ws::DataError);
}

TEST(Dataset, DeterministicFromSeed) {
  const Dataset a = generate_dataset(small_dataset()), b = generate_dataset(small_dataset());
  EXPECT_EQ(manifest_to_json(a.manifest), manifest_to_json(b.manifest));
  for (std::size_t i = 0; i < a.test.size(); ++i) EXPECT_EQ(a.test[i].degraded[0].image, b.test[i].degraded[0].image);
}
